#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "odyn/ops.hpp"
#include "odyn/tensor.hpp"

namespace odyn::tensor {

enum class LayerKind { dense, conv, transpconv, maxpool, batchnorm, activation, concat };
enum class Activation { relu, sigmoid, linear };

/// One layer of a sequential network in compact notation:
///   conv3x3-1-128, transpconv4x4-[1x2]-256, FC-32, maxpool
/// extended with relu / sigmoid / linear / bn / concat, and an optional
/// padding suffix "-p1", "-p[1x0]" (x, y) or "-p[l,r,t,b]". Two-extent
/// fields are written x-by-y (width first).
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_left = 0, pad_right = 0, pad_top = 0, pad_bottom = 0;
  std::size_t features = 0;
  Activation activation = Activation::linear;

  static LayerSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
  bool weighted() const {
    return kind == LayerKind::dense || kind == LayerKind::conv || kind == LayerKind::transpconv;
  }
  ConvGeometry geometry() const {
    return {stride_h, stride_w, pad_top, pad_bottom, pad_left, pad_right};
  }
  bool operator==(const LayerSpec&) const = default;
};

std::vector<LayerSpec> parse_layers(const std::vector<std::string>& texts);

/// Inserts relu followed by batch norm after every weighted layer except the
/// last one, which stays linear and unnormalized.
std::vector<LayerSpec> with_hidden_activations(std::vector<LayerSpec> weighted);

/// Per-sample output shape of `spec` for a per-sample input shape ([F] or
/// [C, H, W]). Dense layers flatten spatial inputs. Throws ShapeError.
Shape infer_output_shape(const LayerSpec& spec, const Shape& input);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using Rng = std::mt19937_64;

/// A shape-checked stack of layers.
class Sequential {
 public:
  Sequential() = default;
  Sequential(std::string name, std::vector<LayerSpec> layers, Shape input_shape, Rng& rng);
  // Copies would alias parameters.
  Sequential(const Sequential&) = delete;
  Sequential& operator=(const Sequential&) = delete;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  /// x carries a leading batch axis in front of input_shape().
  Tensor forward(const Tensor& x, Mode mode);

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  /// shapes()[i] is the per-sample input of layer i; the last entry is the output.
  const std::vector<Shape>& shapes() const { return shapes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  std::vector<NamedTensor> parameters() const;
  /// Running statistics; saved with checkpoints, never optimized.
  std::vector<NamedTensor> buffers() const;

  /// Zeroes the weights and bias of the final weighted layer.
  void zero_last_layer();

 private:
  struct Slot {
    Tensor weights, bias;                 // weighted layers
    Tensor gamma, beta;                   // batch norm
    BatchNormState norm;
  };
  std::string name_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<Slot> slots_;
};

}  // namespace odyn::tensor
