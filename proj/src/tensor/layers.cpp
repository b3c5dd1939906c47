#include "odyn/layers.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace odyn::tensor {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad(std::string_view text, const std::string& why) {
  throw std::invalid_argument("layer spec '" + std::string(text) + "': " + why);
}

std::size_t number(std::string_view whole, std::string_view token) {
  std::size_t value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc{} || ptr != end || token.empty()) bad(whole, "expected a number, got '" + std::string(token) + "'");
  return value;
}

// "3x2" -> {x = 3, y = 2}; "3" -> {3, 3}. Brackets are optional.
std::pair<std::size_t, std::size_t> pair_xy(std::string_view whole, std::string_view token) {
  if (!token.empty() && token.front() == '[') {
    if (token.back() != ']') bad(whole, "unbalanced bracket");
    token = token.substr(1, token.size() - 2);
  }
  const auto parts = split(token, 'x');
  if (parts.size() == 1) {
    const auto v = number(whole, parts[0]);
    return {v, v};
  }
  if (parts.size() != 2) bad(whole, "expected AxB");
  return {number(whole, parts[0]), number(whole, parts[1])};
}

void parse_padding(std::string_view whole, std::string_view token, LayerSpec& spec) {
  if (token.empty() || token.front() != 'p') bad(whole, "unexpected field '" + std::string(token) + "'");
  token.remove_prefix(1);
  if (token.find(',') != std::string_view::npos) {
    if (token.front() != '[' || token.back() != ']') bad(whole, "padding list needs brackets");
    const auto parts = split(token.substr(1, token.size() - 2), ',');
    if (parts.size() != 4) bad(whole, "padding list needs left,right,top,bottom");
    spec.pad_left = number(whole, parts[0]);
    spec.pad_right = number(whole, parts[1]);
    spec.pad_top = number(whole, parts[2]);
    spec.pad_bottom = number(whole, parts[3]);
    return;
  }
  const auto [px, py] = pair_xy(whole, token);
  spec.pad_left = spec.pad_right = px;
  spec.pad_top = spec.pad_bottom = py;
}

std::string xy(std::size_t x, std::size_t y, bool bracket) {
  if (x == y) return std::to_string(x);
  auto s = std::to_string(x) + "x" + std::to_string(y);
  return bracket ? "[" + s + "]" : s;
}

std::size_t fan_in(const LayerSpec& spec, const Shape& input) {
  switch (spec.kind) {
    case LayerKind::dense: return numel(input);
    case LayerKind::conv: return input[0] * spec.kernel_h * spec.kernel_w;
    case LayerKind::transpconv:
      return std::max<std::size_t>(
          1, input[0] * spec.kernel_h * spec.kernel_w / (spec.stride_h * spec.stride_w));
    default: return 1;
  }
}

}  // namespace

LayerSpec LayerSpec::parse(std::string_view text) {
  LayerSpec spec;
  if (text == "maxpool") {
    spec.kind = LayerKind::maxpool;
    return spec;
  }
  if (text == "relu" || text == "sigmoid" || text == "linear") {
    spec.kind = LayerKind::activation;
    spec.activation = text == "relu" ? Activation::relu
                      : text == "sigmoid" ? Activation::sigmoid
                                          : Activation::linear;
    return spec;
  }
  if (text == "bn" || text == "batchnorm") {
    spec.kind = LayerKind::batchnorm;
    return spec;
  }
  if (text == "concat") {
    spec.kind = LayerKind::concat;
    return spec;
  }
  const auto fields = split(text, '-');
  if (fields[0] == "FC") {
    if (fields.size() != 2) bad(text, "expected FC-<units>");
    spec.kind = LayerKind::dense;
    spec.features = number(text, fields[1]);
    spec.validate();
    return spec;
  }
  std::string_view head = fields[0];
  if (head.starts_with("transpconv")) {
    spec.kind = LayerKind::transpconv;
    head.remove_prefix(std::string_view("transpconv").size());
  } else if (head.starts_with("conv")) {
    spec.kind = LayerKind::conv;
    head.remove_prefix(std::string_view("conv").size());
  } else {
    bad(text, "unknown layer kind");
  }
  if (fields.size() != 3 && fields.size() != 4) bad(text, "expected <kind><k>-<stride>-<maps>");
  std::tie(spec.kernel_w, spec.kernel_h) = pair_xy(text, head);
  std::tie(spec.stride_w, spec.stride_h) = pair_xy(text, fields[1]);
  spec.features = number(text, fields[2]);
  if (fields.size() == 4) parse_padding(text, fields[3], spec);
  spec.validate();
  return spec;
}

std::string LayerSpec::to_string() const {
  switch (kind) {
    case LayerKind::dense: return "FC-" + std::to_string(features);
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::concat: return "concat";
    case LayerKind::activation:
      return activation == Activation::relu ? "relu"
             : activation == Activation::sigmoid ? "sigmoid"
                                                 : "linear";
    case LayerKind::conv:
    case LayerKind::transpconv: break;
  }
  std::string s = kind == LayerKind::conv ? "conv" : "transpconv";
  s += std::to_string(kernel_w) + "x" + std::to_string(kernel_h) + "-" +
       xy(stride_w, stride_h, true) + "-" + std::to_string(features);
  if (pad_left == pad_right && pad_top == pad_bottom) {
    if (pad_left || pad_top) s += "-p" + xy(pad_left, pad_top, true);
  } else {
    s += "-p[" + std::to_string(pad_left) + "," + std::to_string(pad_right) + "," +
         std::to_string(pad_top) + "," + std::to_string(pad_bottom) + "]";
  }
  return s;
}

void LayerSpec::validate() const {
  if (weighted() && features < 1) throw std::invalid_argument(to_string() + ": unit count must be >= 1");
  if (kind == LayerKind::conv || kind == LayerKind::transpconv) {
    if (kernel_h < 1 || kernel_w < 1) throw std::invalid_argument(to_string() + ": kernel extents must be >= 1");
    if (stride_h < 1 || stride_w < 1) throw std::invalid_argument(to_string() + ": strides must be >= 1");
  }
}

std::vector<LayerSpec> parse_layers(const std::vector<std::string>& texts) {
  std::vector<LayerSpec> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(LayerSpec::parse(t));
  return out;
}

std::vector<LayerSpec> with_hidden_activations(std::vector<LayerSpec> weighted) {
  std::size_t last = weighted.size();
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    if (weighted[i].weighted()) last = i;
  }
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    out.push_back(weighted[i]);
    if (weighted[i].weighted() && i != last) {
      out.push_back(LayerSpec::parse("relu"));
      out.push_back(LayerSpec::parse("bn"));
    }
  }
  return out;
}

Shape infer_output_shape(const LayerSpec& spec, const Shape& input) {
  spec.validate();
  if (input.empty() || numel(input) == 0) {
    throw ShapeError(spec.to_string() + ": empty input shape " + to_string(input));
  }
  switch (spec.kind) {
    case LayerKind::dense: return Shape{spec.features};
    case LayerKind::activation:
    case LayerKind::batchnorm: return input;
    case LayerKind::concat:
      throw ShapeError("concat joins several inputs and cannot appear in a sequential stack");
    case LayerKind::maxpool:
      if (input.size() != 3) throw ShapeError("maxpool needs [C, H, W], got " + to_string(input));
      return Shape{input[0], (input[1] + 1) / 2, (input[2] + 1) / 2};
    case LayerKind::conv:
      if (input.size() != 3) throw ShapeError(spec.to_string() + " needs [C, H, W], got " + to_string(input));
      return Shape{spec.features,
                   conv_output_extent(input[1], spec.kernel_h, spec.stride_h, spec.pad_top, spec.pad_bottom),
                   conv_output_extent(input[2], spec.kernel_w, spec.stride_w, spec.pad_left, spec.pad_right)};
    case LayerKind::transpconv:
      if (input.size() != 3) throw ShapeError(spec.to_string() + " needs [C, H, W], got " + to_string(input));
      return Shape{spec.features,
                   transposed_output_extent(input[1], spec.kernel_h, spec.stride_h, spec.pad_top, spec.pad_bottom),
                   transposed_output_extent(input[2], spec.kernel_w, spec.stride_w, spec.pad_left, spec.pad_right)};
  }
  throw std::logic_error("unreachable layer kind");
}

Sequential::Sequential(std::string name, std::vector<LayerSpec> layers, Shape input_shape, Rng& rng)
    : name_(std::move(name)), layers_(std::move(layers)) {
  shapes_.push_back(std::move(input_shape));
  for (const auto& spec : layers_) {
    try {
      shapes_.push_back(infer_output_shape(spec, shapes_.back()));
    } catch (const ShapeError& e) {
      throw ShapeError(name_ + ": " + e.what());
    }
  }
  slots_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    const auto& in = shapes_[i];
    auto& slot = slots_[i];
    if (spec.weighted()) {
      Shape w_shape;
      if (spec.kind == LayerKind::dense) {
        w_shape = {numel(in), spec.features};
      } else if (spec.kind == LayerKind::conv) {
        w_shape = {spec.features, in[0], spec.kernel_h, spec.kernel_w};
      } else {
        w_shape = {in[0], spec.features, spec.kernel_h, spec.kernel_w};
      }
      std::normal_distribution<double> normal(
          0.0, std::sqrt(2.0 / static_cast<double>(fan_in(spec, in))));
      std::vector<real> w(numel(w_shape));
      for (auto& v : w) v = static_cast<real>(normal(rng));
      slot.weights = Tensor(w_shape, std::move(w), true);
      slot.bias = Tensor(Shape{spec.features}, true);
    } else if (spec.kind == LayerKind::batchnorm) {
      const std::size_t c = in[0];
      slot.gamma = Tensor::full(Shape{c}, real(1), true);
      slot.beta = Tensor(Shape{c}, true);
      slot.norm.running_mean = Tensor(Shape{c});
      slot.norm.running_var = Tensor::full(Shape{c}, real(1));
    }
  }
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  const auto& s = x.shape();
  if (s.size() != input_shape().size() + 1 || !std::equal(s.begin() + 1, s.end(), input_shape().begin())) {
    throw ShapeError(name_ + ": input " + to_string(s) + " does not match [batch] + " +
                     to_string(input_shape()));
  }
  const std::size_t batch = s[0];
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    auto& slot = slots_[i];
    switch (spec.kind) {
      case LayerKind::dense:
        if (h.rank() != 2) h = reshape(h, Shape{batch, numel(shapes_[i])});
        h = dense(h, slot.weights, slot.bias);
        break;
      case LayerKind::conv: h = conv2d(h, slot.weights, slot.bias, spec.geometry()); break;
      case LayerKind::transpconv:
        h = conv_transpose2d(h, slot.weights, slot.bias, spec.geometry());
        break;
      case LayerKind::maxpool: h = maxpool2x2(h); break;
      case LayerKind::batchnorm: h = batch_norm(h, slot.gamma, slot.beta, slot.norm, mode); break;
      case LayerKind::activation:
        if (spec.activation == Activation::relu) h = relu(h);
        else if (spec.activation == Activation::sigmoid) h = sigmoid(h);
        break;
      case LayerKind::concat: throw std::logic_error("concat inside Sequential");
    }
  }
  return h;
}

std::vector<NamedTensor> Sequential::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto prefix = name_ + "." + std::to_string(i) + ".";
    const auto& slot = slots_[i];
    if (layers_[i].weighted()) {
      out.push_back({prefix + "weights", slot.weights});
      out.push_back({prefix + "bias", slot.bias});
    } else if (layers_[i].kind == LayerKind::batchnorm) {
      out.push_back({prefix + "gamma", slot.gamma});
      out.push_back({prefix + "beta", slot.beta});
    }
  }
  return out;
}

std::vector<NamedTensor> Sequential::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::batchnorm) continue;
    const auto prefix = name_ + "." + std::to_string(i) + ".";
    out.push_back({prefix + "running_mean", slots_[i].norm.running_mean});
    out.push_back({prefix + "running_var", slots_[i].norm.running_var});
  }
  return out;
}

void Sequential::zero_last_layer() {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (!layers_[i].weighted()) continue;
    for (auto& v : slots_[i].weights.values()) v = 0;
    for (auto& v : slots_[i].bias.values()) v = 0;
    return;
  }
}

}  // namespace odyn::tensor
