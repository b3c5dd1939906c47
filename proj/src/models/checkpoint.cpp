#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "odyn/episode.hpp"
#include "odyn/models.hpp"

namespace odyn::models {

namespace ops = odyn::tensor;
using sim::IoError;
using tensor::ShapeError;

namespace {

constexpr char magic[4] = {'O', 'D', 'C', 'K'};
// Guards against absurd allocations when reading damaged files.
constexpr std::uint64_t max_elements = std::uint64_t{1} << 32;

template <typename T>
void put(std::vector<std::uint8_t>& out, const T* data, std::size_t count) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + count * sizeof(T));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) { put(out, &v, 1); }
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) { put(out, &v, 1); }

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  put(out, s.data(), s.size());
}

void put_f32(std::vector<std::uint8_t>& out, std::span<const real> values) {
  std::vector<float> f(values.begin(), values.end());
  put(out, f.data(), f.size());
}

void put_tensors(std::vector<std::uint8_t>& out, const std::vector<NamedTensor>& tensors) {
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    put_f32(out, t.values());
  }
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t at = 0;
  const std::string& origin;

  template <typename T>
  void get(T* data, std::size_t count) {
    const std::size_t n = count * sizeof(T);
    if (n > bytes.size() - at) throw IoError(origin + ": truncated checkpoint");
    std::memcpy(data, bytes.data() + at, n);
    at += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    get(&v, 1);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    get(&v, 1);
    return v;
  }
  std::string string() {
    std::string s(u32(), '\0');
    get(s.data(), s.size());
    return s;
  }
  std::vector<real> f32(std::uint64_t count) {
    if (count > max_elements || count * sizeof(float) > bytes.size() - at) {
      throw IoError(origin + ": truncated checkpoint");
    }
    std::vector<float> f(count);
    get(f.data(), f.size());
    return {f.begin(), f.end()};
  }
  std::vector<NamedTensor> tensors() {
    std::vector<NamedTensor> out(u32());
    for (auto& nt : out) {
      nt.name = string();
      Shape shape(u32());
      for (auto& d : shape) {
        d = u64();
        if (d > max_elements) throw IoError(origin + ": implausible extent in tensor " + nt.name);
      }
      const std::uint64_t count = ops::numel(shape);
      nt.tensor = Tensor(shape, f32(count));
    }
    return out;
  }
};

std::uint32_t feedback_code(const std::optional<Feedback>& f) {
  if (!f) return 0;
  return *f == Feedback::latent ? 1 : 2;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  put(out, magic, 4);
  put_u32(out, checkpoint_version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.model.variant));
  put_u32(out, static_cast<std::uint32_t>(ckpt.model.preset));
  put_u32(out, static_cast<std::uint32_t>(ckpt.model.width));
  put_u32(out, static_cast<std::uint32_t>(ckpt.model.height));
  put_u32(out, feedback_code(ckpt.model.feedback));
  put_u32(out, ckpt.stage);
  put_u32(out, ckpt.horizon);
  put_string(out, ckpt.train_config);
  put_tensors(out, ckpt.parameters);
  put_tensors(out, ckpt.buffers);
  if (!ckpt.adam.first.empty() && ckpt.adam.first.size() != ckpt.parameters.size()) {
    throw ShapeError("write_checkpoint: optimizer state covers " + std::to_string(ckpt.adam.first.size()) +
                     " tensors but " + std::to_string(ckpt.parameters.size()) + " parameters are saved");
  }
  put_u64(out, ckpt.adam.step);
  put_u32(out, static_cast<std::uint32_t>(ckpt.adam.first.size()));
  for (std::size_t i = 0; i < ckpt.adam.first.size(); ++i) {
    put_u64(out, ckpt.adam.first[i].size());
    put_f32(out, ckpt.adam.first[i]);
    put_f32(out, ckpt.adam.second[i]);
  }
  put_tensors(out, ckpt.latent_target);

  // Written beside the target and renamed so an interrupted run never leaves
  // a half-written checkpoint under the final name.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError(path.string() + ": cannot open for writing");
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": cannot move checkpoint into place: " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string origin = path.string();
  Reader r{bytes, 0, origin};

  char head[4];
  r.get(head, 4);
  if (std::memcmp(head, magic, 4) != 0) throw IoError(origin + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != checkpoint_version) throw IoError(origin + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint c;
  const std::uint32_t variant = r.u32();
  if (variant >= all_variants().size()) throw IoError(origin + ": unknown variant code " + std::to_string(variant));
  c.model.variant = static_cast<Variant>(variant);
  const std::uint32_t preset = r.u32();
  if (preset > 1) throw IoError(origin + ": unknown preset code " + std::to_string(preset));
  c.model.preset = static_cast<Preset>(preset);
  c.model.width = r.u32();
  c.model.height = r.u32();
  switch (r.u32()) {
    case 0: break;
    case 1: c.model.feedback = Feedback::latent; break;
    case 2: c.model.feedback = Feedback::reencode; break;
    default: throw IoError(origin + ": unknown feedback code");
  }
  c.stage = r.u32();
  c.horizon = r.u32();
  c.train_config = r.string();
  c.parameters = r.tensors();
  c.buffers = r.tensors();
  c.adam.step = r.u64();
  const std::uint32_t moments = r.u32();
  if (moments != 0 && moments != c.parameters.size()) throw IoError(origin + ": optimizer state does not match parameters");
  for (std::uint32_t i = 0; i < moments; ++i) {
    const std::uint64_t count = r.u64();
    if (count != ops::numel(c.parameters[i].tensor.shape())) throw IoError(origin + ": optimizer moment size mismatch");
    c.adam.first.push_back(r.f32(count));
    c.adam.second.push_back(r.f32(count));
  }
  c.latent_target = r.tensors();
  if (r.at != bytes.size()) throw IoError(origin + ": trailing bytes after the checkpoint");
  return c;
}

void load_named(const std::vector<NamedTensor>& from, const std::vector<NamedTensor>& into) {
  for (const auto& dst : into) {
    const auto it = std::find_if(from.begin(), from.end(), [&](const NamedTensor& s) { return s.name == dst.name; });
    if (it == from.end()) throw ShapeError("load_named: no value for " + dst.name);
    if (it->tensor.shape() != dst.tensor.shape()) {
      throw ShapeError("load_named: " + dst.name + " is " + ops::to_string(dst.tensor.shape()) + " but the source is " +
                       ops::to_string(it->tensor.shape()));
    }
    const auto src = it->tensor.values();
    Tensor handle = dst.tensor;
    auto out = handle.values();
    std::copy(src.begin(), src.end(), out.begin());
  }
}

}  // namespace odyn::models
