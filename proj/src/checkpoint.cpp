#include "medgan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "medgan/digest.hpp"
#include "medgan/errors.hpp"

namespace medgan {
namespace {

constexpr char kMagic[4] = {'M', 'G', 'C', 'K'};
constexpr std::size_t kDigestBytes = 32;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::byte>& buffer() { return out_; }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  Reader(const std::byte* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw CorruptionError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::byte* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IncompatibilityError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const std::string meta = ckpt.metadata.dump();
  w.u64(meta.size());
  w.bytes(meta.data(), meta.size());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (float v : t.values()) w.f32(v);
  }
  auto& buf = w.buffer();
  Sha256 h;
  h.update(buf.data(), buf.size());
  const auto digest = h.digest();
  buf.insert(buf.end(), digest.begin(), digest.end());
  return buf;
}

Checkpoint deserialize_checkpoint(const std::vector<std::byte>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 4 + kDigestBytes) throw CorruptionError("checkpoint too short");
  const std::size_t body = bytes.size() - kDigestBytes;
  {
    Sha256 h;
    h.update(bytes.data(), body);
    const auto digest = h.digest();
    if (!std::equal(digest.begin(), digest.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body))) {
      throw CorruptionError("checkpoint digest mismatch");
    }
  }
  Reader r(bytes.data(), body);
  if (r.str(4) != std::string(kMagic, 4)) throw CorruptionError("not a checkpoint archive (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint64_t meta_len = r.u64();
  try {
    ckpt.metadata = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    r.need(n * 4);
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    ckpt.tensors.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CorruptionError("trailing bytes in checkpoint body");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return deserialize_checkpoint(bytes);
}

template <typename T>
void store_parameters(Checkpoint& ckpt, const std::vector<const Parameter<T>*>& params, const std::string& prefix) {
  for (const auto* p : params) {
    if constexpr (std::is_same_v<T, float>) {
      ckpt.tensors.insert_or_assign(prefix + p->name, p->value);
    } else {
      ckpt.tensors.insert_or_assign(prefix + p->name, p->value.template cast<float>());
    }
  }
}

template <typename T>
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter<T>*>& params, const std::string& prefix) {
  for (auto* p : params) {
    const std::string name = prefix + p->name;
    const Tensor<float>& t = ckpt.tensor(name);
    if (t.shape() != p->value.shape()) {
      throw IncompatibilityError("tensor '" + name + "' has shape " + shape_string(t.shape()) + " but the model expects " +
                                 shape_string(p->value.shape()));
    }
    if constexpr (std::is_same_v<T, float>) {
      p->value = t;
    } else {
      p->value = t.template cast<T>();
    }
  }
  // Anything else under the prefix means the stored model is larger than this one.
  if (prefix.empty()) return;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    const bool known = std::any_of(params.begin(), params.end(), [&](const Parameter<T>* p) { return prefix + p->name == name; });
    if (!known) throw IncompatibilityError("checkpoint tensor '" + name + "' has no counterpart in the configured model");
  }
}

template void store_parameters(Checkpoint&, const std::vector<const Parameter<float>*>&, const std::string&);
template void store_parameters(Checkpoint&, const std::vector<const Parameter<double>*>&, const std::string&);
template void restore_parameters(const Checkpoint&, const std::vector<Parameter<float>*>&, const std::string&);
template void restore_parameters(const Checkpoint&, const std::vector<Parameter<double>*>&, const std::string&);

}  // namespace medgan
