#include "emoalign/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emoalign/errors.hpp"

namespace emoalign::model {

using numerics::Real;
using numerics::Tensor;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'M', 'O', 'A', 'L', 'I', 'G', 'N'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, need(sizeof(T)), sizeof(T));
    return v;
  }
  const unsigned char* need(std::size_t n) {
    if (n > in_.size() - pos_) throw IoError("checkpoint truncated");
    const unsigned char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    const auto* p = need(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt, StorageType storage) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put_string(ckpt.metadata.dump());
  w.put(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, tensor] : ckpt.params.entries()) {
    w.put_string(name);
    w.put(static_cast<std::uint8_t>(storage));
    w.put(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.put(static_cast<std::uint64_t>(d));
    for (Real v : tensor.data()) {
      if (storage == StorageType::kFloat64) {
        w.put(v);
      } else {
        w.put(static_cast<float>(v));
      }
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.need(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) throw IoError("not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw IoError("checkpoint record '" + name + "' has unknown dtype");
    const auto rank = r.get<std::uint32_t>();
    numerics::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<Real> values(numerics::shape_numel(shape));
    for (auto& v : values) {
      v = dtype == 0 ? r.get<double>() : static_cast<Real>(r.get<float>());
    }
    ckpt.params.add(name, Tensor::from(shape, std::move(values)));
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  return ckpt;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, StorageType storage) {
  write_file_atomic(path, serialize_checkpoint(ckpt, storage));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file_bytes(path)); }

}  // namespace emoalign::model
