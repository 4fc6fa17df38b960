#include "o3n/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "o3n/error.hpp"

namespace o3n {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace fs = std::filesystem;

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <typename U>
  U get() {
    U v{};
    bytes(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw MalformedContainer(path_ + ": truncated checkpoint");
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) throw ConfigError("tensor name too long: " + name.substr(0, 32) + "...");
    if (t.rank() > 0xff) throw ShapeError("tensor rank too large for checkpoint");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) meta += k + "=" + v + "\n";
  put<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw MalformedContainer(path.string() + ": bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw MalformedContainer(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.get<std::uint16_t>(), '\0');
    r.bytes(name.data(), name.size());
    const auto nd = r.get<std::uint8_t>();
    Shape shape(nd);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      numel *= d;
      if (numel > (std::uint64_t{1} << 32)) throw MalformedContainer(path.string() + ": implausible tensor size");
    }
    Tensor<float> t(shape);
    r.bytes(reinterpret_cast<char*>(t.data()), t.size() * sizeof(float));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  std::string meta(r.get<std::uint32_t>(), '\0');
  r.bytes(meta.data(), meta.size());
  std::istringstream ms(meta);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw MalformedContainer(path.string() + ": metadata line without '='");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw MalformedContainer(path.string() + ": trailing bytes");
  return ckpt;
}

Checkpoint to_checkpoint(const ad::ParamSet<float>& params, std::map<std::string, std::string> meta) {
  Checkpoint c;
  for (const auto& e : params.entries()) c.tensors.emplace_back(e.name, e.var->value);
  c.meta = std::move(meta);
  return c;
}

void load_into(ad::ParamSet<float>& params, const Checkpoint& ckpt, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const Tensor<float>* src = ckpt.find(name);
    if (!src) throw ShapeMismatch("checkpoint has no tensor '" + name + "'");
    auto& dst = params.get(name)->value;
    if (src->shape() != dst.shape())
      throw ShapeMismatch("tensor '" + name + "' has shape " + shape_str(src->shape()) + " in checkpoint, model expects " +
                          shape_str(dst.shape()));
    dst = *src;
  }
}

}  // namespace o3n
