#include "toposeg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "toposeg/config.hpp"
#include "toposeg/error.hpp"

namespace toposeg {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_double(double d) { put(std::bit_cast<std::uint64_t>(d)); }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated payload");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_tensor(Writer& w, const std::string& name, const Tensor& t, bool trainable) {
  if (name.size() > 0xFFFF) throw ValueError("checkpoint: tensor name too long");
  w.put(static_cast<std::uint16_t>(name.size()));
  w.put_bytes(name.data(), name.size());
  w.put(static_cast<std::uint8_t>(trainable ? 1 : 0));
  w.put(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) w.put(static_cast<std::uint64_t>(e));
  for (double v : t.data()) w.put_double(v);
}

Parameter get_tensor(Reader& r) {
  Parameter p;
  p.name = r.get_string(r.get<std::uint16_t>());
  p.trainable = r.get<std::uint8_t>() != 0;
  const std::size_t rank = r.get<std::uint8_t>();
  if (rank == 0) throw FormatError("checkpoint: tensor '" + p.name + "' has rank 0");
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (auto& e : shape) {
    e = r.get<std::uint64_t>();
    if (e == 0 || e > (1ULL << 32) || numel * e > (1ULL << 32)) {
      throw FormatError("checkpoint: tensor '" + p.name + "' has invalid extents");
    }
    numel *= e;
  }
  std::vector<double> values(numel);
  for (double& v : values) v = r.get_double();
  p.value = Tensor(std::move(shape), std::move(values));
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const Parameter> params, const OptState& state,
                                            std::uint64_t config_hash) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("checkpoint: optimizer state does not match parameters");
  }
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  w.put(config_hash);
  w.put(state.step);
  w.put(static_cast<std::uint32_t>(3 * params.size()));
  for (const auto& p : params) put_tensor(w, p.name, p.value, p.trainable);
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_tensor(w, "adam.m." + params[i].name, state.first_moment[i], false);
    put_tensor(w, "adam.v." + params[i].name, state.second_moment[i], false);
  }
  const std::string_view payload(reinterpret_cast<const char*>(w.bytes().data()), w.bytes().size());
  w.put(fnv1a64(payload));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 + 4 + 8) throw FormatError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("checkpoint: bad magic");

  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.subspan(body));
  const std::uint64_t stored = tail.get<std::uint64_t>();
  const std::string_view payload(reinterpret_cast<const char*>(bytes.data()), body);
  if (fnv1a64(payload) != stored) throw ChecksumError("checkpoint: checksum mismatch");

  Reader r(bytes.first(body));
  r.get_string(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint64_t>();
  ckpt.optimizer.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  if (count % 3 != 0) throw FormatError("checkpoint: tensor count is not a multiple of 3");
  const std::size_t n = count / 3;
  for (std::size_t i = 0; i < n; ++i) ckpt.parameters.push_back(get_tensor(r));
  for (std::size_t i = 0; i < n; ++i) {
    Parameter m = get_tensor(r);
    Parameter v = get_tensor(r);
    const std::string& name = ckpt.parameters[i].name;
    if (m.name != "adam.m." + name || v.name != "adam.v." + name ||
        m.value.shape() != ckpt.parameters[i].value.shape() ||
        v.value.shape() != ckpt.parameters[i].value.shape()) {
      throw FormatError("checkpoint: optimizer moments for '" + name + "' are inconsistent");
    }
    ckpt.optimizer.first_moment.push_back(std::move(m.value));
    ckpt.optimizer.second_moment.push_back(std::move(v.value));
  }
  if (!r.exhausted()) throw FormatError("checkpoint: trailing bytes before checksum");
  return ckpt;
}

void checkpoint_save(std::span<const Parameter> params, const OptState& state, std::uint64_t config_hash,
                     const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(params, state, config_hash);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return decode_checkpoint(bytes);
}

std::optional<std::string> config_mismatch_warning(const Checkpoint& ckpt, std::uint64_t expected_hash) {
  if (ckpt.config_hash == expected_hash) return std::nullopt;
  std::ostringstream os;
  os << "checkpoint was written under config hash " << std::hex << ckpt.config_hash
     << ", current config hash is " << expected_hash;
  return os.str();
}

}  // namespace toposeg
