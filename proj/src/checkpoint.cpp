#include "dnp/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dnp {
namespace {

constexpr char kMagic[4] = {'D', 'N', 'P', 'C'};

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    std::uint64_t u = 0;
    if constexpr (std::is_same_v<T, double>) {
      u = std::bit_cast<std::uint64_t>(v);
    } else {
      u = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}
  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(u);
    } else {
      return static_cast<T>(u);
    }
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (n > end_ - pos_) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParameters& params, const ModelConfig& config) {
  config.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint8_t>(config.kind == ModelKind::invariant ? 0 : 1);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(config.n_layers));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(config.feature_width));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(config.n_rbf));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(config.head_hidden));
  w.le<double>(config.cutoff);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.arrays.size()));
  for (const auto& [name, a] : params.arrays) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint32_t>(2);
    w.le<std::uint64_t>(a.rows);
    w.le<std::uint64_t>(a.cols);
    for (double v : a.data) w.le<double>(v);
  }
  auto& buf = w.buffer();
  const std::uint64_t h = fnv1a(buf.data(), buf.size());
  w.le<std::uint64_t>(h);
  return std::move(buf);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw CheckpointError("truncated checkpoint (too short for a header)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, body);
  r.str(4, "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t stored = 0;
  for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a(bytes.data(), body)) {
    throw CheckpointError("checkpoint hash mismatch (file is truncated or corrupt)");
  }

  Checkpoint ck;
  const auto kind = r.le<std::uint8_t>("model kind");
  if (kind > 1) throw CheckpointError("invalid model kind " + std::to_string(kind));
  ck.config.kind = kind == 0 ? ModelKind::invariant : ModelKind::equivariant;
  ck.config.n_layers = r.le<std::uint32_t>("n_layers");
  ck.config.feature_width = r.le<std::uint32_t>("feature_width");
  ck.config.n_rbf = r.le<std::uint32_t>("n_rbf");
  ck.config.head_hidden = r.le<std::uint32_t>("head_hidden");
  ck.config.cutoff = r.le<double>("cutoff");
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid model metadata: ") + e.what());
  }

  const auto n_entries = r.le<std::uint32_t>("entry count");
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    const auto name_len = r.le<std::uint32_t>("name length");
    std::string name = r.str(name_len, "name");
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank == 0 || rank > 2) throw CheckpointError("entry '" + name + "' has unsupported rank " + std::to_string(rank));
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t k = 0; k < rank; ++k) dims[k + (rank == 1 ? 1 : 0)] = r.le<std::uint64_t>("dims");
    const std::uint64_t count = dims[0] * dims[1];
    if (dims[0] != 0 && count / dims[0] != dims[1]) throw CheckpointError("entry '" + name + "' has overflowing dims");
    if (count > r.remaining() / 8) throw CheckpointError("truncated checkpoint in entry '" + name + "'");
    Array a(dims[0], dims[1]);
    for (double& v : a.data) v = r.le<double>("payload");
    if (!ck.params.arrays.emplace(std::move(name), std::move(a)).second) {
      throw CheckpointError("duplicate entry in checkpoint");
    }
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after the last entry");
  try {
    validate_parameters(ck.config, ck.params);
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint does not match its metadata: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const ModelParameters& params, const ModelConfig& config,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params, config);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dnp
