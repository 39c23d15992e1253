#include "flock/seqnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flock/error.hpp"

namespace flock::seqnet {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'O', 'C', 'K', 'C', 'K', 'P'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& bytes() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_raw(const char* p, std::size_t n) {
    need(n);
    if (std::memcmp(b_.data() + pos_, p, n) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string kv_text(const KeyValues& kv) {
  std::ostringstream os;
  write_key_values(os, kv);
  return os.str();
}

KeyValues kv_parse(const std::string& text) {
  std::istringstream is(text);
  return read_key_values(is);
}

}  // namespace

KeyValues to_key_values(const ModelConfig& c) {
  return {
      {"arch", to_string(c.arch)},
      {"input_dim", std::to_string(c.input_dim)},
      {"hidden_size", std::to_string(c.hidden_size)},
      {"num_layers", std::to_string(c.num_layers)},
      {"heads", std::to_string(c.heads)},
      {"ff_multiplier", std::to_string(c.ff_multiplier)},
      {"dropout", format_double(c.dropout)},
      {"seed", std::to_string(c.seed)},
      {"positional_encoding", c.positional_encoding ? "1" : "0"},
      {"sequence_length", std::to_string(c.sequence_length)},
      {"dtw_mode", to_string(c.dtw_mode)},
  };
}

ModelConfig model_config_from(const KeyValues& kv, ModelConfig c) {
  const auto int_of = [&](const char* key, int& field) {
    if (auto it = kv.find(key); it != kv.end()) field = static_cast<int>(parse_int(it->second));
  };
  if (auto it = kv.find("arch"); it != kv.end()) c.arch = arch_from(it->second);
  int_of("input_dim", c.input_dim);
  int_of("hidden_size", c.hidden_size);
  int_of("num_layers", c.num_layers);
  int_of("heads", c.heads);
  int_of("ff_multiplier", c.ff_multiplier);
  int_of("sequence_length", c.sequence_length);
  if (auto it = kv.find("dropout"); it != kv.end()) c.dropout = parse_double(it->second);
  if (auto it = kv.find("seed"); it != kv.end()) c.seed = static_cast<std::uint64_t>(parse_int(it->second));
  if (auto it = kv.find("positional_encoding"); it != kv.end()) c.positional_encoding = parse_int(it->second) != 0;
  if (auto it = kv.find("dtw_mode"); it != kv.end()) c.dtw_mode = dtw_mode_from(it->second);
  return c;
}

std::string serialize_checkpoint(const SequenceModel& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(kv_text(to_key_values(model.config)));
  w.str(kv_text(to_key_values(model.scaler)));
  w.str(kv_text({{"epochs_run", std::to_string(model.meta.epochs_run)},
                 {"best_val_loss", format_double(model.meta.best_val_loss)},
                 {"wall_time_s", format_double(model.meta.wall_time_s)}}));
  const auto& tensors = model.params.tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u64(static_cast<std::uint64_t>(t.value.rows()));
    w.u64(static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) w.f64(t.value(r, c));
  }
  auto& bytes = w.bytes();
  w.u64(fnv1a(bytes.data(), bytes.size()));
  return std::move(bytes);
}

SequenceModel deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t kHeader = sizeof kMagic + 4;
  if (bytes.size() < kHeader + 8) throw CheckpointError("checkpoint is truncated");
  const std::size_t body_end = bytes.size() - 8;
  Reader r(bytes, body_end);
  r.expect_raw(kMagic, sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body_end + static_cast<std::size_t>(i)]))
              << (8 * i);
  if (stored != fnv1a(bytes.data(), body_end))
    throw CheckpointError("checkpoint checksum mismatch (file is corrupt or truncated)");

  SequenceModel m;
  try {
    m.config = model_config_from(kv_parse(r.str()));
    m.config.validate();
    m.scaler = scaler_state_from(kv_parse(r.str()));
    const KeyValues meta = kv_parse(r.str());
    m.meta.epochs_run = static_cast<int>(parse_int(meta.at("epochs_run")));
    m.meta.best_val_loss = parse_double(meta.at("best_val_loss"));
    m.meta.wall_time_s = parse_double(meta.at("wall_time_s"));
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const std::uint64_t rows = r.u64();
      const std::uint64_t cols = r.u64();
      if (rows > (1u << 24) || cols > (1u << 24)) throw CheckpointError("implausible tensor shape for " + name);
      auto& t = m.params.add(std::move(name), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (Eigen::Index rr = 0; rr < t.rows(); ++rr)
        for (Eigen::Index cc = 0; cc < t.cols(); ++cc) t(rr, cc) = r.f64();
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  if (r.pos() != body_end) throw CheckpointError("trailing bytes in checkpoint");

  // shape check against a freshly built layout
  const SequenceModel layout = make_model(m.config);
  const auto& want = layout.params.tensors();
  const auto& got = m.params.tensors();
  bool ok = want.size() == got.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i)
    ok = want[i].name == got[i].name && want[i].value.rows() == got[i].value.rows() &&
         want[i].value.cols() == got[i].value.cols();
  if (!ok) throw CheckpointError("checkpoint tensors do not match the stored model configuration");
  if (!m.params.all_finite()) throw CheckpointError("checkpoint holds non-finite parameters");
  return m;
}

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place: " + ec.message());
}

SequenceModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace flock::seqnet
