#include "graphseq/checkpoint.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "graphseq/errors.h"

namespace graphseq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "GRAPHSEQ-CHECKPOINT";

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::string line() {
    const auto nl = s_.find('\n', pos_);
    if (nl == std::string::npos) throw IoError("checkpoint: truncated header");
    std::string out = s_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  void doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, s_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw IoError("checkpoint: truncated body");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

void put_tensor(std::string& out, const std::string& name, std::uint64_t rows,
                std::uint64_t cols, const double* values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, 2);
  put<std::uint64_t>(out, rows);
  put<std::uint64_t>(out, cols);
  out.append(reinterpret_cast<const char*>(values),
             rows * cols * sizeof(double));
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const ModelParams& p = ckpt.params;
  std::string out;
  out += kMagic;
  out += "\nformat_version=" + std::to_string(kCheckpointFormatVersion) + "\n";
  for (const auto& [k, v] : p.config().to_kv()) {
    out += "model." + k + "=" + v + "\n";
  }
  std::map<std::string, std::string> meta = ckpt.meta;
  if (ckpt.optimizer) meta["optimizer_step"] = std::to_string(ckpt.optimizer->step);
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw IoError("checkpoint: meta keys/values may not contain '=' or newlines");
    }
    out += "meta." + k + "=" + v + "\n";
  }
  const std::size_t count = p.tensors().size() + (ckpt.optimizer ? 2 : 0);
  out += "tensors=" + std::to_string(count) + "\nend_header\n";
  for (const TensorInfo& t : p.tensors()) {
    put_tensor(out, t.name, t.rows, t.cols, p.data().data() + t.offset);
  }
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    if (o.m.size() != p.size() || o.v.size() != p.size()) {
      throw IoError("checkpoint: optimizer state size mismatch");
    }
    put_tensor(out, "opt.m", 1, o.m.size(), o.m.data());
    put_tensor(out, "opt.v", 1, o.v.size(), o.v.data());
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.line() != kMagic) throw IoError("checkpoint: bad magic");
  if (r.line() != "format_version=" + std::to_string(kCheckpointFormatVersion)) {
    throw IoError("checkpoint: unsupported format version");
  }
  std::map<std::string, std::string> model_kv, meta;
  std::size_t count = 0;
  while (true) {
    const std::string line = r.line();
    if (line == "end_header") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint: bad header line");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.starts_with("model.")) {
      model_kv[key.substr(6)] = value;
    } else if (key.starts_with("meta.")) {
      meta[key.substr(5)] = value;
    } else if (key == "tensors") {
      count = std::stoul(value);
    } else {
      throw IoError("checkpoint: unknown header key " + key);
    }
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_kv(model_kv);
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  Checkpoint ckpt{ModelParams(config), std::nullopt, {}};
  std::vector<char> seen(ckpt.params.tensors().size(), 0);
  OptimizerState opt;
  bool have_m = false, have_v = false;
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank != 2) throw IoError("checkpoint: tensor rank must be 2");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (name == "opt.m" || name == "opt.v") {
      auto& dst = name == "opt.m" ? opt.m : opt.v;
      if (rows != 1 || cols != ckpt.params.size()) {
        throw IoError("checkpoint: optimizer tensor has wrong shape");
      }
      dst.resize(cols);
      r.doubles(dst.data(), cols);
      (name == "opt.m" ? have_m : have_v) = true;
      continue;
    }
    bool matched = false;
    for (std::size_t j = 0; j < ckpt.params.tensors().size(); ++j) {
      const TensorInfo& t = ckpt.params.tensors()[j];
      if (t.name != name) continue;
      if (static_cast<std::uint64_t>(t.rows) != rows ||
          static_cast<std::uint64_t>(t.cols) != cols) {
        throw IoError("checkpoint: shape mismatch for " + name);
      }
      r.doubles(ckpt.params.data().data() + t.offset, t.size());
      seen[j] = 1;
      matched = true;
      break;
    }
    if (!matched) throw IoError("checkpoint: unexpected tensor " + name);
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  for (char s : seen) {
    if (!s) throw IoError("checkpoint: missing tensor");
  }
  if (have_m != have_v) throw IoError("checkpoint: partial optimizer state");
  if (have_m) {
    auto it = meta.find("optimizer_step");
    opt.step = it == meta.end() ? 0 : std::stoll(it->second);
    ckpt.optimizer = std::move(opt);
  }
  meta.erase("optimizer_step");
  ckpt.meta = std::move(meta);
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace graphseq
