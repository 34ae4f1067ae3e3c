#include "graphseq/model.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "graphseq/codec.h"
#include "graphseq/errors.h"
#include "graphseq/maskgraph.h"
#include "graphseq/random.h"
#include "graphseq/vocab.h"

namespace graphseq {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

int parse_int(const std::map<std::string, std::string>& kv,
              const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("model." + key + ": not an integer: " + s);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Dense kernels.

void layer_norm(const Matrix& x, const double* gain, const double* bias,
                int first_row, Matrix& xhat, Vector& rstd, Matrix& out) {
  const int rows = static_cast<int>(x.rows()) - first_row;
  const int h = static_cast<int>(x.cols());
  xhat.resize(rows, h);
  out.resize(rows, h);
  rstd.resize(rows);
  Eigen::Map<const Eigen::RowVectorXd> g(gain, h), b(bias, h);
  for (int r = 0; r < rows; ++r) {
    const auto row = x.row(first_row + r);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd(r) = rs;
    xhat.row(r) = (row.array() - mean) * rs;
    out.row(r) = xhat.row(r).cwiseProduct(g) + b;
  }
}

// Column sums in a fixed row order. colwise().sum() into an unaligned map
// changes its summation order with the buffer address.
Eigen::RowVectorXd column_sums(const Matrix& m) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out += m.row(r);
  return out;
}

// dx += LayerNorm'(dy); also accumulates gain and bias gradients.
void layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                         const Vector& rstd, const double* gain,
                         double* dgain, double* dbias, Matrix& dx,
                         int first_row) {
  const int h = static_cast<int>(xhat.cols());
  Eigen::Map<const Eigen::RowVectorXd> g(gain, h);
  Eigen::Map<Eigen::RowVectorXd> dg(dgain, h), db(dbias, h);
  for (int r = 0; r < xhat.rows(); ++r) {
    const Eigen::RowVectorXd dyr = dy.row(r);
    dg += dyr.cwiseProduct(xhat.row(r));
    db += dyr;
    const Eigen::RowVectorXd dxhat = dyr.cwiseProduct(g);
    const double mean_d = dxhat.mean();
    const double mean_dx = dxhat.dot(xhat.row(r)) / h;
    dx.row(first_row + r).array() +=
        rstd(r) * (dxhat.array() - mean_d - xhat.row(r).array() * mean_dx);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

ConstMatrixMap cmat(const ModelParams& p, std::size_t offset, int rows,
                    int cols) {
  return ConstMatrixMap(p.data().data() + offset, rows, cols);
}

Eigen::Map<const Eigen::RowVectorXd> crow(const ModelParams& p,
                                          std::size_t offset, int n) {
  return Eigen::Map<const Eigen::RowVectorXd>(p.data().data() + offset, n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration.

std::string_view mp_mode_name(MpMode mode) {
  switch (mode) {
    case MpMode::kNone:
      return "none";
    case MpMode::kEdges:
      return "edges";
    case MpMode::kCorrespondences:
      return "correspondences";
  }
  return "none";
}

MpMode parse_mp_mode(std::string_view name) {
  if (name == "none") return MpMode::kNone;
  if (name == "edges") return MpMode::kEdges;
  if (name == "correspondences") return MpMode::kCorrespondences;
  throw ConfigError("unknown mp mode '" + std::string(name) + "'");
}

int ModelConfig::resolved_vocab_size() const {
  return vocab_size > 0 ? vocab_size : kVocabSize;
}

void ModelConfig::validate() const {
  if (embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 || ff_dim <= 0 ||
      max_seq_len <= 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim must be divisible by num_heads");
  }
  if (resolved_vocab_size() < kVocabSize) {
    throw ConfigError("vocab_size smaller than the byte-level vocabulary");
  }
  if (mp_mode == MpMode::kNone && !mp_after_layers.empty()) {
    throw ConfigError("mp_after_layers must be empty when mp_mode is none");
  }
  for (std::size_t i = 0; i < mp_after_layers.size(); ++i) {
    const int l = mp_after_layers[i];
    if (l < 0 || l >= num_layers) {
      throw ConfigError("mp_after_layers entry out of range");
    }
    if (i > 0 && mp_after_layers[i - 1] >= l) {
      throw ConfigError("mp_after_layers must be strictly increasing");
    }
  }
}

ModelConfig ModelConfig::with_mp(MpMode mode) const {
  ModelConfig c = *this;
  c.mp_mode = mode;
  c.mp_after_layers.clear();
  if (mode != MpMode::kNone) {
    for (int l = 0; l < num_layers; ++l) c.mp_after_layers.push_back(l);
  }
  return c;
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::string layers;
  for (std::size_t i = 0; i < mp_after_layers.size(); ++i) {
    if (i) layers += ',';
    layers += std::to_string(mp_after_layers[i]);
  }
  return {
      {"vocab_size", std::to_string(resolved_vocab_size())},
      {"embed_dim", std::to_string(embed_dim)},
      {"num_layers", std::to_string(num_layers)},
      {"num_heads", std::to_string(num_heads)},
      {"ff_dim", std::to_string(ff_dim)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"mp_mode", std::string(mp_mode_name(mp_mode))},
      {"mp_after_layers", layers},
      {"gate_enabled", gate_enabled ? "true" : "false"},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  static const char* known[] = {"vocab_size", "embed_dim",   "num_layers",
                                "num_heads",  "ff_dim",      "max_seq_len",
                                "mp_mode",    "mp_after_layers",
                                "gate_enabled", "seed"};
  for (const auto& [k, v] : kv) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw ConfigError("unknown model key: " + k);
    }
  }
  ModelConfig c;
  c.vocab_size = parse_int(kv, "vocab_size", 0);
  c.embed_dim = parse_int(kv, "embed_dim", c.embed_dim);
  c.num_layers = parse_int(kv, "num_layers", c.num_layers);
  c.num_heads = parse_int(kv, "num_heads", c.num_heads);
  c.ff_dim = parse_int(kv, "ff_dim", c.ff_dim);
  c.max_seq_len = parse_int(kv, "max_seq_len", c.max_seq_len);
  if (auto it = kv.find("mp_mode"); it != kv.end()) {
    c.mp_mode = parse_mp_mode(it->second);
  }
  if (auto it = kv.find("mp_after_layers"); it != kv.end()) {
    if (it->second == "all") {
      c = c.with_mp(c.mp_mode);
    } else {
      std::stringstream ss(it->second);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        c.mp_after_layers.push_back(parse_int({{"x", item}}, "x", 0));
      }
    }
  } else {
    c = c.with_mp(c.mp_mode);
  }
  if (auto it = kv.find("gate_enabled"); it != kv.end()) {
    if (it->second != "true" && it->second != "false") {
      throw ConfigError("gate_enabled must be true or false");
    }
    c.gate_enabled = it->second == "true";
  }
  if (auto it = kv.find("seed"); it != kv.end()) {
    try {
      c.seed = std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("model.seed: not an integer: " + it->second);
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters.

ParamLayout::ParamLayout(const ModelConfig& config) {
  const int h = config.embed_dim;
  const int v = config.resolved_vocab_size();
  auto add = [&](std::string name, int rows, int cols) {
    tensors.push_back(TensorInfo{std::move(name), rows, cols, total});
    total += static_cast<std::size_t>(rows) * cols;
    return tensors.back().offset;
  };
  tok_emb = add("tok_emb", v, h);
  pos_emb = add("pos_emb", config.max_seq_len, h);
  mp_of_layer.assign(config.num_layers, -1);
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string p = "blk" + std::to_string(l) + ".";
    Block b{};
    b.ln1_g = add(p + "ln1.gain", 1, h);
    b.ln1_b = add(p + "ln1.bias", 1, h);
    b.w_qkv = add(p + "attn.w_qkv", h, 3 * h);
    b.b_qkv = add(p + "attn.b_qkv", 1, 3 * h);
    b.w_o = add(p + "attn.w_o", h, h);
    b.b_o = add(p + "attn.b_o", 1, h);
    b.ln2_g = add(p + "ln2.gain", 1, h);
    b.ln2_b = add(p + "ln2.bias", 1, h);
    b.w_in = add(p + "mlp.w_in", h, config.ff_dim);
    b.b_in = add(p + "mlp.b_in", 1, config.ff_dim);
    b.w_out = add(p + "mlp.w_out", config.ff_dim, h);
    b.b_out = add(p + "mlp.b_out", 1, h);
    blocks.push_back(b);
  }
  for (int l : config.mp_after_layers) {
    const std::string p = "mp" + std::to_string(l) + ".";
    MessagePassing m{};
    m.after_layer = l;
    m.w_self = add(p + "w_self", h, h);
    m.w_neigh = add(p + "w_neigh", h, h);
    m.bias = add(p + "bias", 1, h);
    m.gate = add(p + "gate", 1, 1);
    mp_of_layer[l] = static_cast<int>(mp.size());
    mp.push_back(m);
  }
  lnf_g = add("lnf.gain", 1, h);
  lnf_b = add("lnf.bias", 1, h);
  lm_head = add("lm_head", h, v);
}

ModelParams::ModelParams(const ModelConfig& config)
    : config_(config), layout_(config) {
  config_.validate();
  data_.assign(layout_.total, 0.0);
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
  ModelParams p(config);
  for (const TensorInfo& t : p.tensors()) {
    double* dst = p.data_.data() + t.offset;
    const std::string_view name = t.name;
    const bool is_gain = name.ends_with(".gain");
    const bool is_vector = t.rows == 1;
    if (is_gain) {
      std::fill(dst, dst + t.size(), 1.0);
    } else if (is_vector) {
      // biases and gate scalars start at zero
      std::fill(dst, dst + t.size(), 0.0);
    } else {
      Rng rng(mix_seed({config.seed, fnv1a(name)}));
      for (std::size_t i = 0; i < t.size(); ++i) dst[i] = kInitStd * rng.normal();
    }
  }
  return p;
}

const TensorInfo& ModelParams::tensor(std::string_view name) const {
  for (const TensorInfo& t : layout_.tensors) {
    if (t.name == name) return t;
  }
  throw MismatchError("no tensor named " + std::string(name));
}

void ModelParams::copy_shared(const ModelParams& other) {
  for (const TensorInfo& t : layout_.tensors) {
    for (const TensorInfo& o : other.tensors()) {
      if (o.name == t.name && o.rows == t.rows && o.cols == t.cols) {
        std::copy_n(other.data_.data() + o.offset, t.size(),
                    data_.data() + t.offset);
      }
    }
  }
}

std::vector<std::size_t> ModelParams::gate_indices() const {
  std::vector<std::size_t> out;
  for (const auto& m : layout_.mp) out.push_back(m.gate);
  return out;
}

// ---------------------------------------------------------------------------
// Message passing.

GraphStructure derive_structure(std::span<const int> tokens, int graph_start,
                                MpMode mode) {
  GraphStructure s;
  if (mode == MpMode::kNone || graph_start >= static_cast<int>(tokens.size())) {
    return s;
  }
  const PartialGraphState state = incremental_parse(tokens.subspan(graph_start));
  DerivedGraph g = mode == MpMode::kEdges
                       ? static_cast<DerivedGraph>(edge_graph_from(state))
                       : static_cast<DerivedGraph>(
                             correspondence_graph_from(state));
  s.in_neighbors = g.in_neighbors();
  s.anchor = std::move(g.anchor);
  for (int& a : s.anchor) a += graph_start;
  return s;
}

Matrix graphsage_layer(const Matrix& features,
                       const std::vector<std::vector<int>>& in_neighbors,
                       const Matrix& w_self, const Matrix& w_neigh,
                       const Vector& bias) {
  const Eigen::Index n = features.rows();
  const Eigen::Index h = features.cols();
  if (static_cast<Eigen::Index>(in_neighbors.size()) != n ||
      w_self.rows() != h || w_neigh.rows() != h ||
      w_self.cols() != w_neigh.cols() || bias.size() != w_self.cols()) {
    throw MismatchError("graphsage_layer: inconsistent shapes");
  }
  Matrix agg = Matrix::Zero(n, h);
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto& nb = in_neighbors[v];
    if (nb.empty()) continue;
    for (int u : nb) {
      if (u < 0 || u >= n) throw MismatchError("graphsage_layer: bad arc");
      agg.row(v) += features.row(u);
    }
    agg.row(v) /= static_cast<double>(nb.size());
  }
  Matrix out = features * w_self + agg * w_neigh;
  out.rowwise() += bias.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Forward.

Matrix forward(const ModelParams& params, std::span<const int> tokens,
               const GraphStructure& structure, ForwardCache* cache_out,
               int first_row) {
  const ModelConfig& cfg = params.config();
  const ParamLayout& L = params.layout();
  const int T = static_cast<int>(tokens.size());
  const int H = cfg.embed_dim;
  const int V = cfg.resolved_vocab_size();
  const int heads = cfg.num_heads;
  const int dh = H / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (T == 0) throw MismatchError("empty sequence");
  if (T > cfg.max_seq_len) {
    throw MismatchError("sequence length " + std::to_string(T) +
                        " exceeds max_seq_len");
  }
  if (first_row < 0 || first_row >= T) throw MismatchError("bad first_row");
  for (int a : structure.anchor) {
    if (a < 0 || a >= T) {
      throw MismatchError("message-passing anchor outside the sequence");
    }
  }

  ForwardCache local;
  ForwardCache& c = cache_out ? *cache_out : local;
  c.tokens.assign(tokens.begin(), tokens.end());
  c.structure = structure;
  c.first_row = first_row;
  c.layers.resize(cfg.num_layers);

  Matrix x(T, H);
  {
    const ConstMatrixMap tok_emb = cmat(params, L.tok_emb, V, H);
    const ConstMatrixMap pos_emb = cmat(params, L.pos_emb, cfg.max_seq_len, H);
    for (int t = 0; t < T; ++t) {
      if (tokens[t] < 0 || tokens[t] >= V) {
        throw MismatchError("token id out of range");
      }
      x.row(t) = tok_emb.row(tokens[t]) + pos_emb.row(t);
    }
  }

  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& B = L.blocks[l];
    auto& lc = c.layers[l];
    lc.x_in = x;

    layer_norm(x, params.data().data() + B.ln1_g,
               params.data().data() + B.ln1_b, 0, lc.ln1_xhat, lc.ln1_rstd,
               lc.ln1_out);
    lc.qkv.noalias() = lc.ln1_out * cmat(params, B.w_qkv, H, 3 * H);
    lc.qkv.rowwise() += crow(params, B.b_qkv, 3 * H);

    lc.attn.resize(T, H);
    lc.probs.resize(heads);
    for (int h = 0; h < heads; ++h) {
      const auto q = lc.qkv.middleCols(h * dh, dh);
      const auto k = lc.qkv.middleCols(H + h * dh, dh);
      const auto v = lc.qkv.middleCols(2 * H + h * dh, dh);
      Matrix& p = lc.probs[h];
      p.noalias() = (q * k.transpose()) * scale;
      for (int i = 0; i < T; ++i) {
        auto row = p.row(i);
        const double mx = row.head(i + 1).maxCoeff();
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          row(j) = std::exp(row(j) - mx);
          sum += row(j);
        }
        row.head(i + 1) /= sum;
        row.tail(T - i - 1).setZero();
      }
      lc.attn.middleCols(h * dh, dh).noalias() = p * v;
    }
    lc.x_mid = x;
    lc.x_mid.noalias() += lc.attn * cmat(params, B.w_o, H, H);
    lc.x_mid.rowwise() += crow(params, B.b_o, H);

    layer_norm(lc.x_mid, params.data().data() + B.ln2_g,
               params.data().data() + B.ln2_b, 0, lc.ln2_xhat, lc.ln2_rstd,
               lc.ln2_out);
    lc.ff_pre.noalias() = lc.ln2_out * cmat(params, B.w_in, H, cfg.ff_dim);
    lc.ff_pre.rowwise() += crow(params, B.b_in, cfg.ff_dim);
    lc.ff_act = lc.ff_pre.unaryExpr([](double v) { return gelu(v); });
    lc.x_out = lc.x_mid;
    lc.x_out.noalias() += lc.ff_act * cmat(params, B.w_out, cfg.ff_dim, H);
    lc.x_out.rowwise() += crow(params, B.b_out, H);

    x = lc.x_out;
    const int mi = L.mp_of_layer[l];
    if (mi >= 0 && structure.size() > 0) {
      const auto& M = L.mp[mi];
      const int K = structure.size();
      lc.mp_in.resize(K, H);
      for (int k = 0; k < K; ++k) lc.mp_in.row(k) = lc.x_out.row(structure.anchor[k]);
      lc.mp_agg = Matrix::Zero(K, H);
      for (int k = 0; k < K; ++k) {
        const auto& nb = structure.in_neighbors[k];
        if (nb.empty()) continue;
        for (int j : nb) lc.mp_agg.row(k) += lc.mp_in.row(j);
        lc.mp_agg.row(k) /= static_cast<double>(nb.size());
      }
      lc.mp_out.noalias() = lc.mp_in * cmat(params, M.w_self, H, H);
      lc.mp_out.noalias() += lc.mp_agg * cmat(params, M.w_neigh, H, H);
      lc.mp_out.rowwise() += crow(params, M.bias, H);
      const double gate =
          cfg.gate_enabled ? std::tanh(params.data()[M.gate]) : 1.0;
      for (int k = 0; k < K; ++k) {
        const int target = structure.anchor[k] + 1;
        if (target < T) x.row(target) += gate * lc.mp_out.row(k);
      }
    } else {
      lc.mp_in.resize(0, H);
      lc.mp_agg.resize(0, H);
      lc.mp_out.resize(0, H);
    }
    lc.x_post = x;
  }

  layer_norm(x, params.data().data() + L.lnf_g, params.data().data() + L.lnf_b,
             first_row, c.lnf_xhat, c.lnf_rstd, c.lnf_out);
  return c.lnf_out * cmat(params, L.lm_head, H, V);
}

// ---------------------------------------------------------------------------
// Backward.

void backward(const ModelParams& params, const ForwardCache& c,
              const Matrix& dlogits, std::span<double> grad) {
  const ModelConfig& cfg = params.config();
  const ParamLayout& L = params.layout();
  const int T = static_cast<int>(c.tokens.size());
  const int H = cfg.embed_dim;
  const int V = cfg.resolved_vocab_size();
  const int heads = cfg.num_heads;
  const int dh = H / heads;
  const int FF = cfg.ff_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (grad.size() != params.size()) throw MismatchError("gradient size");
  if (dlogits.rows() != T - c.first_row || dlogits.cols() != V) {
    throw MismatchError("dlogits shape does not match forward output");
  }
  double* g = grad.data();
  auto gmat = [&](std::size_t off, int rows, int cols) {
    return MatrixMap(g + off, rows, cols);
  };
  auto grow = [&](std::size_t off, int n) {
    return Eigen::Map<Eigen::RowVectorXd>(g + off, n);
  };

  gmat(L.lm_head, H, V).noalias() += c.lnf_out.transpose() * dlogits;
  const Matrix dlnf = dlogits * cmat(params, L.lm_head, H, V).transpose();
  Matrix dx = Matrix::Zero(T, H);
  layer_norm_backward(dlnf, c.lnf_xhat, c.lnf_rstd,
                      params.data().data() + L.lnf_g, g + L.lnf_g,
                      g + L.lnf_b, dx, c.first_row);

  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const auto& B = L.blocks[l];
    const auto& lc = c.layers[l];

    // Message passing: x_post = x_out + gate * scatter(mp_out).
    const int mi = L.mp_of_layer[l];
    if (mi >= 0 && lc.mp_out.rows() > 0) {
      const auto& M = L.mp[mi];
      const int K = static_cast<int>(lc.mp_out.rows());
      const double a = params.data()[M.gate];
      const double gate = cfg.gate_enabled ? std::tanh(a) : 1.0;
      Matrix dout = Matrix::Zero(K, H);
      double dgate = 0.0;
      for (int k = 0; k < K; ++k) {
        const int target = c.structure.anchor[k] + 1;
        if (target >= T) continue;
        dout.row(k) = gate * dx.row(target);
        dgate += dx.row(target).dot(lc.mp_out.row(k));
      }
      if (cfg.gate_enabled) g[M.gate] += dgate * (1.0 - gate * gate);
      gmat(M.w_self, H, H).noalias() += lc.mp_in.transpose() * dout;
      gmat(M.w_neigh, H, H).noalias() += lc.mp_agg.transpose() * dout;
      grow(M.bias, H) += column_sums(dout);
      Matrix din = dout * cmat(params, M.w_self, H, H).transpose();
      const Matrix dagg = dout * cmat(params, M.w_neigh, H, H).transpose();
      for (int k = 0; k < K; ++k) {
        const auto& nb = c.structure.in_neighbors[k];
        if (nb.empty()) continue;
        const double inv = 1.0 / static_cast<double>(nb.size());
        for (int j : nb) din.row(j) += inv * dagg.row(k);
      }
      for (int k = 0; k < K; ++k) dx.row(c.structure.anchor[k]) += din.row(k);
    }

    // MLP: x_out = x_mid + gelu(ln2(x_mid) W_in + b_in) W_out + b_out.
    gmat(B.w_out, FF, H).noalias() += lc.ff_act.transpose() * dx;
    grow(B.b_out, H) += column_sums(dx);
    Matrix dff = dx * cmat(params, B.w_out, FF, H).transpose();
    dff.array() *= lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    gmat(B.w_in, H, FF).noalias() += lc.ln2_out.transpose() * dff;
    grow(B.b_in, FF) += column_sums(dff);
    const Matrix dln2 = dff * cmat(params, B.w_in, H, FF).transpose();
    layer_norm_backward(dln2, lc.ln2_xhat, lc.ln2_rstd,
                        params.data().data() + B.ln2_g, g + B.ln2_g,
                        g + B.ln2_b, dx, 0);

    // Attention: x_mid = x_in + attn W_o + b_o.
    gmat(B.w_o, H, H).noalias() += lc.attn.transpose() * dx;
    grow(B.b_o, H) += column_sums(dx);
    const Matrix dattn = dx * cmat(params, B.w_o, H, H).transpose();
    Matrix dqkv(T, 3 * H);
    for (int h = 0; h < heads; ++h) {
      const auto q = lc.qkv.middleCols(h * dh, dh);
      const auto k = lc.qkv.middleCols(H + h * dh, dh);
      const auto v = lc.qkv.middleCols(2 * H + h * dh, dh);
      const Matrix& p = lc.probs[h];
      const auto dout = dattn.middleCols(h * dh, dh);
      Matrix dp = dout * v.transpose();
      dqkv.middleCols(2 * H + h * dh, dh).noalias() = p.transpose() * dout;
      const Eigen::VectorXd rowdot = (p.array() * dp.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - rowdot.array())).matrix();
      dqkv.middleCols(h * dh, dh).noalias() = (dp * k) * scale;
      dqkv.middleCols(H + h * dh, dh).noalias() = (dp.transpose() * q) * scale;
    }
    gmat(B.w_qkv, H, 3 * H).noalias() += lc.ln1_out.transpose() * dqkv;
    grow(B.b_qkv, 3 * H) += column_sums(dqkv);
    const Matrix dln1 = dqkv * cmat(params, B.w_qkv, H, 3 * H).transpose();
    layer_norm_backward(dln1, lc.ln1_xhat, lc.ln1_rstd,
                        params.data().data() + B.ln1_g, g + B.ln1_g,
                        g + B.ln1_b, dx, 0);
  }

  auto dtok = gmat(L.tok_emb, V, H);
  auto dpos = gmat(L.pos_emb, cfg.max_seq_len, H);
  for (int t = 0; t < T; ++t) {
    dtok.row(c.tokens[t]) += dx.row(t);
    dpos.row(t) += dx.row(t);
  }
}

}  // namespace graphseq
