#include "graphseq/sampler.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphseq/errors.h"
#include "graphseq/maskgraph.h"
#include "graphseq/random.h"
#include "graphseq/vocab.h"

namespace graphseq {

namespace {

constexpr double kLayerNormEps = 1e-5;

Eigen::RowVectorXd layer_norm_row(const Eigen::RowVectorXd& x,
                                  const double* gain, const double* bias) {
  const int h = static_cast<int>(x.size());
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
  Eigen::Map<const Eigen::RowVectorXd> g(gain, h), b(bias, h);
  return ((x.array() - mean) * rs).matrix().cwiseProduct(g) + b;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

int draw(const Vector& logits, const SamplingPolicy& policy, Rng& rng) {
  const int v = static_cast<int>(logits.size());
  if (policy.greedy) {
    int best = 0;
    for (int i = 1; i < v; ++i) {
      if (logits(i) > logits(best)) best = i;
    }
    return best;
  }
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  int keep = v;
  if (policy.top_k > 0 && policy.top_k < v) {
    keep = policy.top_k;
    std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                      [&](int a, int b) {
                        return logits(a) > logits(b) ||
                               (logits(a) == logits(b) && a < b);
                      });
    order.resize(keep);
    std::sort(order.begin(), order.end());
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int i : order) mx = std::max(mx, logits(i));
  std::vector<double> p(order.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    p[i] = std::exp((logits(order[i]) - mx) / policy.temperature);
    sum += p[i];
  }
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < order.size(); ++i) {
    u -= p[i];
    if (u < 0.0) return order[i];
  }
  return order.back();
}

}  // namespace

std::vector<int> make_prompt(std::string_view description) {
  std::vector<int> out{tok::kBOS};
  const std::vector<int> body = encode(description);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(tok::kSEP);
  return out;
}

std::vector<int> make_sequence(std::string_view description,
                               std::span<const int> graph_tokens) {
  std::vector<int> out = make_prompt(description);
  out.insert(out.end(), graph_tokens.begin(), graph_tokens.end());
  out.push_back(tok::kEOS);
  return out;
}

int graph_start_of(std::span<const int> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == tok::kSEP) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(tokens.size());
}

IncrementalDecoder::IncrementalDecoder(const ModelParams& params,
                                       int graph_start)
    : params_(params), graph_start_(graph_start) {
  const ModelConfig& cfg = params.config();
  keys_.assign(cfg.num_layers, Matrix(cfg.max_seq_len, cfg.embed_dim));
  values_.assign(cfg.num_layers, Matrix(cfg.max_seq_len, cfg.embed_dim));
  hidden_.assign(params.layout().mp.size(),
                 Matrix(cfg.max_seq_len, cfg.embed_dim));
}

Vector IncrementalDecoder::push(int token) {
  const ModelConfig& cfg = params_.config();
  const ParamLayout& L = params_.layout();
  const int H = cfg.embed_dim;
  const int V = cfg.resolved_vocab_size();
  const int heads = cfg.num_heads;
  const int dh = H / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int t = size();
  if (t >= cfg.max_seq_len) throw MismatchError("decoder is full");
  if (token < 0 || token >= V) throw MismatchError("token id out of range");
  const double* P = params_.data().data();
  auto mat = [&](std::size_t off, int r, int c) {
    return ConstMatrixMap(P + off, r, c);
  };
  auto row = [&](std::size_t off, int n) {
    return Eigen::Map<const Eigen::RowVectorXd>(P + off, n);
  };

  tokens_.push_back(token);

  // Derived nodes completed by this token inject their output here.
  GraphStructure fresh;
  if (cfg.mp_mode != MpMode::kNone && t >= graph_start_) {
    parser_.push(token);
    DerivedGraph g =
        cfg.mp_mode == MpMode::kEdges
            ? static_cast<DerivedGraph>(edge_graph_from(parser_))
            : static_cast<DerivedGraph>(correspondence_graph_from(parser_));
    const auto in = g.in_neighbors();
    for (int k = 0; k < g.size(); ++k) {
      if (g.anchor[k] + graph_start_ + 1 != t) continue;
      fresh.anchor.push_back(g.anchor[k] + graph_start_);
      std::vector<int> nb;
      for (int j : in[k]) nb.push_back(g.anchor[j] + graph_start_);
      fresh.in_neighbors.push_back(std::move(nb));
    }
  }

  Eigen::RowVectorXd x = mat(L.tok_emb, V, H).row(token) +
                         mat(L.pos_emb, cfg.max_seq_len, H).row(t);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto& B = L.blocks[l];
    const Eigen::RowVectorXd a = layer_norm_row(x, P + B.ln1_g, P + B.ln1_b);
    const Eigen::RowVectorXd qkv =
        a * mat(B.w_qkv, H, 3 * H) + row(B.b_qkv, 3 * H);
    keys_[l].row(t) = qkv.segment(H, H);
    values_[l].row(t) = qkv.segment(2 * H, H);
    Eigen::RowVectorXd attn(H);
    for (int h = 0; h < heads; ++h) {
      const auto K = keys_[l].block(0, h * dh, t + 1, dh);
      const auto Vv = values_[l].block(0, h * dh, t + 1, dh);
      Eigen::RowVectorXd s = (qkv.segment(h * dh, dh) * K.transpose()) * scale;
      const double mx = s.maxCoeff();
      double sum = 0.0;
      for (int j = 0; j <= t; ++j) {
        s(j) = std::exp(s(j) - mx);
        sum += s(j);
      }
      s /= sum;
      attn.segment(h * dh, dh) = s * Vv;
    }
    x += attn * mat(B.w_o, H, H) + row(B.b_o, H);
    const Eigen::RowVectorXd m = layer_norm_row(x, P + B.ln2_g, P + B.ln2_b);
    Eigen::RowVectorXd ff = m * mat(B.w_in, H, cfg.ff_dim) +
                            row(B.b_in, cfg.ff_dim);
    ff = ff.unaryExpr([](double v) { return gelu(v); });
    x += ff * mat(B.w_out, cfg.ff_dim, H) + row(B.b_out, H);

    const int mi = L.mp_of_layer[l];
    if (mi < 0) continue;
    hidden_[mi].row(t) = x;
    const auto& M = L.mp[mi];
    const double gate = cfg.gate_enabled ? std::tanh(P[M.gate]) : 1.0;
    for (int k = 0; k < fresh.size(); ++k) {
      const Eigen::RowVectorXd self = hidden_[mi].row(fresh.anchor[k]);
      Eigen::RowVectorXd agg = Eigen::RowVectorXd::Zero(H);
      const auto& nb = fresh.in_neighbors[k];
      for (int p : nb) agg += hidden_[mi].row(p);
      if (!nb.empty()) agg /= static_cast<double>(nb.size());
      const Eigen::RowVectorXd out = self * mat(M.w_self, H, H) +
                                     agg * mat(M.w_neigh, H, H) +
                                     row(M.bias, H);
      x += gate * out;
    }
  }
  const Eigen::RowVectorXd f = layer_norm_row(x, P + L.lnf_g, P + L.lnf_b);
  return (f * mat(L.lm_head, H, V)).transpose();
}

SampleOutput sample(const ModelParams& params, std::span<const int> prompt,
                    const SamplingPolicy& policy, int max_new_tokens,
                    std::uint64_t seed, bool keep_logits) {
  const ModelConfig& cfg = params.config();
  if (prompt.empty() || static_cast<int>(prompt.size()) >= cfg.max_seq_len) {
    throw MismatchError("prompt must be non-empty and shorter than max_seq_len");
  }
  SampleOutput out;
  out.tokens.assign(prompt.begin(), prompt.end());
  IncrementalDecoder decoder(params, graph_start_of(prompt));
  Vector logits;
  for (int tkn : prompt) logits = decoder.push(tkn);
  Rng rng(seed);
  for (int step = 0; step < max_new_tokens; ++step) {
    if (keep_logits) out.step_logits.push_back(logits);
    const int next = draw(logits, policy, rng);
    if (next == tok::kEOS) {
      out.hit_eos = true;
      break;
    }
    out.tokens.push_back(next);
    out.generated.push_back(next);
    if (decoder.size() >= cfg.max_seq_len) break;
    logits = decoder.push(next);
  }
  return out;
}

}  // namespace graphseq
