#pragma once

#include <cmath>
#include <vector>

#include "graphseq/codec.h"
#include "graphseq/datagen.h"
#include "graphseq/loss.h"
#include "graphseq/model.h"
#include "graphseq/random.h"
#include "graphseq/sampler.h"
#include "graphseq/vocab.h"
#include "test_support.h"

namespace graphseq::testing {

struct Sequence {
  std::vector<int> tokens;
  int graph_start = 0;
};

// <BOS> short description <SEP> serialized random graph <EOS>, at most
// max_len tokens (the graph is truncated if needed).
inline Sequence random_sequence(Rng& rng, int max_len = 80, int max_nodes = 5) {
  GraphGenOptions o;
  o.max_nodes = max_nodes;
  const TextGraph g = disambiguate(random_graph(rng, o));
  const std::string desc = "v" + std::to_string(rng.uniform_int(100));
  Sequence s;
  s.tokens = make_sequence(desc, serialize(g).tokens);
  s.graph_start = graph_start_of(s.tokens);
  if (static_cast<int>(s.tokens.size()) > max_len) s.tokens.resize(max_len);
  return s;
}

inline void randomize_gates(ModelParams& p, Rng& rng, double scale = 1.0) {
  for (std::size_t i : p.gate_indices()) {
    p.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
  }
}

// Adds N(0, sd) noise to every parameter, so that biases, gains and gates
// all carry non-trivial values.
inline void jitter(ModelParams& p, Rng& rng, double sd) {
  for (double& v : p.data()) v += sd * rng.normal();
}

inline std::vector<int> next_token_targets(const Sequence& s, int first_row) {
  std::vector<int> t(s.tokens.begin() + first_row + 1, s.tokens.end());
  t.push_back(kIgnoreTarget);
  return t;
}

inline double sequence_loss(const ModelParams& p, const Sequence& s,
                            int first_row) {
  const GraphStructure st =
      derive_structure(s.tokens, s.graph_start, p.config().mp_mode);
  const Matrix logits = forward(p, s.tokens, st, nullptr, first_row);
  return token_nll(logits, next_token_targets(s, first_row));
}

inline std::vector<double> analytic_grad(const ModelParams& p,
                                         const Sequence& s, int first_row) {
  const GraphStructure st =
      derive_structure(s.tokens, s.graph_start, p.config().mp_mode);
  ForwardCache cache;
  const Matrix logits = forward(p, s.tokens, st, &cache, first_row);
  Matrix dlogits;
  token_nll(logits, next_token_targets(s, first_row), &dlogits);
  std::vector<double> grad(p.size(), 0.0);
  backward(p, cache, dlogits, grad);
  return grad;
}

inline double central_difference(ModelParams& p, const Sequence& s,
                                 int first_row, std::size_t index,
                                 double step = 1e-5) {
  const double saved = p.data()[index];
  p.data()[index] = saved + step;
  const double up = sequence_loss(p, s, first_row);
  p.data()[index] = saved - step;
  const double down = sequence_loss(p, s, first_row);
  p.data()[index] = saved;
  return (up - down) / (2.0 * step);
}

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / (std::fabs(a) + std::fabs(b) + 1e-8);
}

}  // namespace graphseq::testing
