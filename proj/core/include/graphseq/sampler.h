#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "graphseq/codec.h"
#include "graphseq/model.h"

namespace graphseq {

struct SamplingPolicy {
  bool greedy = false;
  double temperature = 1.0;
  int top_k = 0;  // 0 keeps the full distribution

  static SamplingPolicy argmax() { return {true, 1.0, 0}; }
  static SamplingPolicy with_temperature(double t, int top_k = 0) {
    return {false, t, top_k};
  }
};

// <BOS> description <SEP>; the graph region starts right after it.
std::vector<int> make_prompt(std::string_view description);

// Full training sequence: <BOS> description <SEP> graph <EOS>.
std::vector<int> make_sequence(std::string_view description,
                               std::span<const int> graph_tokens);

// Position of the first <SEP> plus one, or the sequence length if absent.
int graph_start_of(std::span<const int> tokens);

// Token-at-a-time forward pass with cached keys, values and pre-injection
// hidden states. Produces the same logits as forward() on the full prefix:
// the derived graph is rebuilt from the incremental parse after every token
// and a message-passing output is injected at the token that completes its
// derived node.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams& params, int graph_start);

  // Appends `token` and returns the logits predicting the token after it.
  Vector push(int token);
  int size() const { return static_cast<int>(tokens_.size()); }
  const PartialGraphState& parse_state() const { return parser_; }

 private:
  const ModelParams& params_;
  int graph_start_;
  std::vector<int> tokens_;
  std::vector<Matrix> keys_, values_;  // per layer, max_seq_len x H
  std::vector<Matrix> hidden_;         // per message-passing layer
  PartialGraphState parser_;
};

struct SampleOutput {
  std::vector<int> tokens;     // prompt followed by generated tokens
  std::vector<int> generated;  // generated tokens, <EOS> excluded
  bool hit_eos = false;
  // Logits that produced generated token i (only if requested).
  std::vector<Vector> step_logits;
};

// Autoregressive generation from `prompt` until <EOS>, max_new_tokens or
// max_seq_len. Deterministic for a given seed.
SampleOutput sample(const ModelParams& params, std::span<const int> prompt,
                    const SamplingPolicy& policy, int max_new_tokens,
                    std::uint64_t seed, bool keep_logits = false);

}  // namespace graphseq
