#pragma once

#include <cstdint>
#include <vector>

#include "graphseq/text_graph.h"

namespace graphseq {

// A tokenized training sequence <BOS> desc <SEP> graph <EOS>. The loss
// covers the graph tokens and <EOS>, i.e. tokens[graph_start..].
struct Example {
  std::vector<int> tokens;
  int graph_start = 0;

  int length() const { return static_cast<int>(tokens.size()); }
  int target_count() const { return length() - graph_start; }
  // Next-token targets aligned with logits rows graph_start-1..length()-1;
  // the last row has nothing to predict and is ignored.
  std::vector<int> targets() const;
};

// Throws TokenizerError on text outside the vocabulary.
Example make_example(const Record& record);
std::vector<Example> make_examples(const std::vector<Record>& records);

struct Batch {
  std::vector<int> indices;  // into the dataset
  int width = 0;             // padded length (max true length)
  std::vector<int> tokens;   // indices.size() x width, padded with <PAD>
  std::vector<int> lengths;  // true sequence lengths
  std::vector<int> target_counts;

  int size() const { return static_cast<int>(indices.size()); }
  long total_targets() const;
};

// Shuffles the dataset with a permutation keyed by (seed, epoch) and cuts
// it into batches of batch_size (the last one may be shorter).
std::vector<Batch> make_batches(const std::vector<Example>& dataset,
                                int batch_size, std::uint64_t seed, int epoch);

}  // namespace graphseq
