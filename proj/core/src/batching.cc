#include "graphseq/batching.h"

#include <algorithm>
#include <numeric>

#include "graphseq/errors.h"
#include "graphseq/loss.h"
#include "graphseq/random.h"
#include "graphseq/sampler.h"
#include "graphseq/vocab.h"

namespace graphseq {

std::vector<int> Example::targets() const {
  std::vector<int> out(tokens.begin() + graph_start, tokens.end());
  out.push_back(kIgnoreTarget);
  return out;
}

Example make_example(const Record& record) {
  Example ex;
  ex.tokens = make_sequence(record.desc, encode(record.graph));
  ex.graph_start = graph_start_of(ex.tokens);
  return ex;
}

std::vector<Example> make_examples(const std::vector<Record>& records) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back(make_example(r));
  return out;
}

long Batch::total_targets() const {
  return std::accumulate(target_counts.begin(), target_counts.end(), 0L);
}

std::vector<Batch> make_batches(const std::vector<Example>& dataset,
                                int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed({seed, 0x62617463ULL, static_cast<std::uint64_t>(epoch)}));
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  }
  std::vector<Batch> out;
  for (int start = 0; start < n; start += batch_size) {
    Batch b;
    b.indices.assign(order.begin() + start,
                     order.begin() + std::min(n, start + batch_size));
    for (int i : b.indices) b.width = std::max(b.width, dataset[i].length());
    b.tokens.assign(b.indices.size() * b.width, tok::kPAD);
    for (std::size_t r = 0; r < b.indices.size(); ++r) {
      const Example& ex = dataset[b.indices[r]];
      std::copy(ex.tokens.begin(), ex.tokens.end(),
                b.tokens.begin() + r * b.width);
      b.lengths.push_back(ex.length());
      b.target_counts.push_back(ex.target_count());
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace graphseq
