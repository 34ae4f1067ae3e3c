#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphseq/codec.h"
#include "graphseq/text_graph.h"

namespace graphseq {

struct Arc {
  int from = 0;
  int to = 0;

  friend bool operator==(const Arc&, const Arc&) = default;
  friend auto operator<=>(const Arc&, const Arc&) = default;
};

// A graph derived from a serialization whose nodes are anchored to token
// positions. Every arc points from an earlier derived node to a later one,
// and anchors are strictly increasing, so aggregating over in-neighbours
// only reads earlier tokens.
struct DerivedGraph {
  // Token index of the last token describing each derived node.
  std::vector<int> anchor;
  std::vector<Arc> arcs;

  int size() const { return static_cast<int>(anchor.size()); }
  std::vector<std::vector<int>> in_neighbors() const;
};

// Nodes are the source edges in serialization order; arc (j, k) exists iff
// edges j < k share a source node.
struct EdgeGraph : DerivedGraph {
  std::vector<int> source_edge;  // index into TextGraph::edges()
};

// Nodes are node mentions; arcs link consecutive mentions of one node.
struct CorrespondenceGraph : DerivedGraph {
  std::vector<int> source_node;
  std::vector<int> occurrence;
};

// Both builders throw MismatchError if sg was not produced from g.
EdgeGraph build_edge_graph(const SerializedGraph& sg, const TextGraph& g);
CorrespondenceGraph build_correspondence_graph(const SerializedGraph& sg,
                                               const TextGraph& g);

// Same constructions over whatever a prefix parse has committed so far.
EdgeGraph edge_graph_from(const PartialGraphState& state);
CorrespondenceGraph correspondence_graph_from(const PartialGraphState& state);

enum class MaskKind { kCausal, kGraph, kCausalGraph };

// Dense boolean attention mask; at(q, s) means position q may attend to s.
class MaskMatrix {
 public:
  explicit MaskMatrix(int n = 0) : n_(n), bits_(static_cast<std::size_t>(n) * n, 0) {}

  int size() const { return n_; }
  bool at(int q, int s) const { return bits_[index(q, s)] != 0; }
  void set(int q, int s, bool v) { bits_[index(q, s)] = v ? 1 : 0; }

  // One row per line of '0'/'1' characters.
  std::string dump() const;

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  std::size_t index(int q, int s) const {
    return static_cast<std::size_t>(q) * n_ + s;
  }
  int n_;
  std::vector<std::uint8_t> bits_;
};

// Causal: lower triangle including the diagonal. Graph: diagonal plus the
// positions of adjacent derived nodes (both directions). CausalGraph: the
// conjunction of the two. `offset` is added to every anchor; graph kinds
// require `ref` and throw MismatchError when an anchor falls outside
// [0, seq_len).
MaskMatrix build_mask(MaskKind kind, int seq_len,
                      const DerivedGraph* ref = nullptr, int offset = 0);

}  // namespace graphseq
