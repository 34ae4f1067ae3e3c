#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace graphseq {

struct Node {
  int id = 0;
  std::string label;
};

struct Edge {
  int pred = 0;
  int succ = 0;
  std::string label;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Directed graph with text-labelled nodes and edges.
//
// Node ids are dense, 0..N-1 in insertion order. Construction rejects
// dangling edge endpoints, duplicate (pred, succ, label) triples and
// isolated nodes, since a bag-of-edges serialization cannot carry a node
// without incident edges. Self-loops and parallel edges with different
// labels are allowed. Immutable once built.
class TextGraph {
 public:
  TextGraph() = default;
  TextGraph(std::vector<std::string> node_labels, std::vector<Edge> edges);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::string& label(int node) const { return nodes_.at(node).label; }

  // Same graph with relabelled nodes; the edge list is untouched.
  TextGraph with_labels(std::vector<std::string> node_labels) const;

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

// Removes a trailing "<D>digits" disambiguation suffix, if present.
std::string_view strip_disambiguation(std::string_view label);

// Sorted total degree (in + out) per node. A self-loop adds 2.
std::vector<int> degree_sequence(const TextGraph& g);

// Isomorphism-invariant string for g: node labels are compared with their
// disambiguation suffixes stripped, so two graphs that differ only in how
// same-label nodes were numbered produce the same string.
std::string canonical_form(const TextGraph& g);

// True iff a and b are equal up to a bijection between same-label nodes.
bool graph_equal(const TextGraph& a, const TextGraph& b);

enum class PropertyKind { kValencyElectrons, kRingCount };

std::string_view property_kind_name(PropertyKind kind);
PropertyKind parse_property_kind(std::string_view name);

// The conditioning text D_f. `text()` is a pure function of (kind, target).
struct FunctionalDescription {
  PropertyKind kind = PropertyKind::kValencyElectrons;
  double target = 0.0;

  std::string text() const;
  // Inverse of text(); throws ConfigError on unrecognised text.
  static FunctionalDescription parse(std::string_view text);
};

// One line of a dataset file: `desc=<text>\tgraph=<serialized graph>`.
struct Record {
  std::string desc;
  std::string graph;

  friend bool operator==(const Record&, const Record&) = default;
};

std::string format_record(const Record& r);
Record parse_record(std::string_view line);

// Skips empty lines. Throws IoError on an unreadable file or bad line.
std::vector<Record> read_records(const std::string& path);
void write_records(const std::string& path, const std::vector<Record>& records);

}  // namespace graphseq
