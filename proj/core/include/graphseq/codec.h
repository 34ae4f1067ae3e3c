#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "graphseq/text_graph.h"

namespace graphseq {

// Order in which edges are listed in the serialization.
struct EdgeOrderPolicy {
  enum class Kind { kDepthFirst, kInsertion };
  Kind kind = Kind::kDepthFirst;
  // DFS start node; -1 selects the lowest node id.
  int root = -1;

  static EdgeOrderPolicy depth_first(int root = -1) {
    return {Kind::kDepthFirst, root};
  }
  static EdgeOrderPolicy insertion() { return {Kind::kInsertion, -1}; }
};

// One occurrence of a source-graph node inside the serialization.
struct NodeInstance {
  int node = 0;           // source node id
  int occurrence = 0;     // 0 for the first mention of that node
  int edge_position = 0;  // 0-based serialization position of its edge
  bool is_pred = false;   // true for the <PN> slot
  int last_token = 0;     // index of the final token of the label
};

struct SerializedGraph {
  std::string text;
  std::vector<int> tokens;
  // edge_order[k] is the index into g.edges() of the k-th serialized edge.
  std::vector<int> edge_order;
  // f_index, 0-based: token index of the last token of edge k.
  std::vector<int> edge_last_token;
  // Every node mention, in token order.
  std::vector<NodeInstance> node_instances;
};

// Appends "<D>k" (k = 0, 1, ... in node-id order) to every label shared by
// two or more nodes. Unique labels are left alone.
TextGraph disambiguate(const TextGraph& g);

// Edge permutation for `policy`. The depth-first order visits incident
// edges of both directions, sorted by (edge label, other endpoint id), and
// emits each edge the first time it is traversed.
std::vector<int> edge_order(const TextGraph& g, EdgeOrderPolicy policy);

// Requires pairwise distinct node labels (see disambiguate) and at least
// one edge; throws InvalidGraphError otherwise.
SerializedGraph serialize(const TextGraph& g, EdgeOrderPolicy policy = {});

// Inverse of serialize. Throws SyntaxError, DuplicateEdgeError or
// EmptyLabelError on malformed input.
TextGraph deserialize(std::string_view text);
TextGraph deserialize_tokens(std::span<const int> tokens);

// ---------------------------------------------------------------------------
// Incremental parsing over a growing token prefix.

enum class ParserState {
  kExpectPN,    // nothing consumed yet
  kPredLabel,   // inside the <PN> label
  kEdgeLabel,   // inside the <E> label
  kSuccLabel,   // inside the <SN> label
  kDone,        // consumed <EOS> or finish()
  kMalformed,
};

enum class ParseFailure { kNone, kSyntax, kDuplicateEdge, kEmptyLabel };

struct ParsedEdge {
  int pred = 0;
  int succ = 0;
  std::string label;
  int last_token = 0;    // f_index
  int completed_at = 0;  // index of the terminating token
};

struct ParsedOccurrence {
  int node = 0;
  int occurrence = 0;
  int edge_position = 0;
  bool is_pred = false;
  int last_token = 0;
  int completed_at = 0;
};

// Parser state after consuming a token prefix. Labels are only committed
// once their terminating token arrives, so nothing recorded for a prefix
// ever changes when more tokens are pushed. The first grammar violation
// freezes the state as kMalformed; later tokens are counted but ignored.
class PartialGraphState {
 public:
  void push(int token);
  // Treats end of input as the terminator of a pending successor label.
  void finish();

  ParserState state() const { return state_; }
  bool malformed() const { return state_ == ParserState::kMalformed; }
  ParseFailure failure() const { return failure_; }
  const std::string& failure_message() const { return message_; }
  int position() const { return position_; }

  const std::vector<std::string>& node_labels() const { return labels_; }
  const std::vector<ParsedEdge>& edges() const { return edges_; }
  const std::vector<ParsedOccurrence>& occurrences() const {
    return occurrences_;
  }

  // Graph of the completed edges. Throws the matching ParseError if the
  // state is malformed or not terminated.
  TextGraph graph() const;

 private:
  void fail(ParseFailure kind, std::string message);
  // Validates the label in buffer_ and resolves it to a node id (or, for
  // edge labels, just validates). Returns false after calling fail().
  bool close_label(std::string& out);
  int node_id(const std::string& label);
  void add_occurrence(int node, bool is_pred, int last_token);
  void complete_edge(int completed_at);

  ParserState state_ = ParserState::kExpectPN;
  ParseFailure failure_ = ParseFailure::kNone;
  std::string message_;
  int position_ = 0;
  std::vector<int> buffer_;
  std::string pred_label_, edge_label_;
  int pred_node_ = -1;
  int pred_last_token_ = 0;
  std::vector<std::string> labels_;
  std::vector<int> occurrence_count_;
  std::vector<ParsedEdge> edges_;
  std::vector<ParsedOccurrence> occurrences_;
  std::set<std::tuple<int, int, std::string>> seen_;
};

PartialGraphState incremental_parse(std::span<const int> tokens);

}  // namespace graphseq
