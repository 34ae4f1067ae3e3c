#include "graphseq/codec.h"

#include <algorithm>
#include <map>
#include <tuple>

#include "graphseq/errors.h"
#include "graphseq/vocab.h"

namespace graphseq {

namespace {

// A label is 1+ plain characters with an optional trailing "<D>digits".
void check_label(std::string_view label, std::string_view what) {
  std::vector<int> ids;
  try {
    ids = encode(label);
  } catch (const TokenizerError& e) {
    throw InvalidGraphError(std::string(what) + " label: " + e.what());
  }
  PartialGraphState probe;
  probe.push(tok::kPN);
  for (int id : ids) probe.push(id);
  probe.push(tok::kE);
  if (probe.malformed()) {
    throw InvalidGraphError(std::string(what) + " label '" +
                            std::string(label) +
                            "' is not serializable: " + probe.failure_message());
  }
}

}  // namespace

TextGraph disambiguate(const TextGraph& g) {
  std::map<std::string, int> count;
  for (const Node& v : g.nodes()) ++count[v.label];
  std::map<std::string, int> next;
  std::vector<std::string> labels;
  labels.reserve(g.num_nodes());
  for (const Node& v : g.nodes()) {
    if (count[v.label] > 1) {
      labels.push_back(v.label + "<D>" + std::to_string(next[v.label]++));
    } else {
      labels.push_back(v.label);
    }
  }
  return g.with_labels(std::move(labels));
}

std::vector<int> edge_order(const TextGraph& g, EdgeOrderPolicy policy) {
  const int m = static_cast<int>(g.num_edges());
  std::vector<int> order;
  order.reserve(m);
  if (policy.kind == EdgeOrderPolicy::Kind::kInsertion) {
    for (int i = 0; i < m; ++i) order.push_back(i);
    return order;
  }
  const int n = static_cast<int>(g.num_nodes());
  if (policy.root >= n) throw InvalidGraphError("DFS root out of range");

  // Incident edges of each node sorted by (edge label, other end, direction).
  std::vector<std::vector<std::tuple<std::string_view, int, int, int>>> adj(n);
  for (int i = 0; i < m; ++i) {
    const Edge& e = g.edges()[i];
    adj[e.pred].emplace_back(e.label, e.succ, 0, i);
    if (e.succ != e.pred) adj[e.succ].emplace_back(e.label, e.pred, 1, i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());

  std::vector<char> visited(n, 0), emitted(m, 0);
  std::vector<std::pair<int, std::size_t>> stack;
  auto run_from = [&](int root) {
    visited[root] = 1;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next == adj[u].size()) {
        stack.pop_back();
        continue;
      }
      const auto& [label, other, dir, edge] = adj[u][next++];
      (void)label;
      (void)dir;
      if (emitted[edge]) continue;
      emitted[edge] = 1;
      order.push_back(edge);
      if (!visited[other]) {
        visited[other] = 1;
        stack.emplace_back(other, 0);
      }
    }
  };
  if (n > 0) run_from(policy.root < 0 ? 0 : policy.root);
  for (int v = 0; v < n; ++v) {
    if (!visited[v]) run_from(v);
  }
  return order;
}

SerializedGraph serialize(const TextGraph& g, EdgeOrderPolicy policy) {
  if (g.num_edges() == 0) {
    throw InvalidGraphError("cannot serialize a graph with no edges");
  }
  {
    std::vector<std::string_view> labels;
    for (const Node& v : g.nodes()) {
      check_label(v.label, "node");
      labels.push_back(v.label);
    }
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
      throw InvalidGraphError(
          "serialize requires distinct node labels; call disambiguate()");
    }
  }
  std::vector<std::vector<int>> label_tokens;
  for (const Node& v : g.nodes()) label_tokens.push_back(encode(v.label));

  SerializedGraph sg;
  sg.edge_order = edge_order(g, policy);
  std::vector<int> occurrences(g.num_nodes(), 0);
  for (std::size_t k = 0; k < sg.edge_order.size(); ++k) {
    const Edge& e = g.edges()[sg.edge_order[k]];
    check_label(e.label, "edge");
    auto& t = sg.tokens;
    t.push_back(tok::kPN);
    t.insert(t.end(), label_tokens[e.pred].begin(), label_tokens[e.pred].end());
    sg.node_instances.push_back({e.pred, occurrences[e.pred]++,
                                 static_cast<int>(k), true,
                                 static_cast<int>(t.size()) - 1});
    t.push_back(tok::kE);
    const std::vector<int> edge_ids = encode(e.label);
    t.insert(t.end(), edge_ids.begin(), edge_ids.end());
    t.push_back(tok::kSN);
    t.insert(t.end(), label_tokens[e.succ].begin(), label_tokens[e.succ].end());
    sg.node_instances.push_back({e.succ, occurrences[e.succ]++,
                                 static_cast<int>(k), false,
                                 static_cast<int>(t.size()) - 1});
    sg.edge_last_token.push_back(static_cast<int>(t.size()) - 1);
  }
  sg.text = decode(sg.tokens);
  return sg;
}

TextGraph deserialize_tokens(std::span<const int> tokens) {
  PartialGraphState state = incremental_parse(tokens);
  state.finish();
  return state.graph();
}

TextGraph deserialize(std::string_view text) {
  std::vector<int> ids;
  try {
    ids = encode(text);
  } catch (const TokenizerError& e) {
    throw SyntaxError(e.what());
  }
  return deserialize_tokens(ids);
}

}  // namespace graphseq
