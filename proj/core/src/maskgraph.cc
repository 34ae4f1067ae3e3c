#include "graphseq/maskgraph.h"

#include <algorithm>

#include "graphseq/errors.h"

namespace graphseq {

namespace {

// Checks that sg is a serialization of g by re-parsing its tokens.
void check_alignment(const SerializedGraph& sg, const TextGraph& g) {
  if (sg.edge_order.size() != g.num_edges() ||
      sg.edge_last_token.size() != g.num_edges()) {
    throw MismatchError("serialized edge count differs from graph");
  }
  PartialGraphState parsed = incremental_parse(sg.tokens);
  parsed.finish();
  if (parsed.malformed() || parsed.edges().size() != g.num_edges()) {
    throw MismatchError("serialized tokens do not parse to the graph");
  }
  for (std::size_t k = 0; k < parsed.edges().size(); ++k) {
    const ParsedEdge& pe = parsed.edges()[k];
    const int idx = sg.edge_order[k];
    if (idx < 0 || idx >= static_cast<int>(g.num_edges())) {
      throw MismatchError("edge order index out of range");
    }
    const Edge& e = g.edges()[idx];
    if (parsed.node_labels()[pe.pred] != g.label(e.pred) ||
        parsed.node_labels()[pe.succ] != g.label(e.succ) ||
        pe.label != e.label || pe.last_token != sg.edge_last_token[k]) {
      throw MismatchError("serialized edge " + std::to_string(k) +
                          " does not match the graph");
    }
  }
}

template <typename EndpointsOf>
void add_shared_node_arcs(int m, EndpointsOf endpoints, std::vector<Arc>& out) {
  for (int k = 0; k < m; ++k) {
    const auto [pk, sk] = endpoints(k);
    for (int j = 0; j < k; ++j) {
      const auto [pj, sj] = endpoints(j);
      if (pj == pk || pj == sk || sj == pk || sj == sk) out.push_back({j, k});
    }
  }
}

}  // namespace

std::vector<std::vector<int>> DerivedGraph::in_neighbors() const {
  std::vector<std::vector<int>> in(anchor.size());
  for (const Arc& a : arcs) in[a.to].push_back(a.from);
  return in;
}

EdgeGraph build_edge_graph(const SerializedGraph& sg, const TextGraph& g) {
  check_alignment(sg, g);
  EdgeGraph eg;
  eg.anchor = sg.edge_last_token;
  eg.source_edge = sg.edge_order;
  const int m = static_cast<int>(sg.edge_order.size());
  add_shared_node_arcs(
      m,
      [&](int k) {
        const Edge& e = g.edges()[sg.edge_order[k]];
        return std::pair{e.pred, e.succ};
      },
      eg.arcs);
  return eg;
}

CorrespondenceGraph build_correspondence_graph(const SerializedGraph& sg,
                                               const TextGraph& g) {
  check_alignment(sg, g);
  CorrespondenceGraph cg;
  std::vector<int> last(g.num_nodes(), -1);
  for (const NodeInstance& inst : sg.node_instances) {
    const int id = cg.size();
    cg.anchor.push_back(inst.last_token);
    cg.source_node.push_back(inst.node);
    cg.occurrence.push_back(inst.occurrence);
    if (last[inst.node] >= 0) cg.arcs.push_back({last[inst.node], id});
    last[inst.node] = id;
  }
  return cg;
}

EdgeGraph edge_graph_from(const PartialGraphState& state) {
  EdgeGraph eg;
  const auto& edges = state.edges();
  for (const ParsedEdge& e : edges) eg.anchor.push_back(e.last_token);
  eg.source_edge.resize(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    eg.source_edge[k] = static_cast<int>(k);
  }
  add_shared_node_arcs(
      static_cast<int>(edges.size()),
      [&](int k) { return std::pair{edges[k].pred, edges[k].succ}; }, eg.arcs);
  return eg;
}

CorrespondenceGraph correspondence_graph_from(const PartialGraphState& state) {
  CorrespondenceGraph cg;
  std::vector<int> last(state.node_labels().size(), -1);
  for (const ParsedOccurrence& occ : state.occurrences()) {
    const int id = cg.size();
    cg.anchor.push_back(occ.last_token);
    cg.source_node.push_back(occ.node);
    cg.occurrence.push_back(occ.occurrence);
    if (last[occ.node] >= 0) cg.arcs.push_back({last[occ.node], id});
    last[occ.node] = id;
  }
  return cg;
}

std::string MaskMatrix::dump() const {
  std::string out;
  out.reserve(static_cast<std::size_t>(n_) * (n_ + 1));
  for (int q = 0; q < n_; ++q) {
    for (int s = 0; s < n_; ++s) out += at(q, s) ? '1' : '0';
    out += '\n';
  }
  return out;
}

MaskMatrix build_mask(MaskKind kind, int seq_len, const DerivedGraph* ref,
                      int offset) {
  MaskMatrix mask(seq_len);
  if (kind == MaskKind::kCausal) {
    for (int q = 0; q < seq_len; ++q) {
      for (int s = 0; s <= q; ++s) mask.set(q, s, true);
    }
    return mask;
  }
  if (ref == nullptr) throw MismatchError("graph mask needs a derived graph");
  for (int a : ref->anchor) {
    if (a + offset < 0 || a + offset >= seq_len) {
      throw MismatchError("anchor " + std::to_string(a + offset) +
                          " outside sequence of length " +
                          std::to_string(seq_len));
    }
  }
  for (int q = 0; q < seq_len; ++q) mask.set(q, q, true);
  for (const Arc& arc : ref->arcs) {
    const int p_from = ref->anchor.at(arc.from) + offset;
    const int p_to = ref->anchor.at(arc.to) + offset;
    mask.set(p_to, p_from, true);
    mask.set(p_from, p_to, true);
  }
  if (kind == MaskKind::kCausalGraph) {
    for (int q = 0; q < seq_len; ++q) {
      for (int s = q + 1; s < seq_len; ++s) mask.set(q, s, false);
    }
  }
  return mask;
}

}  // namespace graphseq
