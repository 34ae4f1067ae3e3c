// Canonical labelling by colour refinement plus individualization search.
// Graphs in this project are small (tens of nodes), so the search runs
// without automorphism pruning.

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "graphseq/text_graph.h"

namespace graphseq {

namespace {

struct Indexed {
  int n = 0;
  std::vector<int> node_rank;  // rank of stripped node label
  struct Arc {
    int pred, succ, label;
  };
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> incident;  // arc ids touching each node
  std::vector<std::string> node_labels;    // sorted distinct stripped labels
  std::vector<std::string> edge_labels;    // sorted distinct edge labels
};

Indexed index_graph(const TextGraph& g) {
  Indexed ix;
  ix.n = static_cast<int>(g.num_nodes());
  for (const Node& v : g.nodes()) {
    ix.node_labels.emplace_back(strip_disambiguation(v.label));
  }
  for (const Edge& e : g.edges()) ix.edge_labels.push_back(e.label);
  for (auto* labels : {&ix.node_labels, &ix.edge_labels}) {
    std::sort(labels->begin(), labels->end());
    labels->erase(std::unique(labels->begin(), labels->end()), labels->end());
  }
  auto rank_of = [](const std::vector<std::string>& sorted,
                    std::string_view s) {
    return static_cast<int>(
        std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin());
  };
  for (const Node& v : g.nodes()) {
    ix.node_rank.push_back(
        rank_of(ix.node_labels, strip_disambiguation(v.label)));
  }
  ix.incident.resize(ix.n);
  for (const Edge& e : g.edges()) {
    const int id = static_cast<int>(ix.arcs.size());
    ix.arcs.push_back({e.pred, e.succ, rank_of(ix.edge_labels, e.label)});
    ix.incident[e.pred].push_back(id);
    if (e.succ != e.pred) ix.incident[e.succ].push_back(id);
  }
  return ix;
}

int count_colors(const std::vector<int>& colors) {
  return colors.empty()
             ? 0
             : *std::max_element(colors.begin(), colors.end()) + 1;
}

// Refines `colors` until stable. Colours are dense ranks, and the new rank
// order extends the old one so results do not depend on node ids.
void refine(const Indexed& ix, std::vector<int>& colors) {
  int classes = count_colors(colors);
  using Sig = std::pair<int, std::vector<std::tuple<int, int, int>>>;
  std::vector<Sig> sigs(ix.n);
  while (true) {
    for (int v = 0; v < ix.n; ++v) {
      auto& [own, nb] = sigs[v];
      own = colors[v];
      nb.clear();
      for (int a : ix.incident[v]) {
        const auto& arc = ix.arcs[a];
        if (arc.pred == v) nb.emplace_back(0, arc.label, colors[arc.succ]);
        if (arc.succ == v) nb.emplace_back(1, arc.label, colors[arc.pred]);
      }
      std::sort(nb.begin(), nb.end());
    }
    std::vector<const Sig*> order(ix.n);
    for (int v = 0; v < ix.n; ++v) order[v] = &sigs[v];
    std::sort(order.begin(), order.end(),
              [](const Sig* a, const Sig* b) { return *a < *b; });
    std::map<const Sig*, int> rank;
    int next = -1;
    const Sig* prev = nullptr;
    for (const Sig* s : order) {
      if (prev == nullptr || *prev != *s) ++next;
      rank[s] = next;
      prev = s;
    }
    for (int v = 0; v < ix.n; ++v) colors[v] = rank[&sigs[v]];
    const int now = next + 1;
    if (now == classes) return;
    classes = now;
  }
}

using Certificate = std::vector<int>;

Certificate certificate(const Indexed& ix, const std::vector<int>& colors) {
  Certificate cert(ix.n);
  for (int v = 0; v < ix.n; ++v) cert[colors[v]] = ix.node_rank[v];
  std::vector<std::tuple<int, int, int>> arcs;
  arcs.reserve(ix.arcs.size());
  for (const auto& a : ix.arcs) {
    arcs.emplace_back(colors[a.pred], a.label, colors[a.succ]);
  }
  std::sort(arcs.begin(), arcs.end());
  for (const auto& [p, l, s] : arcs) {
    cert.push_back(p);
    cert.push_back(l);
    cert.push_back(s);
  }
  return cert;
}

void search(const Indexed& ix, std::vector<int> colors, Certificate& best,
            bool& have_best) {
  refine(ix, colors);
  const int classes = count_colors(colors);
  if (classes == ix.n) {
    Certificate c = certificate(ix, colors);
    if (!have_best || c < best) {
      best = std::move(c);
      have_best = true;
    }
    return;
  }
  std::vector<int> size(classes, 0);
  for (int c : colors) ++size[c];
  int cell = 0;
  while (size[cell] == 1) ++cell;
  for (int v = 0; v < ix.n; ++v) {
    if (colors[v] != cell) continue;
    std::vector<int> next = colors;
    for (int u = 0; u < ix.n; ++u) {
      if (colors[u] > cell || (colors[u] == cell && u != v)) ++next[u];
    }
    search(ix, std::move(next), best, have_best);
  }
}

void append_field(std::string& out, std::string_view s) {
  out += std::to_string(s.size());
  out += ':';
  out += s;
}

}  // namespace

std::string canonical_form(const TextGraph& g) {
  const Indexed ix = index_graph(g);
  Certificate best;
  bool have_best = false;
  search(ix, ix.node_rank, best, have_best);

  std::string out = "N" + std::to_string(ix.n) + ";";
  for (int i = 0; i < ix.n; ++i) append_field(out, ix.node_labels[best[i]]);
  out += ";E" + std::to_string(ix.arcs.size()) + ";";
  for (std::size_t i = ix.n; i + 2 < best.size(); i += 3) {
    out += std::to_string(best[i]);
    out += ',';
    append_field(out, ix.edge_labels[best[i + 1]]);
    out += ',';
    out += std::to_string(best[i + 2]);
    out += ';';
  }
  return out;
}

bool graph_equal(const TextGraph& a, const TextGraph& b) {
  if (a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges()) {
    return false;
  }
  auto triples = [](const TextGraph& g) {
    std::vector<std::tuple<std::string_view, std::string_view,
                           std::string_view>>
        t;
    for (const Edge& e : g.edges()) {
      t.emplace_back(strip_disambiguation(g.label(e.pred)), e.label,
                     strip_disambiguation(g.label(e.succ)));
    }
    std::sort(t.begin(), t.end());
    return t;
  };
  auto labels = [](const TextGraph& g) {
    std::vector<std::string_view> l;
    for (const Node& v : g.nodes()) l.push_back(strip_disambiguation(v.label));
    std::sort(l.begin(), l.end());
    return l;
  };
  if (labels(a) != labels(b) || triples(a) != triples(b)) return false;
  return canonical_form(a) == canonical_form(b);
}

}  // namespace graphseq
