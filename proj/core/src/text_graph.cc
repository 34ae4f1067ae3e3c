#include "graphseq/text_graph.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "graphseq/errors.h"

namespace graphseq {

namespace {

constexpr std::string_view kValencyPrefix =
    "a molecule with number of valence electrons equal to ";
constexpr std::string_view kRingPrefix =
    "a molecule with number of rings equal to ";

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

TextGraph::TextGraph(std::vector<std::string> node_labels,
                     std::vector<Edge> edges) {
  const int n = static_cast<int>(node_labels.size());
  nodes_.reserve(node_labels.size());
  for (int i = 0; i < n; ++i) {
    nodes_.push_back(Node{i, std::move(node_labels[i])});
  }
  std::vector<int> degree(n, 0);
  std::set<std::tuple<int, int, std::string>> seen;
  for (const Edge& e : edges) {
    if (e.pred < 0 || e.pred >= n || e.succ < 0 || e.succ >= n) {
      throw InvalidGraphError("edge endpoint references a missing node");
    }
    if (!seen.emplace(e.pred, e.succ, e.label).second) {
      throw InvalidGraphError("duplicate edge (" + std::to_string(e.pred) +
                              ", " + std::to_string(e.succ) + ", " + e.label +
                              ")");
    }
    ++degree[e.pred];
    ++degree[e.succ];
  }
  for (int i = 0; i < n; ++i) {
    if (degree[i] == 0) {
      throw InvalidGraphError("isolated node " + std::to_string(i) + " (" +
                              nodes_[i].label + ")");
    }
  }
  edges_ = std::move(edges);
}

TextGraph TextGraph::with_labels(std::vector<std::string> node_labels) const {
  if (node_labels.size() != nodes_.size()) {
    throw InvalidGraphError("relabel size mismatch");
  }
  return TextGraph(std::move(node_labels), edges_);
}

std::string_view strip_disambiguation(std::string_view label) {
  const auto pos = label.rfind("<D>");
  if (pos == std::string_view::npos) return label;
  const std::string_view digits = label.substr(pos + 3);
  if (digits.empty()) return label;
  for (char c : digits) {
    if (c < '0' || c > '9') return label;
  }
  return label.substr(0, pos);
}

std::vector<int> degree_sequence(const TextGraph& g) {
  std::vector<int> deg(g.num_nodes(), 0);
  for (const Edge& e : g.edges()) {
    ++deg[e.pred];
    ++deg[e.succ];
  }
  std::sort(deg.begin(), deg.end());
  return deg;
}

std::string_view property_kind_name(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::kValencyElectrons:
      return "valency_electrons";
    case PropertyKind::kRingCount:
      return "ring_count";
  }
  return "unknown";
}

PropertyKind parse_property_kind(std::string_view name) {
  if (name == "valency_electrons" || name == "valency") {
    return PropertyKind::kValencyElectrons;
  }
  if (name == "ring_count" || name == "rings") return PropertyKind::kRingCount;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::string FunctionalDescription::text() const {
  const std::string_view prefix =
      kind == PropertyKind::kValencyElectrons ? kValencyPrefix : kRingPrefix;
  return std::string(prefix) + format_number(target);
}

FunctionalDescription FunctionalDescription::parse(std::string_view text) {
  FunctionalDescription d;
  std::string_view rest;
  if (text.starts_with(kValencyPrefix)) {
    d.kind = PropertyKind::kValencyElectrons;
    rest = text.substr(kValencyPrefix.size());
  } else if (text.starts_with(kRingPrefix)) {
    d.kind = PropertyKind::kRingCount;
    rest = text.substr(kRingPrefix.size());
  } else {
    throw ConfigError("unrecognised functional description: " +
                      std::string(text));
  }
  auto res = std::from_chars(rest.data(), rest.data() + rest.size(), d.target);
  if (res.ec != std::errc() || res.ptr != rest.data() + rest.size()) {
    throw ConfigError("bad target value in description: " + std::string(text));
  }
  return d;
}

std::string format_record(const Record& r) {
  if (r.desc.find_first_of("\t\n") != std::string::npos ||
      r.graph.find_first_of("\t\n") != std::string::npos) {
    throw InvalidGraphError("record fields may not contain tabs or newlines");
  }
  return "desc=" + r.desc + "\tgraph=" + r.graph;
}

Record parse_record(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) {
    throw ConfigError("record is missing a tab separator");
  }
  std::string_view desc = line.substr(0, tab);
  std::string_view graph = line.substr(tab + 1);
  if (!desc.starts_with("desc=") || !graph.starts_with("graph=")) {
    throw ConfigError("record must be desc=...<TAB>graph=...");
  }
  if (graph.find('\t') != std::string_view::npos) {
    throw ConfigError("record has more than two fields");
  }
  return Record{std::string(desc.substr(5)), std::string(graph.substr(6))};
}

std::vector<Record> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Record> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const ConfigError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const Record& r : records) out << format_record(r) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace graphseq
