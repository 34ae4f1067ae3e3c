#include "graphseq/datagen.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "graphseq/codec.h"
#include "graphseq/errors.h"

namespace graphseq {

namespace {

struct Weighted {
  const char* symbol;
  double weight;
};

constexpr Weighted kElementWeights[] = {
    {"C", 0.45}, {"O", 0.15}, {"N", 0.12}, {"H", 0.10},
    {"F", 0.05}, {"S", 0.05}, {"Cl", 0.04}, {"P", 0.04},
};

const char* draw_element(Rng& rng) {
  double u = rng.uniform();
  for (const auto& w : kElementWeights) {
    u -= w.weight;
    if (u < 0.0) return w.symbol;
  }
  return kElementWeights[0].symbol;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int find(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

int to_int(const std::map<std::string, std::string>& kv, const std::string& key,
           int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("data." + key + ": not an integer: " + it->second);
  }
}

}  // namespace

const ElementTable& ElementTable::standard() {
  static const ElementTable table({{"H", 1},
                                   {"C", 4},
                                   {"N", 5},
                                   {"O", 6},
                                   {"F", 7},
                                   {"P", 5},
                                   {"S", 6},
                                   {"Cl", 7}});
  return table;
}

ElementTable::ElementTable(std::map<std::string, int> counts)
    : counts_(counts.begin(), counts.end()) {
  for (const auto& [sym, c] : counts_) {
    if (c < 1 || c > 8) {
      throw ConfigError("valence count for " + sym + " outside 1..8");
    }
  }
}

int ElementTable::valence(std::string_view symbol) const {
  auto it = counts_.find(symbol);
  if (it == counts_.end()) {
    throw UnknownElementError("unknown element: " + std::string(symbol));
  }
  return it->second;
}

bool ElementTable::contains(std::string_view symbol) const {
  return counts_.find(symbol) != counts_.end();
}

int valency_electrons(const TextGraph& g, const ElementTable& table) {
  int total = 0;
  for (const Node& n : g.nodes()) {
    total += table.valence(strip_disambiguation(n.label));
  }
  return total;
}

int ring_count(const TextGraph& g) {
  const int n = static_cast<int>(g.num_nodes());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  int components = n;
  for (const Edge& e : g.edges()) {
    const int a = find(parent, e.pred);
    const int b = find(parent, e.succ);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return static_cast<int>(g.num_edges()) - n + components;
}

double property_value(const TextGraph& g, PropertyKind kind,
                      const ElementTable& table) {
  switch (kind) {
    case PropertyKind::kValencyElectrons:
      return valency_electrons(g, table);
    case PropertyKind::kRingCount:
      return ring_count(g);
  }
  return 0.0;
}

void DatasetSpec::validate() const {
  if (train_sizes.empty()) throw ConfigError("data.train_sizes is empty");
  for (int s : train_sizes) {
    if (s < 1) throw ConfigError("data.train_sizes entries must be >= 1");
  }
  if (val_size < 1 || test_size < 1) {
    throw ConfigError("data.val_size and data.test_size must be >= 1");
  }
  if (min_nodes < 2 || max_nodes < min_nodes) {
    throw ConfigError("data node range must satisfy 2 <= min_nodes <= max_nodes");
  }
  if (max_degree < 2) throw ConfigError("data.max_degree must be >= 2");
}

std::map<std::string, std::string> DatasetSpec::to_kv() const {
  std::string sizes;
  for (int s : train_sizes) {
    if (!sizes.empty()) sizes += ',';
    sizes += std::to_string(s);
  }
  return {{"task", std::string(property_kind_name(task))},
          {"train_sizes", sizes},
          {"val_size", std::to_string(val_size)},
          {"test_size", std::to_string(test_size)},
          {"min_nodes", std::to_string(min_nodes)},
          {"max_nodes", std::to_string(max_nodes)},
          {"max_degree", std::to_string(max_degree)},
          {"seed", std::to_string(seed)}};
}

DatasetSpec DatasetSpec::from_kv(const std::map<std::string, std::string>& kv) {
  static const std::set<std::string> known = {
      "task",      "train_sizes", "val_size",   "test_size",
      "min_nodes", "max_nodes",   "max_degree", "seed"};
  for (const auto& [k, v] : kv) {
    if (!known.count(k)) throw ConfigError("unknown data key: " + k);
  }
  DatasetSpec s;
  if (auto it = kv.find("task"); it != kv.end()) {
    s.task = parse_property_kind(it->second);
  }
  if (auto it = kv.find("train_sizes"); it != kv.end()) {
    s.train_sizes.clear();
    std::stringstream ss(it->second);
    std::string part;
    while (std::getline(ss, part, ',')) {
      s.train_sizes.push_back(to_int({{"train_sizes", part}}, "train_sizes", 0));
    }
  }
  s.val_size = to_int(kv, "val_size", s.val_size);
  s.test_size = to_int(kv, "test_size", s.test_size);
  s.min_nodes = to_int(kv, "min_nodes", s.min_nodes);
  s.max_nodes = to_int(kv, "max_nodes", s.max_nodes);
  s.max_degree = to_int(kv, "max_degree", s.max_degree);
  s.seed = static_cast<std::uint64_t>(to_int(kv, "seed", 0));
  s.validate();
  return s;
}

TextGraph random_molecule(Rng& rng, int min_nodes, int max_nodes,
                          int max_degree) {
  const int n = min_nodes + rng.uniform_int(max_nodes - min_nodes + 1);
  std::vector<std::string> labels(n);
  for (auto& l : labels) l = draw_element(rng);
  std::vector<int> degree(n, 0);
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> adjacent;
  auto bond = [&] { return rng.uniform() < 0.8 ? "-" : "="; };
  auto connect = [&](int a, int b) {
    edges.push_back({a, b, bond()});
    ++degree[a];
    ++degree[b];
    adjacent.insert({std::min(a, b), std::max(a, b)});
  };
  // Spanning tree: node i attaches to an earlier node with spare degree.
  for (int i = 1; i < n; ++i) {
    std::vector<int> open;
    for (int j = 0; j < i; ++j) {
      if (degree[j] < max_degree) open.push_back(j);
    }
    const int parent = open[rng.uniform_int(static_cast<int>(open.size()))];
    connect(parent, i);
  }
  // Extra ring-closing edges.
  for (int attempt = 0; attempt < n; ++attempt) {
    const int a = rng.uniform_int(n);
    const int b = rng.uniform_int(n);
    if (a == b) continue;
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (adjacent.count({lo, hi})) continue;
    if (degree[a] >= max_degree || degree[b] >= max_degree) continue;
    const double p = 0.25 / (1.0 + degree[a] + degree[b] - 2.0);
    if (rng.uniform() < p) connect(lo, hi);
  }
  return TextGraph(std::move(labels), std::move(edges));
}

Record make_record(const TextGraph& g, PropertyKind task) {
  const FunctionalDescription desc{task, property_value(g, task)};
  return {desc.text(), serialize(disambiguate(g)).text};
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const int max_train =
      *std::max_element(spec.train_sizes.begin(), spec.train_sizes.end());
  const long needed = static_cast<long>(spec.val_size) + spec.test_size + max_train;
  const long max_attempts = 20 * needed + 1000;
  Rng rng(mix_seed({spec.seed, 0x64617461ULL}));
  std::set<std::string> seen;
  std::vector<Record> pool;
  pool.reserve(needed);
  long attempts = 0;
  while (static_cast<long>(pool.size()) < needed) {
    if (++attempts > max_attempts) {
      throw InfeasibleSpecError(
          "could only generate " + std::to_string(pool.size()) + " of " +
          std::to_string(needed) + " distinct graphs with " +
          std::to_string(spec.min_nodes) + ".." + std::to_string(spec.max_nodes) +
          " nodes");
    }
    const TextGraph g =
        random_molecule(rng, spec.min_nodes, spec.max_nodes, spec.max_degree);
    if (!seen.insert(canonical_form(g)).second) continue;
    pool.push_back(make_record(g, spec.task));
  }
  Dataset d;
  auto it = pool.begin();
  d.val.assign(it, it + spec.val_size);
  it += spec.val_size;
  d.test.assign(it, it + spec.test_size);
  it += spec.test_size;
  for (int s : spec.train_sizes) d.train[s].assign(it, it + s);
  return d;
}

TargetStats target_stats(const std::vector<Record>& records) {
  TargetStats s;
  s.n = static_cast<int>(records.size());
  if (records.empty()) return s;
  std::vector<double> v;
  for (const Record& r : records) {
    v.push_back(FunctionalDescription::parse(r.desc).target);
  }
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / s.n;
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(sq / s.n);
  return s;
}

std::string dataset_manifest(const DatasetSpec& spec, const Dataset& data) {
  std::ostringstream out;
  for (const auto& [k, v] : spec.to_kv()) out << k << '=' << v << '\n';
  auto line = [&](const std::string& split, const std::vector<Record>& r) {
    const TargetStats s = target_stats(r);
    out << "split=" << split << " n=" << s.n << " min=" << fmt(s.min)
        << " max=" << fmt(s.max) << " mean=" << fmt(s.mean)
        << " std=" << fmt(s.std) << '\n';
  };
  for (const auto& [size, records] : data.train) {
    line("train_" + std::to_string(size), records);
  }
  line("val", data.val);
  line("test", data.test);
  return out.str();
}

std::vector<std::string> write_dataset(const std::string& dir,
                                       const DatasetSpec& spec,
                                       const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  std::vector<std::string> written;
  for (const auto& [size, records] : data.train) {
    const auto p = (base / ("train_" + std::to_string(size) + ".txt")).string();
    write_records(p, records);
    written.push_back(p);
  }
  for (const auto& [name, records] :
       {std::pair{"val.txt", &data.val}, std::pair{"test.txt", &data.test}}) {
    const auto p = (base / name).string();
    write_records(p, *records);
    written.push_back(p);
  }
  const auto p = (base / "dataset_manifest.txt").string();
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p);
  out << dataset_manifest(spec, data);
  if (!out) throw IoError("write failed: " + p);
  written.push_back(p);
  return written;
}

}  // namespace graphseq
