#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "graphseq/random.h"
#include "graphseq/text_graph.h"

namespace graphseq {

// Valence-electron count per element symbol.
class ElementTable {
 public:
  // H C N O F P S Cl.
  static const ElementTable& standard();

  explicit ElementTable(std::map<std::string, int> counts);

  // Throws UnknownElementError for a symbol outside the table.
  int valence(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;
  const std::map<std::string, int, std::less<>>& counts() const {
    return counts_;
  }

 private:
  std::map<std::string, int, std::less<>> counts_;
};

// Sum of per-node valence electrons (labels with the disambiguation suffix
// stripped). Throws UnknownElementError.
int valency_electrons(const TextGraph& g,
                      const ElementTable& table = ElementTable::standard());

// Cyclomatic number M - N + C of the underlying undirected multigraph,
// with C the number of weakly connected components.
int ring_count(const TextGraph& g);

// The oracle for `kind`; throws UnknownElementError for valency.
double property_value(const TextGraph& g, PropertyKind kind,
                      const ElementTable& table = ElementTable::standard());

struct DatasetSpec {
  PropertyKind task = PropertyKind::kValencyElectrons;
  // Nested training-set sizes; each smaller set is a prefix of the larger.
  std::vector<int> train_sizes{1000};
  int val_size = 200;
  int test_size = 200;
  int min_nodes = 2;
  int max_nodes = 19;
  int max_degree = 4;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static DatasetSpec from_kv(const std::map<std::string, std::string>& kv);
};

// Connected graph with n nodes in [min_nodes, max_nodes]: a random spanning
// tree plus extra edges that become less likely as endpoint degrees grow.
// Labels are element symbols (not yet disambiguated), edge labels "-" or
// "=".
TextGraph random_molecule(Rng& rng, int min_nodes, int max_nodes,
                          int max_degree = 4);

// Dataset record for g: its rendered property plus its serialization.
Record make_record(const TextGraph& g, PropertyKind task);

struct Dataset {
  std::map<int, std::vector<Record>> train;  // keyed by size
  std::vector<Record> val;
  std::vector<Record> test;
};

// Pairwise-distinct graphs (by canonical form) split into val, test and
// the nested train sets. Throws InfeasibleSpecError if the generator
// cannot find enough distinct graphs.
Dataset generate_dataset(const DatasetSpec& spec);

struct TargetStats {
  int n = 0;
  double min = 0, max = 0, mean = 0, std = 0;  // population std
};

TargetStats target_stats(const std::vector<Record>& records);

// key=value text: the spec followed by one stats line per split.
std::string dataset_manifest(const DatasetSpec& spec, const Dataset& data);

// Writes train_<n>.txt, val.txt, test.txt and dataset_manifest.txt into
// `dir` and returns the paths written. Throws IoError.
std::vector<std::string> write_dataset(const std::string& dir,
                                       const DatasetSpec& spec,
                                       const Dataset& data);

}  // namespace graphseq
