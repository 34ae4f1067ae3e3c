#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "graphseq/codec.h"
#include "graphseq/errors.h"
#include "graphseq/maskgraph.h"
#include "graphseq/vocab.h"
#include "test_support.h"

namespace graphseq {
namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(GRAPHSEQ_TEST_DATA) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Builds g in insertion order so edge positions match the edge list.
SerializedGraph in_order(const TextGraph& g) {
  return serialize(g, EdgeOrderPolicy::insertion());
}

TEST(EdgeGraph, PathHasSingleForwardArc) {
  const TextGraph g({"A", "B", "C"}, {{0, 1, "x"}, {1, 2, "y"}});
  const EdgeGraph eg = build_edge_graph(in_order(g), g);
  ASSERT_EQ(eg.size(), 2);
  EXPECT_EQ(eg.arcs, (std::vector<Arc>{{0, 1}}));
  EXPECT_EQ(eg.anchor, (std::vector<int>{5, 11}));
}

TEST(EdgeGraph, DisjointEdgesHaveNoArcs) {
  const TextGraph g({"A", "B", "C", "D"}, {{0, 1, "x"}, {2, 3, "y"}});
  EXPECT_TRUE(build_edge_graph(in_order(g), g).arcs.empty());
}

TEST(EdgeGraph, FourEdgesGiveFourNodes) {
  const TextGraph g({"C", "O", "N", "H", "S"},
                    {{0, 1, "-"}, {0, 2, "-"}, {2, 3, "-"}, {2, 4, "="}});
  const EdgeGraph eg = build_edge_graph(serialize(g), g);
  EXPECT_EQ(eg.size(), 4);
}

TEST(EdgeGraph, MismatchedInputsRejected) {
  const TextGraph g({"A", "B", "C"}, {{0, 1, "x"}, {1, 2, "y"}});
  const TextGraph other({"A", "B", "C"}, {{0, 1, "x"}, {1, 2, "z"}});
  EXPECT_THROW(build_edge_graph(in_order(g), other), MismatchError);
  SerializedGraph sg = in_order(g);
  sg.edge_last_token[0] += 1;
  EXPECT_THROW(build_edge_graph(sg, g), MismatchError);
  EXPECT_THROW(build_correspondence_graph(sg, g), MismatchError);
}

TEST(CorrespondenceGraph, NodeInFirstAndThirdEdge) {
  // Node X appears in edges 1 and 3 only.
  const TextGraph g({"X", "A", "B", "C", "D"},
                    {{0, 1, "e"}, {2, 3, "e"}, {4, 0, "e"}});
  const CorrespondenceGraph cg = build_correspondence_graph(in_order(g), g);
  ASSERT_EQ(cg.size(), 6);
  // mentions: X A | B C | D X
  EXPECT_EQ(cg.arcs, (std::vector<Arc>{{0, 5}}));
  EXPECT_EQ(cg.source_node[5], 0);
  EXPECT_EQ(cg.occurrence[5], 1);
}

TEST(CorrespondenceGraph, SingleMentionHasNoArcs) {
  const TextGraph g({"A", "B"}, {{0, 1, "e"}});
  EXPECT_TRUE(build_correspondence_graph(in_order(g), g).arcs.empty());
}

TEST(CorrespondenceGraph, OnlyAdjacentOccurrencesLinked) {
  // X occurs in edges 1, 2 and 4.
  const TextGraph g({"X", "A", "B", "C", "D", "E"},
                    {{0, 1, "e"}, {2, 0, "e"}, {3, 4, "e"}, {0, 5, "e"}});
  const CorrespondenceGraph cg = build_correspondence_graph(in_order(g), g);
  // mentions: X A | B X | C D | X E  -> X at 0, 3, 6
  EXPECT_EQ(cg.arcs, (std::vector<Arc>{{0, 3}, {3, 6}}));
}

TEST(Mask, CausalLengthThree) {
  EXPECT_EQ(build_mask(MaskKind::kCausal, 3).dump(), "100\n110\n111\n");
}

TEST(Mask, EdgeGraphGolden) {
  const TextGraph g({"A", "B", "C"}, {{0, 1, "x"}, {1, 2, "y"}});
  const SerializedGraph sg = in_order(g);
  ASSERT_EQ(sg.text, "<PN>A<E>x<SN>B<PN>B<E>y<SN>C");
  const EdgeGraph eg = build_edge_graph(sg, g);
  const int n = static_cast<int>(sg.tokens.size());
  EXPECT_EQ(build_mask(MaskKind::kGraph, n, &eg).dump(),
            golden("edge_path_graph.mask"));
  EXPECT_EQ(build_mask(MaskKind::kCausalGraph, n, &eg).dump(),
            golden("edge_path_causal_graph.mask"));
}

TEST(Mask, CorrespondenceGolden) {
  const TextGraph g({"A", "B"}, {{0, 1, "x"}, {1, 0, "y"}});
  const SerializedGraph sg = in_order(g);
  ASSERT_EQ(sg.text, "<PN>A<E>x<SN>B<PN>B<E>y<SN>A");
  const CorrespondenceGraph cg = build_correspondence_graph(sg, g);
  const int n = static_cast<int>(sg.tokens.size());
  EXPECT_EQ(build_mask(MaskKind::kGraph, n, &cg).dump(),
            golden("corr_cycle_graph.mask"));
  EXPECT_EQ(build_mask(MaskKind::kCausalGraph, n, &cg).dump(),
            golden("corr_cycle_causal_graph.mask"));
}

TEST(Mask, OffsetAndRangeErrors) {
  const TextGraph g({"A", "B", "C"}, {{0, 1, "x"}, {1, 2, "y"}});
  const EdgeGraph eg = build_edge_graph(in_order(g), g);
  EXPECT_THROW(build_mask(MaskKind::kGraph, 5), MismatchError);
  EXPECT_THROW(build_mask(MaskKind::kGraph, 11, &eg), MismatchError);
  EXPECT_THROW(build_mask(MaskKind::kGraph, 20, &eg, 10), MismatchError);
  const MaskMatrix m = build_mask(MaskKind::kCausalGraph, 20, &eg, 3);
  EXPECT_TRUE(m.at(14, 8));
  EXPECT_FALSE(m.at(8, 14));
}

TEST(DerivedGraphs, RandomGraphProperties) {
  Rng rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const TextGraph g = disambiguate(testing::random_graph(rng));
    const SerializedGraph sg =
        serialize(g, EdgeOrderPolicy::depth_first(
                         rng.uniform_int(static_cast<int>(g.num_nodes()))));
    const EdgeGraph eg = build_edge_graph(sg, g);
    const CorrespondenceGraph cg = build_correspondence_graph(sg, g);
    const int n = static_cast<int>(sg.tokens.size());

    // Brute-force double loop over serialized edges.
    int expected_arcs = 0;
    for (int j = 0; j < eg.size(); ++j) {
      for (int k = j + 1; k < eg.size(); ++k) {
        const Edge& a = g.edges()[sg.edge_order[j]];
        const Edge& b = g.edges()[sg.edge_order[k]];
        expected_arcs += a.pred == b.pred || a.pred == b.succ ||
                         a.succ == b.pred || a.succ == b.succ;
      }
    }
    ASSERT_EQ(static_cast<int>(eg.arcs.size()), expected_arcs);
    for (const Arc& a : eg.arcs) {
      ASSERT_LT(a.from, a.to);
      ASSERT_LT(eg.anchor[a.from], eg.anchor[a.to]);
    }
    for (const Arc& a : cg.arcs) {
      ASSERT_EQ(cg.source_node[a.from], cg.source_node[a.to]);
      ASSERT_EQ(cg.occurrence[a.from] + 1, cg.occurrence[a.to]);
      ASSERT_LT(cg.anchor[a.from], cg.anchor[a.to]);
    }

    // Prefix-parse constructions agree with the full builders.
    const PartialGraphState st = [&] {
      auto s = incremental_parse(sg.tokens);
      s.finish();
      return s;
    }();
    const EdgeGraph eg2 = edge_graph_from(st);
    ASSERT_EQ(eg2.anchor, eg.anchor);
    ASSERT_EQ(eg2.arcs, eg.arcs);
    const CorrespondenceGraph cg2 = correspondence_graph_from(st);
    ASSERT_EQ(cg2.anchor, cg.anchor);
    ASSERT_EQ(cg2.arcs, cg.arcs);

    for (const DerivedGraph* ref : {static_cast<const DerivedGraph*>(&eg),
                                    static_cast<const DerivedGraph*>(&cg)}) {
      const MaskMatrix causal = build_mask(MaskKind::kCausal, n);
      const MaskMatrix graph = build_mask(MaskKind::kGraph, n, ref);
      const MaskMatrix cgm = build_mask(MaskKind::kCausalGraph, n, ref);
      for (int q = 0; q < n; ++q) {
        for (int s = 0; s < n; ++s) {
          ASSERT_EQ(cgm.at(q, s), causal.at(q, s) && graph.at(q, s));
          ASSERT_EQ(graph.at(q, s), graph.at(s, q));
        }
      }
    }
  }
}

}  // namespace
}  // namespace graphseq
