#include <gtest/gtest.h>

#include <algorithm>

#include "graphseq/codec.h"
#include "graphseq/errors.h"
#include "graphseq/vocab.h"
#include "test_support.h"

namespace graphseq {
namespace {

std::vector<std::string> labels_of(const TextGraph& g) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes()) out.push_back(n.label);
  return out;
}

TEST(Vocab, SpecialIdsAreFixed) {
  EXPECT_EQ(encode("<PN>"), std::vector<int>{0});
  EXPECT_EQ(encode("<E>"), std::vector<int>{1});
  EXPECT_EQ(encode("<SN>"), std::vector<int>{2});
  EXPECT_EQ(encode("<D>"), std::vector<int>{3});
  EXPECT_EQ(encode("<BOS><EOS><PAD><SEP>"), (std::vector<int>{4, 5, 6, 7}));
}

TEST(Vocab, DisambiguatedLabelIsThreeTokens) {
  const auto ids = encode("C<D>0");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], byte_token('C'));
  EXPECT_EQ(ids[1], tok::kD);
  EXPECT_EQ(ids[2], byte_token('0'));
}

TEST(Vocab, DecodeEncodeRoundTripOnRandomText) {
  Rng rng(3);
  const std::string alphabet = "<>PNESDBOCA0123 x-=#";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const int n = rng.uniform_int(30);
    for (int i = 0; i < n; ++i) s += alphabet[rng.uniform_int(alphabet.size())];
    ASSERT_EQ(decode(encode(s)), s);
  }
}

TEST(Vocab, Errors) {
  EXPECT_THROW(decode(std::vector<int>{kVocabSize}), TokenizerError);
  EXPECT_THROW(decode(std::vector<int>{-1}), TokenizerError);
  EXPECT_THROW(encode("tab\there"), TokenizerError);
}

TEST(Disambiguate, Examples) {
  auto dis = [](std::vector<std::string> labels) {
    std::vector<Edge> edges;
    for (int i = 0; i + 1 < static_cast<int>(labels.size()); ++i) {
      edges.push_back({i, i + 1, "-"});
    }
    if (labels.size() == 1) edges.push_back({0, 0, "-"});
    return labels_of(disambiguate(TextGraph(labels, edges)));
  };
  EXPECT_EQ(dis({"C", "C", "C", "N"}),
            (std::vector<std::string>{"C<D>0", "C<D>1", "C<D>2", "N"}));
  EXPECT_EQ(dis({"O"}), (std::vector<std::string>{"O"}));
  EXPECT_EQ(dis({"H", "C", "H", "H"}),
            (std::vector<std::string>{"H<D>0", "C", "H<D>1", "H<D>2"}));
}

TEST(Serialize, SingleEdge) {
  const TextGraph g({"C", "O"}, {{0, 1, "single"}});
  const SerializedGraph sg = serialize(g);
  EXPECT_EQ(sg.text, "<PN>C<E>single<SN>O");
  EXPECT_EQ(decode(sg.tokens), sg.text);
  EXPECT_EQ(sg.edge_last_token, std::vector<int>{static_cast<int>(sg.tokens.size()) - 1});
}

TEST(Serialize, PathWithDisambiguation) {
  const TextGraph g = disambiguate(
      TextGraph({"C", "C", "N"}, {{0, 1, "b1"}, {1, 2, "b2"}}));
  const SerializedGraph sg = serialize(g, EdgeOrderPolicy::depth_first(0));
  EXPECT_EQ(sg.text, "<PN>C<D>0<E>b1<SN>C<D>1<PN>C<D>1<E>b2<SN>N");
  // <PN> C <D> 0 <E> b 1 <SN> C <D> 1 | <PN> C <D> 1 <E> b 2 <SN> N
  //  0   1  2  3  4  5 6  7   8  9 10    11 12 13 14 15 16 17 18 19
  EXPECT_EQ(sg.edge_last_token, (std::vector<int>{10, 19}));
  ASSERT_EQ(sg.node_instances.size(), 4u);
  EXPECT_EQ(sg.node_instances[0].last_token, 3);
  EXPECT_EQ(sg.node_instances[1].last_token, 10);
  EXPECT_EQ(sg.node_instances[2].last_token, 14);
  EXPECT_EQ(sg.node_instances[3].last_token, 19);
  EXPECT_TRUE(graph_equal(deserialize(sg.text), g));
}

TEST(Serialize, FourEdgeMoleculeHasFourSegments) {
  const TextGraph g = disambiguate(TextGraph(
      {"C", "C", "O", "N", "H"},
      {{0, 1, "-"}, {1, 2, "="}, {1, 3, "-"}, {3, 4, "-"}}));
  const SerializedGraph sg = serialize(g);
  EXPECT_EQ(std::count(sg.tokens.begin(), sg.tokens.end(), tok::kPN), 4);
  EXPECT_EQ(sg.edge_order.size(), 4u);
}

TEST(Serialize, DepthFirstVisitsNeighboursByLabel) {
  // Star around node 0: edges sorted by label are b < c < d.
  const TextGraph g({"X", "A", "B", "C"},
                    {{0, 1, "d"}, {0, 2, "b"}, {3, 0, "c"}});
  EXPECT_EQ(edge_order(g, EdgeOrderPolicy::depth_first(0)),
            (std::vector<int>{1, 2, 0}));
  EXPECT_EQ(edge_order(g, EdgeOrderPolicy::insertion()),
            (std::vector<int>{0, 1, 2}));
}

TEST(Serialize, Errors) {
  EXPECT_THROW(serialize(TextGraph({"C", "C"}, {{0, 1, "-"}})),
               InvalidGraphError);
  EXPECT_THROW(serialize(TextGraph()), InvalidGraphError);
  EXPECT_THROW(serialize(TextGraph({"C<E>", "O"}, {{0, 1, "-"}})),
               InvalidGraphError);
}

TEST(Deserialize, Examples) {
  const TextGraph g = deserialize("<PN>C<E>single<SN>O");
  EXPECT_TRUE(graph_equal(g, TextGraph({"C", "O"}, {{0, 1, "single"}})));
  EXPECT_THROW(deserialize("<PN>C<E>single"), SyntaxError);
}

TEST(Deserialize, Errors) {
  EXPECT_THROW(deserialize(""), SyntaxError);
  EXPECT_THROW(deserialize("C<E>x<SN>O"), SyntaxError);
  EXPECT_THROW(deserialize("<PN>C<SN>O"), SyntaxError);
  EXPECT_THROW(deserialize("<PN>C<E>x<SN>O<PN>C<E>x<SN>O"), DuplicateEdgeError);
  EXPECT_THROW(deserialize("<PN><E>x<SN>O"), EmptyLabelError);
  EXPECT_THROW(deserialize("<PN>C<E><SN>O"), EmptyLabelError);
  EXPECT_THROW(deserialize("<PN>C<E>x<SN>"), EmptyLabelError);
  EXPECT_THROW(deserialize("<PN><D>1<E>x<SN>O"), EmptyLabelError);
  EXPECT_THROW(deserialize("<PN>C<D><E>x<SN>O"), SyntaxError);
  EXPECT_THROW(deserialize("<PN>C<D>1a<E>x<SN>O"), SyntaxError);
  EXPECT_THROW(deserialize("<PN>C<E>x<SN>O<BOS>"), SyntaxError);
  EXPECT_THROW(deserialize("<PN>C<E>x<SN>O\t"), SyntaxError);
}

TEST(Deserialize, SameLabelMeansSameNode) {
  const TextGraph g = deserialize("<PN>A<E>x<SN>B<PN>B<E>y<SN>A");
  EXPECT_EQ(g.num_nodes(), 2u);
  EXPECT_EQ(g.num_edges(), 2u);
}

TEST(RoundTrip, RandomGraphsAllPolicies) {
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const TextGraph g = disambiguate(testing::random_graph(rng));
    const int n = static_cast<int>(g.num_nodes());
    const EdgeOrderPolicy policy =
        trial % 4 == 0 ? EdgeOrderPolicy::insertion()
                       : EdgeOrderPolicy::depth_first(rng.uniform_int(n));
    const SerializedGraph sg = serialize(g, policy);
    ASSERT_TRUE(graph_equal(deserialize(sg.text), g)) << sg.text;
    ASSERT_TRUE(graph_equal(deserialize_tokens(sg.tokens), g));
    ASSERT_EQ(decode(sg.tokens), sg.text);
    // Every edge appears once and f_index is strictly increasing.
    std::vector<int> order = sg.edge_order;
    std::sort(order.begin(), order.end());
    for (int k = 0; k < static_cast<int>(order.size()); ++k) ASSERT_EQ(order[k], k);
    ASSERT_TRUE(std::is_sorted(sg.edge_last_token.begin(), sg.edge_last_token.end(),
                               std::less_equal<int>()));
    ASSERT_EQ(std::adjacent_find(sg.edge_last_token.begin(),
                                 sg.edge_last_token.end()),
              sg.edge_last_token.end());
    for (int last : sg.edge_last_token) {
      ASSERT_TRUE(is_byte_token(sg.tokens[last]));
    }
  }
}

TEST(IncrementalParse, HandTracedPrefix) {
  const PartialGraphState s = incremental_parse(encode("<PN>C<E>b1<SN>O<PN>"));
  ASSERT_EQ(s.edges().size(), 1u);
  EXPECT_EQ(s.state(), ParserState::kPredLabel);
  EXPECT_EQ(s.edges()[0].label, "b1");
  EXPECT_EQ(s.edges()[0].last_token, 6);
  EXPECT_EQ(s.edges()[0].completed_at, 7);
}

TEST(IncrementalParse, EmptyInput) {
  const PartialGraphState s = incremental_parse({});
  EXPECT_EQ(s.state(), ParserState::kExpectPN);
  EXPECT_TRUE(s.edges().empty());
}

TEST(IncrementalParse, EdgeCommitsOnlyAtTerminator) {
  PartialGraphState s;
  for (int t : encode("<PN>C<E>b<SN>O")) s.push(t);
  EXPECT_EQ(s.state(), ParserState::kSuccLabel);
  EXPECT_TRUE(s.edges().empty());
  s.finish();
  EXPECT_EQ(s.state(), ParserState::kDone);
  EXPECT_EQ(s.edges().size(), 1u);
}

TEST(IncrementalParse, MalformedFreezes) {
  PartialGraphState s;
  for (int t : encode("<PN>C<E>b<SN>O<E>")) s.push(t);
  EXPECT_TRUE(s.malformed());
  EXPECT_EQ(s.failure(), ParseFailure::kSyntax);
  const auto edges = s.edges().size();
  for (int t : encode("<PN>A<E>b<SN>B")) s.push(t);
  EXPECT_TRUE(s.malformed());
  EXPECT_EQ(s.edges().size(), edges);
  EXPECT_THROW(s.graph(), SyntaxError);
}

TEST(IncrementalParse, PrefixesOnlyEverGrow) {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const TextGraph g = disambiguate(testing::random_graph(rng));
    std::vector<int> tokens = serialize(g).tokens;
    tokens.push_back(tok::kEOS);
    PartialGraphState full = incremental_parse(tokens);
    ASSERT_EQ(full.state(), ParserState::kDone);
    ASSERT_TRUE(graph_equal(full.graph(), g));
    PartialGraphState s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      s.push(tokens[i]);
      ASSERT_LE(s.edges().size(), full.edges().size());
      for (std::size_t k = 0; k < s.edges().size(); ++k) {
        ASSERT_EQ(s.edges()[k].label, full.edges()[k].label);
        ASSERT_EQ(s.edges()[k].last_token, full.edges()[k].last_token);
        ASSERT_LE(s.edges()[k].completed_at, static_cast<int>(i));
      }
      for (std::size_t k = 0; k < s.occurrences().size(); ++k) {
        ASSERT_EQ(s.occurrences()[k].last_token, full.occurrences()[k].last_token);
      }
    }
  }
}

TEST(IncrementalParse, RandomTokenSoupNeverThrows) {
  Rng rng(29);
  for (int trial = 0; trial < 500; ++trial) {
    PartialGraphState s;
    const int n = rng.uniform_int(60);
    for (int i = 0; i < n; ++i) {
      const int t = rng.uniform() < 0.3 ? rng.uniform_int(tok::kNumSpecial)
                                        : rng.uniform_int(kVocabSize);
      s.push(t);
    }
    s.finish();
    if (!s.malformed()) {
      EXPECT_NO_THROW(s.graph());
    }
  }
}

}  // namespace
}  // namespace graphseq
