#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "bot/graph.hpp"
#include "support/oracles.hpp"

namespace {

bot::EmbodimentGraph a1() { return bot::load_graph(std::string(BOT_DATA_DIR) + "/a1.json"); }

int index_of(const bot::EmbodimentGraph& g, const std::string& name) {
  for (const auto& n : g.nodes())
    if (n.name == name) return n.id;
  return -1;
}

TEST(Graph, A1FixtureParses) {
  const auto g = a1();
  EXPECT_EQ(g.size(), 13);
  EXPECT_EQ(g.edges().size(), 12u);
  EXPECT_EQ(g.node(g.root()).name, "base");
  EXPECT_EQ(g.node(g.root()).action_dim, 0);
  EXPECT_EQ(g.total_action_dim(), 12);
}

TEST(Graph, SingleNode) {
  const bot::EmbodimentGraph g(oracle::plain_nodes(1), {});
  EXPECT_EQ(g.size(), 1);
  EXPECT_EQ(bot::adjacency_matrix(g)(0, 0), 0);
  EXPECT_TRUE(bot::build_mask(g)(0, 0));
  EXPECT_EQ(bot::diameter(g), 0);
}

TEST(Graph, RejectsInvalid) {
  EXPECT_THROW(bot::EmbodimentGraph(oracle::plain_nodes(4), {{0, 1}, {2, 3}}), bot::Error);
  EXPECT_THROW(bot::EmbodimentGraph(oracle::plain_nodes(2), {{0, 1}, {1, 0}}), bot::Error);
  EXPECT_THROW(bot::EmbodimentGraph(oracle::plain_nodes(2), {{0, 1}, {1, 1}}), bot::Error);
  EXPECT_THROW(bot::EmbodimentGraph(oracle::plain_nodes(2), {{0, 2}}), bot::Error);
  auto two_roots = oracle::plain_nodes(2);
  two_roots[1].is_root = true;
  EXPECT_THROW(bot::EmbodimentGraph(two_roots, {{0, 1}}), bot::Error);
  auto no_root = oracle::plain_nodes(2);
  no_root[0].is_root = false;
  EXPECT_THROW(bot::EmbodimentGraph(no_root, {{0, 1}}), bot::Error);
  EXPECT_THROW(bot::EmbodimentGraph({}, {}), bot::Error);
}

TEST(Graph, ParseErrors) {
  EXPECT_THROW(bot::parse_graph("{not json"), bot::Error);
  EXPECT_THROW(bot::parse_graph(R"({"nodes": []})"), bot::Error);
  EXPECT_THROW(bot::parse_graph(
                   R"({"nodes":[{"name":"a","obs_dim":1,"action_dim":0,"root":true},
                                {"name":"b","obs_dim":1,"action_dim":0,"root":false},
                                {"name":"c","obs_dim":1,"action_dim":0,"root":false},
                                {"name":"d","obs_dim":1,"action_dim":0,"root":false}],
                      "edges":[[0,1],[2,3]]})"),
               bot::Error);
}

TEST(Graph, DocumentRoundTrip) {
  const auto g = a1();
  const auto again = bot::parse_graph(bot::to_document(g));
  EXPECT_EQ(again.fingerprint(), g.fingerprint());
  EXPECT_EQ(bot::build_mask(again), bot::build_mask(g));
}

TEST(Graph, ChainAdjacencyAndMask) {
  const auto g = oracle::chain(3);
  bot::IntMatrix expected(3, 3);
  expected << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  EXPECT_EQ(bot::adjacency_matrix(g), expected);
  const auto m = bot::build_mask(g);
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1, 0, 1, 1};
  EXPECT_EQ(m.entries(), mask);
  bot::IntMatrix spd(3, 3);
  spd << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  EXPECT_EQ(bot::shortest_path_matrix(g), spd);
  EXPECT_EQ(bot::diameter(oracle::chain(7)), 6);
}

TEST(Graph, StarLeafDistance) { EXPECT_EQ(bot::shortest_path_matrix(oracle::star(3))(1, 3), 2); }

TEST(Graph, A1Metrics) {
  const auto g = a1();
  EXPECT_EQ(bot::adjacency_matrix(g).sum(), 24);
  EXPECT_EQ(bot::build_mask(g).nonzeros(), 37);
  EXPECT_EQ(bot::diameter(g), 6);
  const auto spd = bot::shortest_path_matrix(g);
  EXPECT_EQ(spd(index_of(g, "front-left-calf"), index_of(g, "rear-right-calf")), 6);
  EXPECT_DOUBLE_EQ(bot::zero_fraction(bot::build_mask(g)), 1.0 - 37.0 / 169.0);

  const auto oracle_d = oracle::all_pairs_distances(g.size(), g.edges());
  for (int i = 0; i < g.size(); ++i)
    for (int j = 0; j < g.size(); ++j) EXPECT_EQ(spd(i, j), oracle_d[i][j]);
}

TEST(Graph, ZeroFractionExtremes) {
  EXPECT_DOUBLE_EQ(bot::zero_fraction(bot::AttentionMask::identity(8)), 1.0 - 1.0 / 8);
  EXPECT_DOUBLE_EQ(bot::zero_fraction(bot::AttentionMask::all_ones(8)), 0.0);
}

TEST(Graph, MaskPropertiesOnRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 64;
    const auto g = oracle::random_graph(n, trial % 2 == 0, rng);
    const auto m = bot::build_mask(g);
    const auto spd = bot::shortest_path_matrix(g);
    const auto dist = oracle::all_pairs_distances(n, g.edges());
    int max_d = 0;
    for (int i = 0; i < n; ++i) {
      EXPECT_TRUE(m(i, i));
      for (int j = 0; j < n; ++j) {
        EXPECT_EQ(m(i, j), m(j, i));
        EXPECT_EQ(m(i, j), spd(i, j) <= 1);
        EXPECT_EQ(spd(i, j), dist[i][j]);
        max_d = std::max(max_d, dist[i][j]);
      }
    }
    EXPECT_EQ(bot::diameter(g), max_d);
    if (trial % 2 == 0) EXPECT_LE(bot::diameter(g), n - 1);
    const double nn = static_cast<double>(n) * n;
    EXPECT_NEAR(bot::zero_fraction(m), 1.0 - (n + 2.0 * g.edges().size()) / nn, 1e-15);
  }
}

TEST(Graph, PermutationEquivariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 10;
    const auto g = oracle::random_graph(n, false, rng);
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto h = g.relabeled(perm);
    const auto m = bot::build_mask(g);
    const auto mh = bot::build_mask(h);
    // perm[i] is the new index of old node i.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) EXPECT_EQ(mh(perm[i], perm[j]), m(i, j));
  }
}

TEST(RandomMask, Extremes) {
  EXPECT_EQ(bot::random_mask(4, 0.0, 1), bot::AttentionMask::all_ones(4));
  EXPECT_EQ(bot::random_mask(4, 0.75, 1), bot::AttentionMask::identity(4));
  EXPECT_THROW(bot::random_mask(4, 0.8, 1), bot::Error);
  EXPECT_THROW(bot::random_mask(4, -0.1, 1), bot::Error);
}

TEST(RandomMask, CountAndDeterminism) {
  const auto a = bot::random_mask(32, 0.908, 1);
  const auto b = bot::random_mask(32, 0.908, 2);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, bot::random_mask(32, 0.908, 1));
  for (const auto& m : {a, b}) {
    const double zeros = 1024.0 - static_cast<double>(m.nonzeros());
    EXPECT_LE(std::abs(zeros - 0.908 * 1024), 2.0);
    EXPECT_EQ(static_cast<long>(zeros) % 2, 0);
  }
}

TEST(RandomMask, SymmetricUnitDiagonal) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 40;
    const double zf = u(rng) * (1.0 - 1.0 / n);
    const auto m = bot::random_mask(n, zf, trial);
    for (int i = 0; i < n; ++i) {
      EXPECT_TRUE(m(i, i));
      for (int j = 0; j < n; ++j) EXPECT_EQ(m(i, j), m(j, i));
    }
    EXPECT_LE(bot::zero_fraction(m), zf + 1e-12);
  }
}

TEST(AttentionMaskType, RejectsMalformed) {
  EXPECT_THROW(bot::AttentionMask::from_entries(2, {1, 1, 0, 1}), bot::Error);
  EXPECT_THROW(bot::AttentionMask::from_entries(2, {0, 0, 0, 1}), bot::Error);
  EXPECT_THROW(bot::AttentionMask::from_entries(2, {1, 0, 0}), bot::Error);
}

TEST(MaskFile, RoundTrip) {
  const auto m = bot::build_mask(a1());
  std::stringstream s;
  bot::write_mask(s, m);
  EXPECT_EQ(s.str().substr(0, 5), "n=13\n");
  EXPECT_EQ(bot::read_mask(s), m);
}

TEST(MaskBall, MatchesDistances) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = oracle::random_graph(12, trial % 2 == 0, rng);
    const auto dist = oracle::all_pairs_distances(12, g.edges());
    for (int r = 0; r < 4; ++r) EXPECT_EQ(bot::mask_ball(bot::build_mask(g), trial % 12, r), oracle::ball(dist, trial % 12, r));
  }
}

TEST(Allocation, A1Layout) {
  const auto g = a1();
  std::vector<bot::LayoutEntry> obs{{"orientation", 4, 0}, {"angular_velocity", 3, 0}};
  std::vector<bot::LayoutEntry> act;
  for (int i = 1; i < 13; ++i) {
    obs.push_back({"joint_angle", 1, i});
    obs.push_back({"joint_velocity", 1, i});
    obs.push_back({"previous_command", 1, i});
    act.push_back({"target", 1, i});
  }
  const auto alloc = bot::allocate(g, obs, act);
  EXPECT_EQ(alloc.observation_width(), 7 + 36);
  EXPECT_EQ(alloc.action_width(), 12);
  EXPECT_TRUE(alloc.action_ranges(0).empty());

  bot::Vector flat(alloc.observation_width());
  std::iota(flat.data(), flat.data() + flat.size(), 0.0);
  EXPECT_EQ(alloc.gather_observation(flat, 0).size(), 7);
  const bot::Vector joint = alloc.gather_observation(flat, 2);
  EXPECT_EQ(joint, (bot::Vector(3) << 10, 11, 12).finished());

  bot::Vector actions = bot::Vector::Zero(12);
  alloc.scatter_action(bot::Vector::Constant(1, 5.0), 3, actions);
  EXPECT_EQ(actions(2), 5.0);
  EXPECT_EQ(alloc.gather_action(actions, 3)(0), 5.0);
}

TEST(Allocation, Errors) {
  const auto g = a1();
  EXPECT_THROW(bot::allocate(g, {{"x", 1, 99}}, {}), bot::Error);
  EXPECT_THROW(bot::allocate(g, {{"orientation", 2, 0}}, {}), bot::Error);
}

TEST(Allocation, SingleNodeOwnsEverything) {
  const bot::EmbodimentGraph g({{0, "body", 5, 3, true}}, {});
  const auto alloc = bot::contiguous_allocation(g);
  EXPECT_EQ(alloc.observation_width(), 5);
  EXPECT_EQ(alloc.action_width(), 3);
  EXPECT_EQ(alloc.observation_ranges(0).front().width(), 5);
}

}  // namespace
