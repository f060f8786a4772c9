#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "multiflock/errors.hpp"
#include "multiflock/mobility.hpp"

using namespace multiflock;

namespace {

SimConfig base_config(MobilityModel model, std::uint64_t seed = 1) {
  SimConfig cfg;
  cfg.model = model;
  cfg.seed = seed;
  return cfg;
}

// Lag-1 sample autocorrelation.
double autocorrelation(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    den += (v[k] - mean) * (v[k] - mean);
    if (k + 1 < v.size()) num += (v[k] - mean) * (v[k + 1] - mean);
  }
  return num / den;
}

double distance_to_wall(Vec2 p, double side) {
  return std::min({p.x, p.y, side - p.x, side - p.y});
}

const MobilityModel kAllModels[] = {MobilityModel::random_walk, MobilityModel::gauss_markov,
                                    MobilityModel::reference_point_group, MobilityModel::manhattan_grid};

}  // namespace

TEST(SimConfig, Validation) {
  SimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = [](auto mutate) {
    SimConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](SimConfig& c) { c.num_nodes = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.speed_min = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.speed_max = 10; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.sample_interval = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.area_side = -1; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.params.gauss_markov.memory = 1.5; }).validate(), ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) {
                 c.model = MobilityModel::reference_point_group;
                 c.params.reference_point_group.groups = 101;
               }).validate(),
               ConfigError);
  EXPECT_THROW(bad([](SimConfig& c) { c.params.manhattan_grid.grid_spacing = 0; }).validate(), ConfigError);
}

TEST(SimConfig, ModelNames) {
  for (MobilityModel m : kAllModels) EXPECT_EQ(parse_mobility_model(to_string(m)), m);
  EXPECT_THROW(parse_mobility_model("levy"), ConfigError);
}

// --- generate_trace ---------------------------------------------------------------

TEST(GenerateTrace, ZeroDurationHoldsInitialPositions) {
  for (MobilityModel m : kAllModels) {
    SimConfig cfg = base_config(m);
    cfg.duration = 0;
    const MobilityTrace t = generate_trace(cfg);
    ASSERT_EQ(t.num_nodes(), 100u);
    for (const auto& node : t.nodes) {
      ASSERT_EQ(node.size(), 1u);
      EXPECT_EQ(node[0].t, 0.0);
    }
  }
}

TEST(GenerateTrace, DeterministicAndValid) {
  for (MobilityModel m : kAllModels) {
    const SimConfig cfg = base_config(m, 77);
    const MobilityTrace a = generate_trace(cfg);
    EXPECT_TRUE(a == generate_trace(cfg)) << to_string(m);
    EXPECT_NO_THROW(a.validate()) << to_string(m);
    EXPECT_EQ(a.duration(), 160.0);
    SimConfig other = cfg;
    other.seed = 78;
    EXPECT_FALSE(a == generate_trace(other)) << to_string(m);
  }
}

TEST(GenerateTrace, NodeTraceIndependentOfNodeCount) {
  SimConfig cfg = base_config(MobilityModel::random_walk, 5);
  const MobilityTrace big = generate_trace(cfg);
  cfg.num_nodes = 7;
  const MobilityTrace small = generate_trace(cfg);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(small.nodes[i], big.nodes[i]);
}

TEST(GenerateTrace, DefaultConfigGivesEightyOneFrames) {
  const auto frames = sample_positions(generate_trace(base_config(MobilityModel::random_walk)), 2.0);
  ASSERT_EQ(frames.size(), 81u);
  EXPECT_EQ(frames.front().time, 0.0);
  EXPECT_EQ(frames.back().time, 160.0);
}

TEST(GenerateTrace, ContainmentAndSpeedBound) {
  for (MobilityModel m : kAllModels) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const SimConfig cfg = base_config(m, seed);
      const auto frames = sample_positions(generate_trace(cfg), cfg.sample_interval);
      for (std::size_t k = 0; k < frames.size(); ++k)
        for (std::size_t i = 0; i < frames[k].positions.size(); ++i) {
          const Vec2 p = frames[k].positions[i];
          ASSERT_GE(p.x, 0.0);
          ASSERT_LE(p.x, cfg.area_side);
          ASSERT_GE(p.y, 0.0);
          ASSERT_LE(p.y, cfg.area_side);
          if (k > 0) {
            ASSERT_LE(distance(p, frames[k - 1].positions[i]), cfg.speed_max * cfg.sample_interval + 1e-6)
                << to_string(m) << " node " << i << " frame " << k;
          }
        }
    }
  }
}

// --- random walk -------------------------------------------------------------------

TEST(RandomWalk, ConstantSpeedGivesFixedDisplacement) {
  SimConfig cfg = base_config(MobilityModel::random_walk, 11);
  cfg.speed_min = cfg.speed_max = 30.0;
  const auto frames = sample_positions(generate_trace(cfg), 2.0);
  std::size_t exact = 0, total = 0;
  for (std::size_t k = 1; k < frames.size(); ++k)
    for (std::size_t i = 0; i < 100; ++i) {
      const Vec2 a = frames[k - 1].positions[i], b = frames[k].positions[i];
      const double d = distance(a, b);
      ++total;
      if (std::abs(d - 60.0) < 1e-9) {
        ++exact;
      } else {
        // Only a bounce shortens the chord, and only within one interval's reach of a wall.
        EXPECT_LT(d, 60.0);
        EXPECT_LT(std::min(distance_to_wall(a, cfg.area_side), distance_to_wall(b, cfg.area_side)), 60.0);
      }
    }
  EXPECT_GT(exact, total * 95 / 100);
}

TEST(RandomWalk, SingleLegIsStraight) {
  SimConfig cfg = base_config(MobilityModel::random_walk, 12);
  cfg.area_side = 1e7;
  cfg.params.random_walk.leg_duration = 1e9;
  const MobilityTrace t = generate_trace(cfg);
  for (const auto& node : t.nodes) ASSERT_EQ(node.size(), 2u);
}

TEST(RandomWalk, DegenerateSpeedRange) {
  SimConfig cfg = base_config(MobilityModel::random_walk);
  cfg.speed_min = cfg.speed_max = 17.5;
  cfg.area_side = 1e7;
  Rng rng(13);
  RandomWalkState s{0.0, {5e6, 5e6}, 0.0, 0.0};
  for (int k = 0; k < 100; ++k) {
    s = step_random_walk(s, cfg, 1e9, rng);
    EXPECT_EQ(s.speed, 17.5);
  }
}

TEST(RandomWalk, HeadingsAreUniform) {
  SimConfig cfg = base_config(MobilityModel::random_walk);
  cfg.area_side = 1e9;
  Rng rng(14);
  RandomWalkState s{0.0, {5e8, 5e8}, 0.0, 0.0};
  constexpr int bins = 12, legs = 10000;
  std::vector<int> hist(bins, 0);
  for (int k = 0; k < legs; ++k) {
    s = step_random_walk(s, cfg, 1e12, rng);
    ++hist[static_cast<int>(s.heading / (2.0 * std::numbers::pi) * bins)];
  }
  const double expect = static_cast<double>(legs) / bins;
  double chi2 = 0.0;
  for (int c : hist) chi2 += (c - expect) * (c - expect) / expect;
  EXPECT_LT(chi2, 19.675);  // chi-square, 11 dof, 5%
}

// --- gauss-markov --------------------------------------------------------------------

TEST(GaussMarkov, FullMemoryWithoutNoiseIsConstant) {
  SimConfig cfg = base_config(MobilityModel::gauss_markov);
  cfg.area_side = 1e9;
  cfg.params.gauss_markov.memory = 1.0;
  cfg.params.gauss_markov.speed_sigma = 0.0;
  cfg.params.gauss_markov.heading_sigma = 0.0;
  Rng rng(15);
  GaussMarkovState s{0.0, {5e8, 5e8}, 31.0, 1.0, 2.5};
  for (int k = 0; k < 200; ++k) {
    s = step_gauss_markov(s, cfg, 1e9, rng);
    ASSERT_EQ(s.speed, 31.0);
    ASSERT_EQ(s.heading, 1.0);
  }
}

TEST(GaussMarkov, NoMemoryIsIid) {
  Rng rng(16);
  std::vector<double> v;
  double x = 0.0;
  for (int k = 0; k < 10000; ++k) v.push_back(x = gauss_markov_update(x, 30.0, 2.0, 0.0, rng));
  double mean = 0.0, var = 0.0;
  for (double s : v) mean += s / v.size();
  for (double s : v) var += (s - mean) * (s - mean) / v.size();
  EXPECT_NEAR(mean, 30.0, 0.1);
  EXPECT_NEAR(std::sqrt(var), 2.0, 0.1);
  EXPECT_NEAR(autocorrelation(v), 0.0, 0.05);
}

TEST(GaussMarkov, MemoryControlsSpeedAutocorrelation) {
  SimConfig cfg = base_config(MobilityModel::gauss_markov);
  cfg.area_side = 1e12;
  Rng rng(17);
  GaussMarkovState s{0.0, {5e11, 5e11}, 30.0, 0.0, 0.0};
  std::vector<double> speeds;
  for (int k = 0; k < 10000; ++k) {
    s = step_gauss_markov(s, cfg, 1e12, rng);
    speeds.push_back(s.speed);
  }
  EXPECT_NEAR(autocorrelation(speeds), 0.75, 0.05);
}

TEST(GaussMarkov, MemoryOutsideUnitIntervalRejected) {
  SimConfig cfg = base_config(MobilityModel::gauss_markov);
  cfg.params.gauss_markov.memory = -0.1;
  Rng rng(18);
  EXPECT_THROW(step_gauss_markov(GaussMarkovState{}, cfg, 10.0, rng), ConfigError);
}

// --- reference point group ------------------------------------------------------------

TEST(ReferencePointGroup, ZeroRadiusMembersCoincide) {
  SimConfig cfg = base_config(MobilityModel::reference_point_group, 19);
  cfg.params.reference_point_group.group_radius = 0.0;
  const auto frames = sample_positions(generate_trace(cfg), 2.0);
  for (const auto& f : frames)
    for (std::size_t i = 1; i < 25; ++i) ASSERT_EQ(f.positions[i], f.positions[0]);
}

TEST(ReferencePointGroup, MembersStayWithinRadiusOfReference) {
  SimConfig cfg = base_config(MobilityModel::reference_point_group, 20);
  cfg.num_nodes = 10;
  cfg.params.reference_point_group.groups = 1;
  const double rho = cfg.params.reference_point_group.group_radius;
  Rng group_rng(21);
  std::vector<Rng> member_rngs;
  GroupState s;
  s.reference = {5000, 5000};
  s.reference_target = {8000, 2000};
  s.reference_speed = 25.0;
  for (std::uint64_t m = 0; m < 10; ++m) {
    member_rngs.emplace_back(100 + m);
    s.members.push_back({{0, 0}, {rho * 0.6, -rho * 0.7}, 3.0});
  }
  std::vector<std::vector<Waypoint>> paths(10);
  while (s.time < 2000.0) {
    s = step_reference_point_group(s, cfg, 2000.0, group_rng, member_rngs, &paths);
    for (std::size_t m = 0; m < 10; ++m) {
      const Vec2 p{paths[m].back().x, paths[m].back().y};
      ASSERT_LE(distance(p, s.reference), rho + 1e-9);
    }
  }
}

TEST(ReferencePointGroup, IntraGroupDistanceBounded) {
  const SimConfig cfg = base_config(MobilityModel::reference_point_group, 22);
  const double rho = cfg.params.reference_point_group.group_radius;
  const auto frames = sample_positions(generate_trace(cfg), 2.0);
  for (const auto& f : frames)
    for (std::size_t g = 0; g < 4; ++g)
      for (std::size_t i = 25 * g; i < 25 * (g + 1); ++i)
        for (std::size_t j = i + 1; j < 25 * (g + 1); ++j)
          ASSERT_LE(distance(f.positions[i], f.positions[j]), 2 * rho + 1e-9);
}

// --- manhattan grid ---------------------------------------------------------------------

TEST(ManhattanGrid, PositionsStayOnGridLines) {
  const SimConfig cfg = base_config(MobilityModel::manhattan_grid, 23);
  const double g = cfg.params.manhattan_grid.grid_spacing;
  auto on_line = [&](double v) { return std::abs(v - g * std::round(v / g)) < 1e-6; };
  for (const auto& f : sample_positions(generate_trace(cfg), 2.0))
    for (const Vec2& p : f.positions) ASSERT_TRUE(on_line(p.x) || on_line(p.y)) << p.x << "," << p.y;
}

TEST(ManhattanGrid, NoTurnsKeepsOneLineUntilBoundary) {
  SimConfig cfg = base_config(MobilityModel::manhattan_grid);
  cfg.params.manhattan_grid.turn_probability = 0.0;
  Rng rng(24);
  GridState s{0.0, {0.0, 3000.0}, true, 1, 30.0, GridDecision::none};
  int intersections = 0;
  while (true) {
    s = step_manhattan_grid(s, cfg, 1e6, rng);
    if (s.last_decision == GridDecision::forced) break;
    ASSERT_EQ(s.last_decision, GridDecision::straight);
    ASSERT_EQ(s.position.y, 3000.0);
    ++intersections;
  }
  EXPECT_EQ(s.position.x, 10000.0);
  EXPECT_EQ(intersections, 9);
}

TEST(ManhattanGrid, TurnFrequencyMatchesProbability) {
  SimConfig cfg = base_config(MobilityModel::manhattan_grid);
  cfg.area_side = 1e6;
  Rng rng(25);
  GridState s{0.0, {5e5, 5e5}, true, 1, 30.0, GridDecision::none};
  int turned = 0, interior = 0;
  while (interior < 10000) {
    s = step_manhattan_grid(s, cfg, 1e12, rng);
    if (s.last_decision == GridDecision::turned) ++turned;
    if (s.last_decision == GridDecision::turned || s.last_decision == GridDecision::straight) ++interior;
  }
  EXPECT_NEAR(static_cast<double>(turned) / interior, 0.5, 0.02);
}

TEST(ManhattanGrid, NonPositiveSpacingRejected) {
  SimConfig cfg = base_config(MobilityModel::manhattan_grid);
  cfg.params.manhattan_grid.grid_spacing = -5;
  Rng rng(26);
  EXPECT_THROW(step_manhattan_grid(GridState{0.0, {0, 0}, true, 1, 30.0}, cfg, 10.0, rng), ConfigError);
}

// --- sampling ---------------------------------------------------------------------------

TEST(SamplePositions, StationaryNode) {
  MobilityTrace t{10.0, {{{0, 5, 5}, {10, 5, 5}}}};
  for (const auto& f : sample_positions(t, 2.5)) EXPECT_EQ(f.positions[0], (Vec2{5, 5}));
}

TEST(SamplePositions, LinearInterpolation) {
  MobilityTrace t{10.0, {{{0, 0, 0}, {10, 10, 0}}}};
  const auto frames = sample_positions(t, 5.0);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].positions[0], (Vec2{0, 0}));
  EXPECT_EQ(frames[1].positions[0], (Vec2{5, 0}));
  EXPECT_EQ(frames[2].positions[0], (Vec2{10, 0}));
}

TEST(SamplePositions, BadIntervals) {
  MobilityTrace t{10.0, {{{0, 0, 0}, {10, 10, 0}}}};
  EXPECT_THROW(sample_positions(t, 20.0), ConfigError);
  EXPECT_THROW(sample_positions(t, 3.0), ConfigError);
  EXPECT_THROW(sample_positions(t, 0.0), ConfigError);
}

// --- waypoint text -------------------------------------------------------------------------

TEST(WaypointText, SingleNode) {
  const MobilityTrace t = parse_waypoint_trace("0 1 2 5 3 4");
  ASSERT_EQ(t.num_nodes(), 1u);
  EXPECT_EQ(t.nodes[0], (std::vector<Waypoint>{{0, 1, 2}, {5, 3, 4}}));
}

TEST(WaypointText, EmptyInputHasNoNodes) {
  try {
    parse_waypoint_trace("");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no nodes"), std::string::npos);
  }
  EXPECT_THROW(parse_waypoint_trace("\n\n  \n"), ParseError);
}

TEST(WaypointText, ErrorsCarryLineAndColumn) {
  auto where = [](std::string_view text) {
    try {
      parse_waypoint_trace(text);
    } catch (const ParseError& e) {
      return std::make_pair(e.line(), e.column());
    }
    return std::make_pair(std::size_t{0}, std::size_t{0});
  };
  EXPECT_EQ(where("0 1 2 5 3 4\n0 1 2 4 1 x\n"), std::make_pair(std::size_t{2}, std::size_t{11}));
  EXPECT_EQ(where("0 1 2 5 3 4 3 1 1\n"), std::make_pair(std::size_t{1}, std::size_t{13}));
  EXPECT_EQ(where("0 1 2 5 3\n").first, 1u);
  EXPECT_EQ(where("0 1 2 5 3 4\n0 1 2 6 3 4\n").first, 2u);
}

TEST(WaypointText, RoundTrip) {
  for (MobilityModel m : kAllModels) {
    const SimConfig cfg = base_config(m, 27);
    const MobilityTrace t = generate_trace(cfg);
    EXPECT_TRUE(parse_waypoint_trace(format_waypoint_trace(t), cfg.area_side) == t) << to_string(m);
  }
}
