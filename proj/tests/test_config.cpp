#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>

#include "multiflock/config.hpp"
#include "multiflock/errors.hpp"

using namespace multiflock;

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1000), "1000");
  EXPECT_EQ(format_double(1e-8), "1e-08");
  for (double v : {1.0 / 3.0, 2.0 / 7.0, 1e300, -4.25e-200, 123456789.123})
    EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(RunConfig, DefaultsMatchStandardScenario) {
  RunConfig cfg;
  EXPECT_EQ(cfg.sim.num_nodes, 100);
  EXPECT_EQ(cfg.sim.area_side, 10000.0);
  EXPECT_EQ(cfg.sim.speed_min, 25.0);
  EXPECT_EQ(cfg.sim.speed_max, 35.0);
  EXPECT_EQ(cfg.sim.duration, 160.0);
  EXPECT_EQ(cfg.sim.sample_interval, 2.0);
  EXPECT_EQ(cfg.train.window, 11u);
  EXPECT_EQ(cfg.train_count, 50u);
  EXPECT_NO_THROW(cfg.finalize());
}

TEST(RunConfig, EveryKeyRoundTrips) {
  RunConfig a;
  a.set("sim.model", "mg");
  a.set("train.lr", "0.0025");
  a.set("data.radii", "500,1500");
  RunConfig b;
  for (const std::string& key : RunConfig::keys()) b.set(key, a.get(key));
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(b.get("data.radii"), "500,1500");
  EXPECT_EQ(b.sim.model, MobilityModel::manhattan_grid);
}

TEST(RunConfig, UnknownKeyAndBadValue) {
  RunConfig cfg;
  EXPECT_THROW(cfg.set("train.speed", "1"), ConfigError);
  EXPECT_THROW(cfg.set("train.epochs", "ten"), ConfigError);
  EXPECT_THROW(cfg.set("train.epochs", "10x"), ConfigError);
  EXPECT_THROW(cfg.set("sim.model", "levy"), ConfigError);
  EXPECT_THROW(cfg.set("model.inter_layer", "maybe"), ConfigError);
}

TEST(RunConfig, FinalizeCopiesRootSeed) {
  RunConfig cfg;
  cfg.set("seed", "42");
  cfg.finalize();
  EXPECT_EQ(cfg.sim.seed, 42u);
  EXPECT_EQ(cfg.train.seed, 42u);
}

TEST(RunConfig, ValidationRejectsBadRadii) {
  RunConfig cfg;
  cfg.set("data.radii", "1000,-5");
  EXPECT_THROW(cfg.finalize(), ConfigError);
}

TEST(Fingerprint, IgnoresOutputDirOnly) {
  RunConfig a, b;
  b.set("out", "elsewhere");
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 16u);
  b.set("train.epochs", "101");
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(ConfigText, AppliesValuesAndComments) {
  RunConfig cfg;
  apply_config_text(cfg, "# header\n\nsim.model = gm  # trailing\n  train.epochs=7\nloss.beta = 0\n");
  EXPECT_EQ(cfg.sim.model, MobilityModel::gauss_markov);
  EXPECT_EQ(cfg.train.epochs, 7u);
  EXPECT_EQ(cfg.train.loss.beta, 0.0);
}

TEST(ConfigText, ToTextReadsBack) {
  RunConfig a;
  a.set("seed", "9");
  a.set("sim.speed_max", "45");
  RunConfig b;
  apply_config_text(b, a.to_text());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
}

TEST(ConfigText, LaterLinesWin) {
  RunConfig cfg;
  apply_config_text(cfg, "train.lr = 0.5\ntrain.lr = 0.25\n");
  EXPECT_EQ(cfg.train.optimizer.learning_rate, 0.25);
}

TEST(ConfigText, ErrorsCarryLineAndColumn) {
  auto where = [](std::string_view text) {
    RunConfig cfg;
    try {
      apply_config_text(cfg, text);
    } catch (const ParseError& e) {
      return std::make_pair(e.line(), e.column());
    }
    return std::make_pair(std::size_t{0}, std::size_t{0});
  };
  using P = std::pair<std::size_t, std::size_t>;
  EXPECT_EQ(where("seed = 1\n  no equals sign\n"), (P{2, 3}));
  EXPECT_EQ(where("seed = 1\nsim.bogus = 3\n"), (P{2, 1}));
  EXPECT_EQ(where("# c\ntrain.epochs =   abc\n"), (P{2, 18}));
  EXPECT_EQ(where(" = 4\n"), (P{1, 2}));
}
