#include <gtest/gtest.h>

#include "checks.hpp"

namespace precedent {
namespace {

using testing::Probe;

TEST(Forward, HandSizedMlp) {
  // d1 = 2, d2 = 2, K = 1, Simple head: W = [[1, -1], [0.5, 2]], w = [3, -1].
  ModelConfig config;
  config.d1 = 2;
  config.d2 = 2;
  config.num_articles = 1;
  const Layout layout = Layout::of(config);
  ASSERT_EQ(layout.num_params(), 6u);
  const std::vector<double> theta = {1.0, -1.0, 0.5, 2.0, 3.0, -1.0};
  const std::vector<double> x = {2.0, 1.0};
  const Activations act = forward(layout, theta, x);
  // W x = [1, 3]; relu = [1, 3]; z = 3 - 3 = 0.
  EXPECT_DOUBLE_EQ(act.hidden[0], 1.0);
  EXPECT_DOUBLE_EQ(act.hidden[1], 3.0);
  EXPECT_DOUBLE_EQ(act.logits[0], 0.0);
  EXPECT_DOUBLE_EQ(act.probabilities[0], 0.5);

  const std::vector<double> x2 = {-1.0, 1.0};  // W x = [-2, 1.5]; relu = [0, 1.5]
  const Activations act2 = forward(layout, theta, x2);
  EXPECT_DOUBLE_EQ(act2.logits[0], -1.5);
  EXPECT_NEAR(act2.probabilities[0], 1.0 / (1.0 + std::exp(1.5)), 1e-15);
}

TEST(Loss, MatchesNegativeLogProbability) {
  Rng rng(3);
  for (Head head : {Head::kSimple, Head::kJoint}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Probe p = testing::random_probe(rng, head, Architecture::kMlp);
      const Layout layout = Layout::of(p.config);
      const Activations act = forward(layout, p.theta, p.x);
      double expected = 0.0;
      for (std::size_t k = 0; k < layout.num_articles; ++k) {
        if (head == Head::kSimple) {
          const double q = act.probabilities[k];
          expected -= std::log(p.y[k] == Outcome::kPositive ? q : 1.0 - q);
        } else {
          expected -= std::log(act.probabilities[k * 3 + static_cast<std::size_t>(p.y[k])]);
        }
      }
      EXPECT_NEAR(instance_loss(layout, p.theta, p.x, p.y), expected, 1e-12 * std::max(1.0, expected));
    }
  }
}

TEST(Loss, ProbabilityFloorCapsTheLoss) {
  ModelConfig config;
  config.head = Head::kSimple;
  config.architecture = Architecture::kLinear;
  config.d1 = 1;
  config.num_articles = 1;
  const Layout layout = Layout::of(config);
  const double loss = instance_loss(layout, std::vector<double>{1e6}, std::vector<double>{1.0}, parse_outcomes("-"));
  EXPECT_NEAR(loss, -std::log(kProbabilityFloor), 1e-9);
  const auto g = instance_gradient(layout, std::vector<double>{1e6}, std::vector<double>{1.0}, parse_outcomes("-"));
  EXPECT_EQ(g[0], 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(17);
  for (Head head : {Head::kSimple, Head::kJoint})
    for (Architecture arch : {Architecture::kMlp, Architecture::kLinear})
      for (int trial = 0; trial < 10; ++trial) {
        const Probe p = testing::random_probe(rng, head, arch);
        EXPECT_LE(testing::rel_error(testing::gradient_at(p, p.theta), testing::finite_difference_gradient(p)), 1e-4);
      }
}

TEST(Hvp, MatchesGradientDifferencesAndIsLinear) {
  Rng rng(19);
  for (Head head : {Head::kSimple, Head::kJoint})
    for (Architecture arch : {Architecture::kMlp, Architecture::kLinear})
      for (int trial = 0; trial < 10; ++trial) {
        const Probe p = testing::random_probe(rng, head, arch);
        const auto v = testing::random_vector(rng, p.theta.size());
        EXPECT_LE(testing::rel_error(testing::hvp_at(p, v), testing::gradient_difference_hvp(p, v)), 1e-4);
        EXPECT_LE(testing::linearity_residual(p, rng), 1e-10);
      }
}

TEST(Params, InitIsSeededAndCheckpointRoundTrips) {
  ModelConfig config;
  config.head = Head::kJoint;
  config.d1 = 5;
  config.d2 = 3;
  config.num_articles = 2;
  config.seed = 9;
  EXPECT_EQ(init_params(config), init_params(config));
  ModelConfig other = config;
  other.seed = 10;
  EXPECT_NE(init_params(config).flat, init_params(other).flat);
  EXPECT_EQ(init_params(config).size(), 3u * 5 + 2 * 3 * 3);

  const auto j = checkpoint_to_json(config, init_params(config));
  const auto [back_config, back_params] = checkpoint_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back_config, config);
  EXPECT_EQ(back_params, init_params(config));
  EXPECT_THROW(unflatten(Layout::of(config), std::vector<double>(3)), Error);
}

TEST(Params, ConfigValidation) {
  ModelConfig config;
  config.dropout_rate = 1.0;
  EXPECT_THROW(config.validate(), Error);
  config = {};
  config.d2 = 0;
  EXPECT_THROW(config.validate(), Error);
  config.architecture = Architecture::kLinear;
  EXPECT_NO_THROW(config.validate());
  EXPECT_THROW(parse_head("crf"), Error);
}

}  // namespace
}  // namespace precedent
