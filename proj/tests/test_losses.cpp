#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "pf/error.hpp"
#include "pf/losses.hpp"
#include "test_util.hpp"

using namespace pf;

namespace {

Tensor formula(Shape shape, double amp, double f, double phase) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = amp * std::sin(f * static_cast<double>(i) + phase);
  return t;
}

Tensor kl_mask() { return Tensor({2, 3}, {1, 1, 0, 1, 0, 0}); }

CAParams ca_from(const std::vector<ag::Var>& v, int T) {
  CAParams ca;
  for (int t = 0; t < T; ++t) {
    ca.mu.push_back(v[static_cast<std::size_t>(t)]);
    ca.sigma.push_back(ag::exp(v[static_cast<std::size_t>(T + t)]));
  }
  return ca;
}

}  // namespace

// Values from tests/oracles/losses_reference.py.
TEST(Losses, HuberMatchesReference) {
  const Tensor pred = formula({3, 5}, 2.0, 0.7, 0.1), target = formula({3, 5}, 1.5, 0.4, 0.9);
  for (auto [delta, value, g00, g24] : {std::tuple{1.0, 0.8340428778948202, -0.06502156874317126, -0.06666666666666667},
                                        std::tuple{0.5, 0.5082450368865268, -0.03333333333333333, -0.03333333333333333}}) {
    ag::Var p(pred, true);
    const ag::Var loss = huber_loss(p, ag::constant(target), delta);
    loss.backward();
    EXPECT_NEAR(loss.item(), value, 1e-14);
    EXPECT_NEAR(p.grad()[0], g00, 1e-15);
    EXPECT_NEAR(p.grad()[14], g24, 1e-15);
  }
}

TEST(Losses, HuberPieces) {
  const ag::Var zero = ag::constant(Tensor({1}, 0.0));
  EXPECT_DOUBLE_EQ(huber_loss(ag::constant(Tensor({1}, 0.5)), zero).item(), 0.125);
  EXPECT_DOUBLE_EQ(huber_loss(ag::constant(Tensor({1}, -3.0)), zero).item(), 2.5);
  EXPECT_DOUBLE_EQ(huber_loss(ag::constant(Tensor({1}, 3.0)), zero, 2.0).item(), 4.0);
  EXPECT_EQ(huber_loss(zero, zero).item(), 0.0);
  EXPECT_THROW(huber_loss(ag::constant(Tensor({2})), ag::constant(Tensor({3}))), ShapeError);
}

TEST(Losses, KlMatchesReference) {
  std::vector<ag::Var> v;
  for (int t = 0; t < 3; ++t) v.push_back(ag::constant(formula({2, 4}, 0.8, 0.5, t)));
  for (int t = 0; t < 3; ++t) v.push_back(ag::constant(formula({2, 4}, 0.6, 0.3, 2 * t + 1)));
  EXPECT_NEAR(kl_gaussian(ca_from(v, 3), kl_mask()).item(), 1.5496470822942634, 1e-13);
}

TEST(Losses, KlIsZeroAtPrior) {
  CAParams ca;
  ca.mu = {ag::constant(Tensor({2, 3}))};
  ca.sigma = {ag::constant(Tensor({2, 3}, 1.0))};
  EXPECT_EQ(kl_gaussian(ca, Tensor({2, 1}, 1.0)).item(), 0.0);
  EXPECT_THROW(kl_gaussian(ca, Tensor({2, 1})), InvalidInput);
  EXPECT_THROW(kl_gaussian(ca, Tensor({2, 2}, 1.0)), ShapeError);
  EXPECT_THROW(kl_gaussian(CAParams{}, Tensor({2, 1}, 1.0)), ShapeError);
}

TEST(Losses, AdversarialMatchesReference) {
  const ag::Var real = ag::constant(Tensor({3, 1}, {0.9, 0.6, 0.3}));
  const ag::Var fake = ag::constant(Tensor({3, 1}, {0.2, 0.7, 0.05}));
  EXPECT_NEAR(gan_d_loss(real, fake).item(), 1.099522864592483, 1e-14);
  EXPECT_NEAR(gan_g_adversarial(fake).item(), -0.4928032166758987, 1e-14);
  EXPECT_EQ(tpn_d_loss(real, fake).item(), gan_d_loss(real, fake).item());
  EXPECT_EQ(pcn_d_loss(real, fake).item(), gan_d_loss(real, fake).item());
}

TEST(Losses, AdversarialKnownValues) {
  const ag::Var half = ag::constant(Tensor({4, 1}, 0.5));
  EXPECT_NEAR(gan_d_loss(half, half).item(), 2.0 * std::numbers::ln2, 1e-15);
  EXPECT_NEAR(gan_g_adversarial(half).item(), -std::numbers::ln2, 1e-15);
  // Saturated scores are clamped instead of producing infinities.
  const ag::Var one = ag::constant(Tensor({1, 1}, 1.0)), zero = ag::constant(Tensor({1, 1}, 0.0));
  EXPECT_TRUE(std::isfinite(gan_d_loss(zero, one).item()));
  EXPECT_TRUE(std::isfinite(gan_g_adversarial(one).item()));
}

TEST(Losses, GeneratorLossesCombineTerms) {
  std::mt19937_64 rng(3);
  const ag::Var d = ag::constant(test::random_tensor({4, 1}, rng, 0.1, 0.9));
  const ag::Var yh = ag::constant(test::random_tensor({4, 15}, rng)), y = ag::constant(test::random_tensor({4, 15}, rng));
  CAParams ca;
  ca.mu = {ag::constant(test::random_tensor({4, 3}, rng)), ag::constant(test::random_tensor({4, 3}, rng))};
  ca.sigma = {ag::constant(test::random_tensor({4, 3}, rng, 0.5, 1.5)),
              ag::constant(test::random_tensor({4, 3}, rng, 0.5, 1.5))};
  const Tensor mask({4, 2}, {1, 1, 1, 0, 1, 1, 1, 0});
  const double expect = gan_g_adversarial(d).item() + 100.0 * huber_loss(yh, y).item() + 0.5 * kl_gaussian(ca, mask).item();
  EXPECT_NEAR(tpn_g_loss(d, yh, y, ca, mask).item(), expect, 1e-12);
  const ag::Var ab = ag::constant(test::random_tensor({2, 2, 4, 4}, rng)), abh = ag::constant(test::random_tensor({2, 2, 4, 4}, rng));
  const ag::Var d2 = ag::constant(test::random_tensor({2, 1}, rng, 0.1, 0.9));
  EXPECT_NEAR(pcn_g_loss(d2, abh, ab).item(), gan_g_adversarial(d2).item() + 10.0 * huber_loss(abh, ab).item(), 1e-12);
}

TEST(Losses, HuberGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const double delta = trial % 2 ? 0.5 : 1.0;
    const auto f = [delta](const std::vector<ag::Var>& v) { return huber_loss(v[0], v[1], delta); };
    EXPECT_LT(test::gradcheck(f, {test::random_tensor({3, 7}, rng, -2, 2), test::random_tensor({3, 7}, rng, -2, 2)}),
              1e-4);
  }
}

TEST(Losses, KlGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> in;
    for (int k = 0; k < 6; ++k) in.push_back(test::random_tensor({2, 4}, rng));
    const auto f = [](const std::vector<ag::Var>& v) { return kl_gaussian(ca_from(v, 3), kl_mask()); };
    EXPECT_LT(test::gradcheck(f, in), 1e-4);
  }
}

TEST(Losses, TpnLossGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  const Tensor mask({3, 2}, {1, 1, 1, 0, 1, 1});
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> in{test::random_tensor({3, 1}, rng, 0.05, 0.95), test::random_tensor({3, 15}, rng),
                           test::random_tensor({3, 15}, rng)};
    for (int k = 0; k < 4; ++k) in.push_back(test::random_tensor({3, 2}, rng));
    const auto g = [&mask](const std::vector<ag::Var>& v) {
      CAParams ca;
      ca.mu = {v[3], v[4]};
      ca.sigma = {ag::exp(v[5]), ag::exp(v[6])};
      return tpn_g_loss(v[0], v[1], v[2], ca, mask);
    };
    EXPECT_LT(test::gradcheck(g, in), 1e-4);
    const auto d = [](const std::vector<ag::Var>& v) { return tpn_d_loss(v[0], v[1]); };
    EXPECT_LT(test::gradcheck(d, {test::random_tensor({3, 1}, rng, 0.05, 0.95), test::random_tensor({3, 1}, rng, 0.05, 0.95)}),
              1e-4);
  }
}

TEST(Losses, PcnLossGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = [](const std::vector<ag::Var>& v) { return pcn_g_loss(v[0], v[1], v[2]); };
    EXPECT_LT(test::gradcheck(g, {test::random_tensor({2, 1}, rng, 0.05, 0.95), test::random_tensor({2, 2, 4, 4}, rng),
                                  test::random_tensor({2, 2, 4, 4}, rng)}),
              1e-4);
    const auto d = [](const std::vector<ag::Var>& v) { return pcn_d_loss(v[0], v[1]); };
    EXPECT_LT(test::gradcheck(d, {test::random_tensor({2, 1}, rng, 0.05, 0.95), test::random_tensor({2, 1}, rng, 0.05, 0.95)}),
              1e-4);
  }
}
