#pragma once

// Adversarial and reconstruction objectives shared by both networks.

#include <vector>

#include "pf/autograd.hpp"

namespace pf {

// Discriminator scores are clamped to [eps, 1 - eps] before any log.
inline constexpr double kScoreClamp = 1e-7;

inline constexpr double kHuberDelta = 1.0;
inline constexpr double kTpnLambdaHuber = 100.0;
inline constexpr double kTpnLambdaKl = 0.5;
inline constexpr double kPcnLambdaHuber = 10.0;

// Diagonal Gaussian posterior over the text condition, one row block per token.
struct CAParams {
  std::vector<ag::Var> mu;     // T x [B, D]
  std::vector<ag::Var> sigma;  // T x [B, D], strictly positive
};

// Elementwise Huber penalty averaged over all elements.
ag::Var huber_loss(const ag::Var& pred, const ag::Var& target, double delta = kHuberDelta);

// KL(N(mu, diag sigma^2) || N(0, I)) summed over dimensions and averaged over
// the unmasked (token, batch row) pairs. mask is [B, T].
ag::Var kl_gaussian(const CAParams& ca, const Tensor& mask);

// -mean[log D(real) + log(1 - D(fake))]
ag::Var gan_d_loss(const ag::Var& d_real, const ag::Var& d_fake);
// mean log(1 - D(fake)); minimized by the generator.
ag::Var gan_g_adversarial(const ag::Var& d_fake);

ag::Var tpn_d_loss(const ag::Var& d_real, const ag::Var& d_fake);
ag::Var tpn_g_loss(const ag::Var& d_fake, const ag::Var& y_hat, const ag::Var& y, const CAParams& ca,
                   const Tensor& mask, double lambda_h = kTpnLambdaHuber, double lambda_kl = kTpnLambdaKl,
                   double delta = kHuberDelta);

ag::Var pcn_d_loss(const ag::Var& d_real, const ag::Var& d_fake);
ag::Var pcn_g_loss(const ag::Var& d_fake, const ag::Var& ab_hat, const ag::Var& ab,
                   double lambda_h = kPcnLambdaHuber, double delta = kHuberDelta);

}  // namespace pf
