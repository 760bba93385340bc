#include "pf/losses.hpp"

#include "pf/error.hpp"

namespace pf {
namespace {

ag::Var clamped_log(const ag::Var& x) { return ag::log(ag::clamp(x, kScoreClamp, 1.0 - kScoreClamp)); }

}  // namespace

ag::Var huber_loss(const ag::Var& pred, const ag::Var& target, double delta) { return ag::huber(pred, target, delta); }

ag::Var kl_gaussian(const CAParams& ca, const Tensor& mask) {
  if (ca.mu.size() != ca.sigma.size() || ca.mu.empty()) throw ShapeError("kl_gaussian: mu/sigma length mismatch");
  const int T = static_cast<int>(ca.mu.size());
  const int B = ca.mu[0].dim(0), D = ca.mu[0].dim(1);
  if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != T) throw ShapeError("kl_gaussian: mask shape");
  const ag::Var ones = ag::constant(Tensor({D, 1}, 1.0));
  double valid = 0;
  ag::Var total;
  for (int t = 0; t < T; ++t) {
    Tensor col({B});
    for (int b = 0; b < B; ++b) col[b] = mask.at(b, t);
    double col_sum = 0;
    for (int b = 0; b < B; ++b) col_sum += col[b];
    if (col_sum == 0) continue;
    valid += col_sum;
    // 0.5 * (mu^2 + sigma^2 - 1 - log sigma^2)
    const ag::Var inner = ag::sub(ag::add(ag::square(ca.mu[t]), ag::square(ca.sigma[t])),
                                  ag::add_scalar(ag::scale(ag::log(ca.sigma[t]), 2.0), 1.0));
    const ag::Var per_row = ag::mul_col(ag::matmul(inner, ones), ag::constant(std::move(col)));
    const ag::Var s = ag::sum(per_row);
    total = total.defined() ? ag::add(total, s) : s;
  }
  if (valid == 0) throw InvalidInput("kl_gaussian: no valid tokens");
  return ag::scale(total, 0.5 / valid);
}

ag::Var gan_d_loss(const ag::Var& d_real, const ag::Var& d_fake) {
  return ag::scale(ag::add(ag::mean(clamped_log(d_real)), ag::mean(clamped_log(ag::one_minus(d_fake)))), -1.0);
}

ag::Var gan_g_adversarial(const ag::Var& d_fake) { return ag::mean(clamped_log(ag::one_minus(d_fake))); }

ag::Var tpn_d_loss(const ag::Var& d_real, const ag::Var& d_fake) { return gan_d_loss(d_real, d_fake); }

ag::Var tpn_g_loss(const ag::Var& d_fake, const ag::Var& y_hat, const ag::Var& y, const CAParams& ca,
                   const Tensor& mask, double lambda_h, double lambda_kl, double delta) {
  const ag::Var adv = gan_g_adversarial(d_fake);
  const ag::Var rec = ag::scale(huber_loss(y_hat, y, delta), lambda_h);
  const ag::Var kl = ag::scale(kl_gaussian(ca, mask), lambda_kl);
  return ag::add(ag::add(adv, rec), kl);
}

ag::Var pcn_d_loss(const ag::Var& d_real, const ag::Var& d_fake) { return gan_d_loss(d_real, d_fake); }

ag::Var pcn_g_loss(const ag::Var& d_fake, const ag::Var& ab_hat, const ag::Var& ab, double lambda_h, double delta) {
  return ag::add(gan_g_adversarial(d_fake), ag::scale(huber_loss(ab_hat, ab, delta), lambda_h));
}

}  // namespace pf
