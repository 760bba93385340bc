#include "pf/nn.hpp"

#include <cmath>
#include <random>

#include "pf/error.hpp"

namespace pf::nn {

ag::Var ParamSet::add(const std::string& name, Shape shape, ParamKind kind) {
  if (find(name)) throw InvalidInput("duplicate parameter name " + name);
  const double fill = (kind == ParamKind::Scale) ? 1.0 : 0.0;
  ag::Var v(Tensor(std::move(shape), fill), kind != ParamKind::Buffer);
  params_.push_back({name, kind, v});
  return v;
}

const Param* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param& ParamSet::at(const std::string& name) const {
  if (const Param* p = find(name)) return *p;
  throw InvalidInput("unknown parameter " + name);
}

std::vector<ag::Var> ParamSet::trainable() const { return trainable_with_prefix(""); }

std::vector<ag::Var> ParamSet::trainable_with_prefix(const std::string& prefix) const {
  std::vector<ag::Var> out;
  for (const auto& p : params_)
    if (p.kind != ParamKind::Buffer && p.name.starts_with(prefix)) out.push_back(p.var);
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

void ParamSet::zero_grad() const {
  for (const auto& p : params_) p.var.zero_grad();
}

void init_weights(ParamSet& params, double std, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std);
  for (const auto& p : params.params()) {
    ag::Var v = p.var;
    Tensor& t = v.mutable_value();
    switch (p.kind) {
      case ParamKind::Weight:
        for (double& x : t.values()) x = normal(rng);
        break;
      case ParamKind::Bias:
        t.fill(0.0);
        break;
      case ParamKind::Scale:
        t.fill(1.0);
        break;
      case ParamKind::Embedding:
      case ParamKind::Buffer:
        break;
    }
  }
}

Linear::Linear(ParamSet& ps, const std::string& name, int in, int out, bool with_bias)
    : weight(ps.add(name + ".weight", {in, out}, ParamKind::Weight)) {
  if (with_bias) bias = ps.add(name + ".bias", {out}, ParamKind::Bias);
}

ag::Var Linear::operator()(const ag::Var& x) const {
  ag::Var y = ag::matmul(x, weight);
  return bias.defined() ? ag::add_row(y, bias) : y;
}

GruCell::GruCell(ParamSet& ps, const std::string& name, int in, int hidden_size)
    : w_ih(ps.add(name + ".w_ih", {in, 3 * hidden_size}, ParamKind::Weight)),
      w_hh(ps.add(name + ".w_hh", {hidden_size, 3 * hidden_size}, ParamKind::Weight)),
      b_ih(ps.add(name + ".b_ih", {3 * hidden_size}, ParamKind::Bias)),
      b_hh(ps.add(name + ".b_hh", {3 * hidden_size}, ParamKind::Bias)),
      hidden(hidden_size) {}

ag::Var GruCell::operator()(const ag::Var& x, const ag::Var& h) const {
  const ag::Var gi = ag::add_row(ag::matmul(x, w_ih), b_ih);
  const ag::Var gh = ag::add_row(ag::matmul(h, w_hh), b_hh);
  const int H = hidden;
  const ag::Var r = ag::sigmoid(ag::add(ag::slice_cols(gi, 0, H), ag::slice_cols(gh, 0, H)));
  const ag::Var z = ag::sigmoid(ag::add(ag::slice_cols(gi, H, H), ag::slice_cols(gh, H, H)));
  const ag::Var n = ag::tanh(ag::add(ag::slice_cols(gi, 2 * H, H), ag::mul(r, ag::slice_cols(gh, 2 * H, H))));
  return ag::add(ag::mul(ag::one_minus(z), n), ag::mul(z, h));
}

Conv2d::Conv2d(ParamSet& ps, const std::string& name, int in, int out, int kernel, int stride_, int pad_,
               bool with_bias)
    : weight(ps.add(name + ".weight", {out, in, kernel, kernel}, ParamKind::Weight)), stride(stride_), pad(pad_) {
  if (with_bias) bias = ps.add(name + ".bias", {out}, ParamKind::Bias);
}

ag::Var Conv2d::operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }

BatchNorm2d::BatchNorm2d(ParamSet& ps, const std::string& name, int channels)
    : gamma(ps.add(name + ".gamma", {channels}, ParamKind::Scale)),
      beta(ps.add(name + ".beta", {channels}, ParamKind::Bias)),
      running_mean(ps.add(name + ".running_mean", {channels}, ParamKind::Buffer)),
      running_var(ps.add(name + ".running_var", {channels}, ParamKind::Buffer)) {
  running_var.mutable_value().fill(1.0);
}

ag::Var BatchNorm2d::operator()(const ag::Var& x, bool training) const {
  if (training) {
    ag::Var rm = running_mean, rv = running_var;
    return ag::batch_norm2d_train(x, gamma, beta, rm.mutable_value(), rv.mutable_value());
  }
  return ag::batch_norm2d_eval(x, gamma, beta, running_mean.value(), running_var.value());
}

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var p = params_[i];
    const Tensor& g = p.grad();
    if (g.empty()) continue;
    Tensor& w = p.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() const {
  for (const auto& p : params_) p.zero_grad();
}

}  // namespace pf::nn
