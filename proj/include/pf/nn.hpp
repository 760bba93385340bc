#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pf/autograd.hpp"

namespace pf::nn {

enum class ParamKind {
  Weight,     // N(0, std^2) at init
  Bias,       // zero at init
  Scale,      // one at init (normalization gain)
  Embedding,  // filled by the data pipeline, left alone by init_weights
  Buffer,     // running statistics; not trained
};

struct Param {
  std::string name;
  ParamKind kind;
  ag::Var var;
};

// Named, ordered parameter registry. Names are unique.
class ParamSet {
 public:
  ag::Var add(const std::string& name, Shape shape, ParamKind kind);

  const std::vector<Param>& params() const { return params_; }
  const Param* find(const std::string& name) const;
  const Param& at(const std::string& name) const;
  std::vector<ag::Var> trainable() const;
  std::vector<ag::Var> trainable_with_prefix(const std::string& prefix) const;
  std::size_t scalar_count() const;
  void zero_grad() const;

 private:
  std::vector<Param> params_;
};

// Weights ~ N(0, std^2), biases 0, scales 1. Embeddings and buffers are left
// untouched. Draw order follows registration order, so a seed fully
// determines the result.
void init_weights(ParamSet& params, double std, std::uint64_t seed);

// y = x W + b with W [in, out].
struct Linear {
  ag::Var weight, bias;
  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, int in, int out, bool with_bias = true);
  ag::Var operator()(const ag::Var& x) const;
  int in_features() const { return weight.dim(0); }
  int out_features() const { return weight.dim(1); }
};

// Gated recurrent unit, gate order (reset, update, candidate):
//   r = sig(x Wr + br + h Ur + cr), z = sig(x Wz + bz + h Uz + cz)
//   n = tanh(x Wn + bn + r * (h Un + cn)), h' = (1 - z) * n + z * h
struct GruCell {
  ag::Var w_ih, w_hh, b_ih, b_hh;
  int hidden = 0;
  GruCell() = default;
  GruCell(ParamSet& ps, const std::string& name, int in, int hidden);
  ag::Var operator()(const ag::Var& x, const ag::Var& h) const;
};

struct Conv2d {
  ag::Var weight, bias;
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamSet& ps, const std::string& name, int in, int out, int kernel, int stride, int pad,
         bool with_bias = true);
  ag::Var operator()(const ag::Var& x) const;
};

struct BatchNorm2d {
  ag::Var gamma, beta, running_mean, running_var;
  BatchNorm2d() = default;
  BatchNorm2d(ParamSet& ps, const std::string& name, int channels);
  // Training mode updates the running statistics.
  ag::Var operator()(const ag::Var& x, bool training) const;
};

// Adam with bias correction.
class Adam {
 public:
  Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps = 1e-8);
  // Parameters that received no gradient are skipped.
  void step();
  void zero_grad() const;
  long steps() const { return t_; }

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace pf::nn
