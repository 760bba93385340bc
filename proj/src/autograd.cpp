#include "pf/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "pf/error.hpp"

namespace pf::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

bool wants_grad(const Var& v) { return v.defined() && v.requires_grad(); }

Var make_op(Tensor value, std::initializer_list<Var> inputs, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), wants_grad)) {
    node->requires_grad = true;
    for (const Var& v : inputs) node->parents.push_back(v.defined() ? v.node() : nullptr);
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

// Gradient sink for parent i, or nullptr if it does not take gradients.
Tensor* sink(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_rank(const Var& x, int rank, const char* op) {
  if (x.value().rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
}

template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op(std::move(out), {x}, [df](Node& self) {
    Tensor* gx = sink(self, 0);
    if (!gx) return;
    const Tensor& in = self.parents[0]->value;
    for (std::size_t i = 0; i < in.size(); ++i) (*gx)[i] += self.grad[i] * df(in[i], self.value[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(const Tensor& g) { grad_buffer() += g; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

void Var::zero_grad() const { node_->grad = Tensor(); }

Var Var::detach() const { return Var(node_->value, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) { return Var(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (Tensor* g = sink(self, i)) *g += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (Tensor* g = sink(self, 0)) *g += self.grad;
    if (Tensor* g = sink(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (Tensor* g = sink(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (Tensor* g = sink(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var one_minus(const Var& x) {
  return unary(x, [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& x) {
  double s = 0;
  for (double v : x.value().values()) s += v;
  return make_op(Tensor::scalar(s), {x}, [](Node& self) {
    if (Tensor* g = sink(self, 0)) {
      const double d = self.grad[0];
      for (double& v : g->values()) v += d;
    }
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
  return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
    CMapMat gout(self.grad.data(), m, n);
    if (Tensor* g = sink(self, 0))
      MapMat(g->data(), m, k).noalias() += gout * CMapMat(self.parents[1]->value.data(), k, n).transpose();
    if (Tensor* g = sink(self, 1))
      MapMat(g->data(), k, n).noalias() += CMapMat(self.parents[0]->value.data(), m, k).transpose() * gout;
  });
}

Var add_row(const Var& x, const Var& bias) {
  require_rank(bias, 1, "add_row");
  const int n = bias.dim(0);
  if (x.value().rank() < 1 || x.dim(-1) != n)
    throw ShapeError("add_row: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  Tensor out = x.value();
  const std::size_t rows = out.size() / static_cast<std::size_t>(n);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) out[r * n + j] += bias.value()[j];
  return make_op(std::move(out), {x, bias}, [rows, n](Node& self) {
    if (Tensor* g = sink(self, 0)) *g += self.grad;
    if (Tensor* g = sink(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) (*g)[j] += self.grad[r * n + j];
  });
}

Var mul_col(const Var& x, const Var& c) {
  require_rank(x, 2, "mul_col");
  const int rows = x.dim(0), n = x.dim(1);
  if (static_cast<int>(c.value().size()) != rows)
    throw ShapeError("mul_col: " + shape_str(x.shape()) + " by " + shape_str(c.shape()));
  Tensor out(x.shape());
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) out.at(r, j) = x.value().at(r, j) * c.value()[r];
  return make_op(std::move(out), {x, c}, [rows, n](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    const Tensor& cv = self.parents[1]->value;
    if (Tensor* g = sink(self, 0))
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) g->at(r, j) += self.grad.at(r, j) * cv[r];
    if (Tensor* g = sink(self, 1))
      for (int r = 0; r < rows; ++r) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += self.grad.at(r, j) * xv.at(r, j);
        (*g)[r] += s;
      }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0].dim(0);
  std::vector<int> widths;
  int total = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Tensor out({rows, total});
  int offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < widths[i]; ++j) out.at(r, offset + j) = parts[i].value().at(r, j);
    offset += widths[i];
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  if (g_grad_enabled && std::any_of(parts.begin(), parts.end(), wants_grad)) {
    node->requires_grad = true;
    for (const Var& p : parts) node->parents.push_back(p.node());
    node->backward_fn = [rows, widths](Node& self) {
      int offset = 0;
      for (std::size_t i = 0; i < widths.size(); ++i) {
        if (Tensor* g = sink(self, i))
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < widths[i]; ++j) g->at(r, j) += self.grad.at(r, offset + j);
        offset += widths[i];
      }
    };
  }
  return Var(std::move(node));
}

Var slice_cols(const Var& x, int start, int len) {
  require_rank(x, 2, "slice_cols");
  const int rows = x.dim(0), n = x.dim(1);
  if (start < 0 || len < 0 || start + len > n) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({rows, len});
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < len; ++j) out.at(r, j) = x.value().at(r, start + j);
  return make_op(std::move(out), {x}, [rows, start, len](Node& self) {
    if (Tensor* g = sink(self, 0))
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j) g->at(r, start + j) += self.grad.at(r, j);
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), {x}, [](Node& self) {
    if (Tensor* g = sink(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Var gather_rows(const Var& table, const std::vector<int>& ids) {
  require_rank(table, 2, "gather_rows");
  const int vocab = table.dim(0), d = table.dim(1);
  const int rows = static_cast<int>(ids.size());
  Tensor out({rows, d});
  for (int r = 0; r < rows; ++r) {
    if (ids[r] < 0 || ids[r] >= vocab) throw InvalidInput("gather_rows: id out of range");
    std::copy_n(table.value().data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + static_cast<std::size_t>(r) * d);
  }
  return make_op(std::move(out), {table}, [ids, d](Node& self) {
    if (Tensor* g = sink(self, 0))
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (int j = 0; j < d; ++j) (*g)[static_cast<std::size_t>(ids[r]) * d + j] += self.grad[r * d + j];
  });
}

Var masked_softmax_rows(const Var& x, const Tensor& mask) {
  require_rank(x, 2, "masked_softmax_rows");
  if (mask.shape() != x.shape()) throw ShapeError("masked_softmax_rows: mask shape differs");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out(x.shape());
  for (int r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int j = 0; j < cols; ++j)
      if (mask.at(r, j) != 0) {
        any = true;
        const double v = x.value().at(r, j);
        mx = std::isnan(v) || std::isnan(mx) ? std::numeric_limits<double>::quiet_NaN() : std::max(mx, v);
      }
    if (!any) throw InvalidInput("masked_softmax_rows: row has no unmasked entries");
    double z = 0;
    for (int j = 0; j < cols; ++j) {
      const double e = mask.at(r, j) != 0 ? std::exp(x.value().at(r, j) - mx) : 0.0;
      out.at(r, j) = e;
      z += e;
    }
    for (int j = 0; j < cols; ++j) out.at(r, j) /= z;
  }
  return make_op(std::move(out), {x}, [rows, cols](Node& self) {
    Tensor* g = sink(self, 0);
    if (!g) return;
    for (int r = 0; r < rows; ++r) {
      double dot = 0;
      for (int j = 0; j < cols; ++j) dot += self.value.at(r, j) * self.grad.at(r, j);
      for (int j = 0; j < cols; ++j) g->at(r, j) += self.value.at(r, j) * (self.grad.at(r, j) - dot);
    }
  });
}

Var huber(const Var& pred, const Var& target, double delta) {
  require_same_shape(pred, target, "huber");
  if (!(delta > 0)) throw InvalidInput("huber: delta must be positive");
  const std::size_t n = pred.value().size();
  if (n == 0) throw ShapeError("huber: empty input");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(pred.value()[i] - target.value()[i]);
    total += d <= delta ? 0.5 * d * d : delta * d - 0.5 * delta * delta;
  }
  return make_op(Tensor::scalar(total / static_cast<double>(n)), {pred, target}, [n, delta](Node& self) {
    const Tensor& p = self.parents[0]->value;
    const Tensor& t = self.parents[1]->value;
    const double scale = self.grad[0] / static_cast<double>(n);
    Tensor* gp = sink(self, 0);
    Tensor* gt = sink(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[i] - t[i];
      const double dd = std::abs(d) <= delta ? d : (d > 0 ? delta : -delta);
      if (gp) (*gp)[i] += scale * dd;
      if (gt) (*gt)[i] -= scale * dd;
    }
  });
}

namespace {

struct ConvGeom {
  int batch, cin, h, w, cout, k, stride, pad, oh, ow;
  int patch() const { return cin * k * k; }
  int spatial() const { return oh * ow; }
};

// cols [cin*k*k, oh*ow] for one sample.
void im2col(const double* x, const ConvGeom& g, double* cols) {
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        double* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * g.spatial();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
}

void col2im(const double* cols, const ConvGeom& g, double* dx) {
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.k; ++ki)
      for (int kj = 0; kj < g.k; ++kj) {
        const double* row = cols + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * g.spatial();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + oy * g.ow;
          double* dst = dx + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  ConvGeom g{};
  g.batch = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.k = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (w.dim(1) != g.cin || w.dim(3) != g.k)
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  if (b.defined() && (b.value().rank() != 1 || b.dim(0) != g.cout)) throw ShapeError("conv2d: bias shape");
  g.oh = (g.h + 2 * pad - g.k) / stride + 1;
  g.ow = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.oh <= 0 || g.ow <= 0) throw ShapeError("conv2d: input too small for kernel");

  Tensor out({g.batch, g.cout, g.oh, g.ow});
  Buffer cols(static_cast<std::size_t>(g.patch()) * g.spatial());
  CMapMat wm(w.value().data(), g.cout, g.patch());
  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.cout) * g.spatial();
  for (int n = 0; n < g.batch; ++n) {
    im2col(x.value().data() + n * in_stride, g, cols.data());
    MapMat o(out.data() + n * out_stride, g.cout, g.spatial());
    o.noalias() = wm * CMapMat(cols.data(), g.patch(), g.spatial());
    if (b.defined())
      for (int c = 0; c < g.cout; ++c) o.row(c).array() += b.value()[c];
  }

  return make_op(std::move(out), {x, w, b}, [g, in_stride, out_stride](Node& self) {
    Tensor* gx = sink(self, 0);
    Tensor* gw = sink(self, 1);
    Tensor* gb = self.parents[2] ? sink(self, 2) : nullptr;
    const Tensor& xv = self.parents[0]->value;
    const Tensor& wv = self.parents[1]->value;
    Buffer cols(static_cast<std::size_t>(g.patch()) * g.spatial());
    CMapMat wm(wv.data(), g.cout, g.patch());
    for (int n = 0; n < g.batch; ++n) {
      CMapMat gout(self.grad.data() + n * out_stride, g.cout, g.spatial());
      if (gb)
        for (int c = 0; c < g.cout; ++c) (*gb)[c] += gout.row(c).sum();
      if (gw) {
        im2col(xv.data() + n * in_stride, g, cols.data());
        MapMat(gw->data(), g.cout, g.patch()).noalias() +=
            gout * CMapMat(cols.data(), g.patch(), g.spatial()).transpose();
      }
      if (gx) {
        MapMat(cols.data(), g.patch(), g.spatial()).noalias() = wm.transpose() * gout;
        col2im(cols.data(), g, gx->data() + n * in_stride);
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx] =
            x.value()[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2];
  return make_op(std::move(out), {x}, [planes, h, w](Node& self) {
    Tensor* g = sink(self, 0);
    if (!g) return;
    for (int p = 0; p < planes; ++p)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          (*g)[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2] +=
              self.grad[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx];
  });
}

Var concat_channels(const Var& a, const Var& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  const std::size_t sa = ca * plane, sb = cb * plane;
  Tensor out({batch, ca + cb, a.dim(2), a.dim(3)});
  for (int n = 0; n < batch; ++n) {
    std::copy_n(a.value().data() + n * sa, sa, out.data() + n * (sa + sb));
    std::copy_n(b.value().data() + n * sb, sb, out.data() + n * (sa + sb) + sa);
  }
  return make_op(std::move(out), {a, b}, [batch, sa, sb](Node& self) {
    Tensor* ga = sink(self, 0);
    Tensor* gb = sink(self, 1);
    for (int n = 0; n < batch; ++n) {
      const double* src = self.grad.data() + n * (sa + sb);
      if (ga)
        for (std::size_t i = 0; i < sa; ++i) (*ga)[n * sa + i] += src[i];
      if (gb)
        for (std::size_t i = 0; i < sb; ++i) (*gb)[n * sb + i] += src[sa + i];
    }
  });
}

Var broadcast_spatial(const Var& x, int height, int width) {
  require_rank(x, 2, "broadcast_spatial");
  const int batch = x.dim(0), ch = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Tensor out({batch, ch, height, width});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < ch; ++c)
      std::fill_n(out.data() + (static_cast<std::size_t>(n) * ch + c) * plane, plane, x.value().at(n, c));
  return make_op(std::move(out), {x}, [batch, ch, plane](Node& self) {
    Tensor* g = sink(self, 0);
    if (!g) return;
    for (int n = 0; n < batch; ++n)
      for (int c = 0; c < ch; ++c) {
        const double* src = self.grad.data() + (static_cast<std::size_t>(n) * ch + c) * plane;
        double s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += src[i];
        g->at(n, c) += s;
      }
  });
}

Var add_spatial(const Var& x, const Var& y) {
  require_rank(x, 4, "add_spatial");
  require_rank(y, 2, "add_spatial");
  if (y.dim(0) != x.dim(0) || y.dim(1) != x.dim(1))
    throw ShapeError("add_spatial: " + shape_str(x.shape()) + " + " + shape_str(y.shape()));
  return add(x, broadcast_spatial(y, x.dim(2), x.dim(3)));
}

namespace {

struct BnGeom {
  int batch, ch;
  std::size_t plane;
  std::size_t idx(int n, int c) const { return (static_cast<std::size_t>(n) * ch + c) * plane; }
};

Var batch_norm_apply(const Var& x, const Var& gamma, const Var& beta, const std::vector<double>& mean,
                     const std::vector<double>& inv_std, bool batch_stats) {
  const BnGeom g{x.dim(0), x.dim(1), static_cast<std::size_t>(x.dim(2)) * x.dim(3)};
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  for (int n = 0; n < g.batch; ++n)
    for (int c = 0; c < g.ch; ++c)
      for (std::size_t i = 0; i < g.plane; ++i) {
        const std::size_t k = g.idx(n, c) + i;
        xhat[k] = (x.value()[k] - mean[c]) * inv_std[c];
        out[k] = gamma.value()[c] * xhat[k] + beta.value()[c];
      }
  return make_op(std::move(out), {x, gamma, beta}, [g, xhat = std::move(xhat), inv_std, batch_stats](Node& self) {
    Tensor* gx = sink(self, 0);
    Tensor* gg = sink(self, 1);
    Tensor* gbeta = sink(self, 2);
    const Tensor& gamma_v = self.parents[1]->value;
    const double count = static_cast<double>(g.batch) * static_cast<double>(g.plane);
    for (int c = 0; c < g.ch; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < g.batch; ++n)
        for (std::size_t i = 0; i < g.plane; ++i) {
          const std::size_t k = g.idx(n, c) + i;
          sum_dy += self.grad[k];
          sum_dy_xhat += self.grad[k] * xhat[k];
        }
      if (gg) (*gg)[c] += sum_dy_xhat;
      if (gbeta) (*gbeta)[c] += sum_dy;
      if (!gx) continue;
      const double gscale = gamma_v[c] * inv_std[c];
      for (int n = 0; n < g.batch; ++n)
        for (std::size_t i = 0; i < g.plane; ++i) {
          const std::size_t k = g.idx(n, c) + i;
          if (batch_stats)
            (*gx)[k] += gscale * (self.grad[k] - sum_dy / count - xhat[k] * sum_dy_xhat / count);
          else
            (*gx)[k] += gscale * self.grad[k];
        }
    }
  });
}

void check_bn_shapes(const Var& x, const Var& gamma, const Var& beta) {
  require_rank(x, 4, "batch_norm2d");
  if (gamma.value().size() != static_cast<std::size_t>(x.dim(1)) ||
      beta.value().size() != static_cast<std::size_t>(x.dim(1)))
    throw ShapeError("batch_norm2d: parameter width differs from channel count");
}

}  // namespace

Var batch_norm2d_train(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                       Tensor& running_var, double momentum, double eps) {
  check_bn_shapes(x, gamma, beta);
  const BnGeom g{x.dim(0), x.dim(1), static_cast<std::size_t>(x.dim(2)) * x.dim(3)};
  const double count = static_cast<double>(g.batch) * static_cast<double>(g.plane);
  std::vector<double> mean(g.ch, 0.0), inv_std(g.ch, 0.0);
  for (int c = 0; c < g.ch; ++c) {
    double s = 0;
    for (int n = 0; n < g.batch; ++n)
      for (std::size_t i = 0; i < g.plane; ++i) s += x.value()[g.idx(n, c) + i];
    mean[c] = s / count;
    double v = 0;
    for (int n = 0; n < g.batch; ++n)
      for (std::size_t i = 0; i < g.plane; ++i) {
        const double d = x.value()[g.idx(n, c) + i] - mean[c];
        v += d * d;
      }
    v /= count;
    inv_std[c] = 1.0 / std::sqrt(v + eps);
    const double unbiased = count > 1 ? v * count / (count - 1) : v;
    running_mean[c] = (1 - momentum) * running_mean[c] + momentum * mean[c];
    running_var[c] = (1 - momentum) * running_var[c] + momentum * unbiased;
  }
  return batch_norm_apply(x, gamma, beta, mean, inv_std, true);
}

Var batch_norm2d_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                      const Tensor& running_var, double eps) {
  check_bn_shapes(x, gamma, beta);
  const int ch = x.dim(1);
  std::vector<double> mean(running_mean.data(), running_mean.data() + ch), inv_std(ch);
  for (int c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
  return batch_norm_apply(x, gamma, beta, mean, inv_std, false);
}

}  // namespace pf::ag
