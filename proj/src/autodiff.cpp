#include "gcum/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gcum/error.hpp"
#include "gcum/kernels.hpp"

namespace gcum::ad {

const Tensor& Var::value() const { return graph->value(id); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(v.size()) + " values");
  return v[0];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("non-finite value in leaf tensor");
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) throw NonFiniteError("non-finite output from " + std::string(op));
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.graph != this) throw PreconditionError(std::string(op) + ": operand from another graph");
    needs = needs || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs, {}, needs ? std::move(fn) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

std::span<double> Graph::grad_sink(std::size_t id) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return {};
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Graph::backward(Var loss) {
  if (backward_done_) throw PreconditionError("backward() called twice on the same graph");
  if (loss.graph != this) throw PreconditionError("loss belongs to another graph");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward() needs a scalar loss");
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_sink(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
    node.backward(*this, id);
  }
  for (const auto& node : nodes_) {
    for (double g : node.grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient");
    }
  }
}

Tensor Graph::grad(Var v) const {
  const auto& node = nodes_[v.id];
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return Tensor(node.value.shape(), node.grad);
}

namespace {

void require_same_layout(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

template <class Fwd, class Deriv>
Var unary(std::string_view op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const Var ins[] = {a};
  return a.graph->record(op, std::move(out), ins, [a, deriv](Graph& g, std::size_t self) {
    auto ga = g.grad_sink(a.id);
    const auto go = g.grad_of(self);
    const auto& x = g.value(a.id);
    const auto& y = g.value(self);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " +
                     std::to_string(bv.rows()) + ")");
  }
  const kernels::Dims d{av.rows(), av.cols(), bv.cols()};
  Tensor out(matrix_shape(d.m, d.n));
  kernels::matmul(av.values(), bv.values(), out.values(), d);
  const Var ins[] = {a, b};
  return a.graph->record("matmul", std::move(out), ins, [a, b, d](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    if (auto ga = g.grad_sink(a.id); !ga.empty()) {
      // dA = dC · Bᵀ
      std::vector<double> tmp(d.m * d.k);
      kernels::matmul_nt(go, g.value(b.id).values(), tmp, {d.m, d.n, d.k});
      for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
    }
    if (auto gb = g.grad_sink(b.id); !gb.empty()) {
      // dB = Aᵀ · dC
      std::vector<double> tmp(d.k * d.n);
      kernels::matmul_tn(g.value(a.id).values(), go, tmp, {d.k, d.m, d.n});
      for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(matrix_shape(c, r));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  const Var ins[] = {a};
  return a.graph->record("transpose", std::move(out), ins, [a, r, c](Graph& g, std::size_t self) {
    auto ga = g.grad_sink(a.id);
    const auto go = g.grad_of(self);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph* graph = parts.front().graph;
  std::vector<Var> ins(parts.begin(), parts.end());
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts.front().cols();
    for (const auto& p : parts) {
      if (p.cols() != cols) throw ShapeError("concat: column counts differ");
      rows += p.rows();
    }
  } else {
    rows = parts.front().rows();
    for (const auto& p : parts) {
      if (p.rows() != rows) throw ShapeError("concat: row counts differ");
      cols += p.cols();
    }
  }
  Tensor out(matrix_shape(rows, cols));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < pv.rows(); ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) {
        if (axis == 0) out.at(offset + i, j) = pv.at(i, j);
        else out.at(i, offset + j) = pv.at(i, j);
      }
    offset += axis == 0 ? pv.rows() : pv.cols();
  }
  return graph->record("concat", std::move(out), ins, [ins, axis, cols](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    std::size_t off = 0;
    for (const auto& p : ins) {
      const Tensor& pv = g.value(p.id);
      auto gp = g.grad_sink(p.id);
      if (!gp.empty()) {
        for (std::size_t i = 0; i < pv.rows(); ++i)
          for (std::size_t j = 0; j < pv.cols(); ++j) {
            const std::size_t src = axis == 0 ? (off + i) * cols + j : i * cols + off + j;
            gp[i * pv.cols() + j] += go[src];
          }
      }
      off += axis == 0 ? pv.rows() : pv.cols();
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), 0);
}

Var select_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  if (rows.empty()) throw ShapeError("select_rows: empty selection");
  const std::size_t c = av.cols();
  Tensor out(matrix_shape(rows.size(), c));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) throw ShapeError("select_rows: row index out of range");
    std::copy_n(av.row(rows[i]).begin(), c, out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const Var ins[] = {a};
  return a.graph->record("select_rows", std::move(out), ins, [a, idx, c](Graph& g, std::size_t self) {
    auto ga = g.grad_sink(a.id);
    const auto go = g.grad_of(self);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += go[i * c + j];
  });
}

Var pick(Var a, std::size_t row, std::size_t col) {
  const Tensor& av = a.value();
  if (row >= av.rows() || col >= av.cols()) throw ShapeError("pick: index out of range");
  const std::size_t flat = row * av.cols() + col;
  const Var ins[] = {a};
  return a.graph->record("pick", Tensor::scalar(av[flat]), ins, [a, flat](Graph& g, std::size_t self) {
    g.grad_sink(a.id)[flat] += g.grad_of(self)[0];
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_layout("add", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const Var ins[] = {a, b};
  return a.graph->record("add", std::move(out), ins, [a, b](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    for (auto id : {a.id, b.id}) {
      auto gx = g.grad_sink(id);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_layout("sub", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  const Var ins[] = {a, b};
  return a.graph->record("sub", std::move(out), ins, [a, b](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    auto gb = g.grad_sink(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_layout("mul", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const Var ins[] = {a, b};
  return a.graph->record("mul", std::move(out), ins, [a, b](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    const auto& x = g.value(a.id);
    const auto& y = g.value(b.id);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * y[i];
    auto gb = g.grad_sink(b.id);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * x[i];
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.size() != av.cols()) throw ShapeError("add_row: row length differs from column count");
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = av.at(i, j) + rv[j];
  const Var ins[] = {a, row};
  return a.graph->record("add_row", std::move(out), ins, [a, row, r, c](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    auto gr = g.grad_sink(row.id);
    if (!gr.empty()) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gr[j] += go[i * c + j];
    }
  });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var mul_scalar(Var a, Var s) {
  const Tensor& av = a.value();
  const Tensor& sv = s.value();
  if (sv.size() != 1) throw ShapeError("mul_scalar: scale operand must hold one value");
  const double k = sv[0];
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * k;
  const Var ins[] = {a, s};
  return a.graph->record("mul_scalar", std::move(out), ins, [a, s](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    const auto& x = g.value(a.id);
    const double k = g.value(s.id)[0];
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * k;
    auto gs = g.grad_sink(s.id);
    if (!gs.empty()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += go[i] * x[i];
      gs[0] += acc;
    }
  });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sqrt(Var a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var max_const(Var a, double c) {
  return unary("max_const", a, [c](double x) { return x > c ? x : c; },
               [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto x = av.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out.at(i, j) = std::exp(x[j] - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
  }
  const Var ins[] = {a};
  return a.graph->record("softmax_rows", std::move(out), ins, [a, r, c](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    const auto& y = g.value(self);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * y.at(i, j);
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y.at(i, j) * (go[i * c + j] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const auto x = av.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = x[j] - mx - lz;
  }
  const Var ins[] = {a};
  return a.graph->record("log_softmax_rows", std::move(out), ins, [a, r, c](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    const auto& y = g.value(self);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += go[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[i * c + j] - std::exp(y.at(i, j)) * total;
    }
  });
}

Var l2_normalize(Var a) {
  const Tensor& av = a.value();
  const std::size_t groups = av.rank() == 1 ? 1 : av.rows();
  const std::size_t width = av.size() / groups;
  Tensor out(av.shape());
  std::vector<double> norms(groups);
  for (std::size_t i = 0; i < groups; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < width; ++j) ss += av[i * width + j] * av[i * width + j];
    norms[i] = std::max(std::sqrt(ss), kNormGuard);
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = av[i * width + j] / norms[i];
  }
  const Var ins[] = {a};
  return a.graph->record("l2_normalize", std::move(out), ins,
                         [a, groups, width, norms](Graph& g, std::size_t self) {
                           const auto go = g.grad_of(self);
                           const auto& y = g.value(self);
                           auto ga = g.grad_sink(a.id);
                           for (std::size_t i = 0; i < groups; ++i) {
                             const double n = norms[i];
                             if (n <= kNormGuard) {
                               for (std::size_t j = 0; j < width; ++j) ga[i * width + j] += go[i * width + j] / n;
                               continue;
                             }
                             double dot = 0.0;
                             for (std::size_t j = 0; j < width; ++j) dot += go[i * width + j] * y[i * width + j];
                             for (std::size_t j = 0; j < width; ++j)
                               ga[i * width + j] += (go[i * width + j] - y[i * width + j] * dot) / n;
                           }
                         });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double acc = 0.0;
  for (double v : av.values()) acc += v;
  const Var ins[] = {a};
  return a.graph->record("sum", Tensor::scalar(acc), ins, [a](Graph& g, std::size_t self) {
    const double go = g.grad_of(self)[0];
    for (auto& x : g.grad_sink(a.id)) x += go;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(matrix_shape(1, c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av.at(i, j);
  const Var ins[] = {a};
  return a.graph->record("sum_rows", std::move(out), ins, [a, r, c](Graph& g, std::size_t self) {
    const auto go = g.grad_of(self);
    auto ga = g.grad_sink(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j];
  });
}

Var mean_rows(Var a) { return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows())); }

}  // namespace gcum::ad
