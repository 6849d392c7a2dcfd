#include "trajnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trajnet {

const Tensor& Var::value() const { return tape_->node(id_).value; }
const Tensor& Var::grad() const { return tape_->node(id_).grad; }

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(DiffNode node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  DiffNode n;
  n.value = std::move(value);
  n.op = "constant";
  n.leaf = true;
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  DiffNode n;
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  n.op = "variable";
  n.leaf = true;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param) {
  Var v = variable(param.value);
  nodes_.back().op = "parameter";
  nodes_.back().bound = &param;
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> parents, std::string_view op,
                 std::function<void(Tape&, const DiffNode&)> backward) {
  DiffNode n;
  n.op = op;
  n.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (p.tape() != this) throw ContractError(std::string(op) + ": operand recorded on a different tape");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) {
    n.grad = Tensor(value.shape());
    n.backward = std::move(backward);
  }
  n.value = std::move(value);
  return push(std::move(n));
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ContractError("backward: root belongs to a different tape");
  const auto& r = nodes_[root.id()];
  if (!r.value.is_scalar()) {
    throw ContractError("backward: root must be scalar, got shape " + to_string(r.value.shape()));
  }
  for (auto& n : nodes_) {
    if (n.requires_grad && !n.leaf) n.grad.fill(0.0);
  }
  if (!r.requires_grad) return;
  nodes_[root.id()].grad[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.fill(0.0);
  }
}

void Tape::flush_parameter_grads() {
  for (auto& n : nodes_) {
    if (n.bound != nullptr) {
      n.bound->grad += n.grad;
      n.grad.fill(0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  // Mostly-zero rows (the social grid) only visit their nonzero entries.
  std::vector<std::size_t> nz;
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * n;
    nz.clear();
    for (std::size_t p = 0; p < k; ++p)
      if (ai[p] != 0.0) nz.push_back(p);
    if (nz.size() * 4 < k) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b.data() + j * k;
        double s = 0.0;
        for (std::size_t p : nz) s += ai[p] * bj[p];
        ci[j] += s;
      }
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    const double* bi = b.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw ContractError("operation on an unbound Var");
  return *v.tape();
}

// Gradient buffer of parent `slot`, or null when that parent needs none.
Tensor* parent_grad(Tape& tape, const DiffNode& self, std::size_t slot) {
  auto& p = tape.node(self.parents[slot]);
  return p.requires_grad ? &p.grad : nullptr;
}

const Tensor& parent_value(Tape& tape, const DiffNode& self, std::size_t slot) {
  return tape.node(self.parents[slot]).value;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(v.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return tape_of(a).record(std::move(out), {a, b}, "matmul", [m, k, n](Tape& t, const DiffNode& self) {
    if (auto* ga = parent_grad(t, self, 0)) kernels::gemm_nt(self.grad.data(), parent_value(t, self, 1).data(), ga->data(), m, n, k);
    if (auto* gb = parent_grad(t, self, 1)) kernels::gemm_tn(parent_value(t, self, 0).data(), self.grad.data(), gb->data(), m, k, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_nt: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()) + "^T");
  }
  Tensor out({m, n});
  kernels::gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  return tape_of(a).record(std::move(out), {a, b}, "matmul_nt", [m, k, n](Tape& t, const DiffNode& self) {
    if (auto* ga = parent_grad(t, self, 0)) kernels::gemm_nn(self.grad.data(), parent_value(t, self, 1).data(), ga->data(), m, n, k);
    if (auto* gb = parent_grad(t, self, 1)) kernels::gemm_tn(self.grad.data(), parent_value(t, self, 0).data(), gb->data(), m, n, k);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return tape_of(a).record(std::move(out), {a, b}, "add", [](Tape& t, const DiffNode& self) {
    if (auto* ga = parent_grad(t, self, 0)) *ga += self.grad;
    if (auto* gb = parent_grad(t, self, 1)) *gb += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape_of(a).record(std::move(out), {a, b}, "sub", [](Tape& t, const DiffNode& self) {
    if (auto* ga = parent_grad(t, self, 0)) *ga += self.grad;
    if (auto* gb = parent_grad(t, self, 1)) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record(std::move(out), {a, b}, "mul", [](Tape& t, const DiffNode& self) {
    const auto& av = parent_value(t, self, 0);
    const auto& bv = parent_value(t, self, 1);
    if (auto* ga = parent_grad(t, self, 0)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    }
    if (auto* gb = parent_grad(t, self, 1)) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return tape_of(a).record(std::move(out), {a}, "scale", [factor](Tape& t, const DiffNode& self) {
    if (auto* ga = parent_grad(t, self, 0)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * factor;
    }
  });
}

Var add_rowwise(const Var& x, const Var& bias) {
  require_rank(x, 2, "add_rowwise");
  require_rank(bias, 1, "add_rowwise");
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (bias.shape()[0] != c) {
    throw ShapeError("add_rowwise: bias " + to_string(bias.shape()) + " does not match rows of " +
                     to_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) += bias.value()[j];
  return tape_of(x).record(std::move(out), {x, bias}, "add_rowwise", [n, c](Tape& t, const DiffNode& self) {
    if (auto* gx = parent_grad(t, self, 0)) *gx += self.grad;
    if (auto* gb = parent_grad(t, self, 1)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += self.grad.at(r, j);
    }
  });
}

double apply_unary(UnaryKind kind, double x) {
  switch (kind) {
    case UnaryKind::identity: return x;
    case UnaryKind::tanh: return std::tanh(x);
    case UnaryKind::sigmoid: return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case UnaryKind::relu: return x > 0.0 ? x : 0.0;
    case UnaryKind::exp: return std::exp(x);
  }
  return x;
}

namespace {

// Local derivative expressed through input x and output y.
double unary_derivative(UnaryKind kind, double x, double y) {
  switch (kind) {
    case UnaryKind::identity: return 1.0;
    case UnaryKind::tanh: return 1.0 - y * y;
    case UnaryKind::sigmoid: return y * (1.0 - y);
    case UnaryKind::relu: return x > 0.0 ? 1.0 : 0.0;
    case UnaryKind::exp: return y;
  }
  return 1.0;
}

std::string_view unary_name(UnaryKind kind) {
  switch (kind) {
    case UnaryKind::identity: return "identity";
    case UnaryKind::tanh: return "tanh";
    case UnaryKind::sigmoid: return "sigmoid";
    case UnaryKind::relu: return "relu";
    case UnaryKind::exp: return "exp";
  }
  return "unary";
}

}  // namespace

Var unary(const Var& x, UnaryKind kind) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = apply_unary(kind, v);
  return tape_of(x).record(std::move(out), {x}, unary_name(kind), [kind](Tape& t, const DiffNode& self) {
    auto* gx = parent_grad(t, self, 0);
    if (!gx) return;
    const auto& xv = parent_value(t, self, 0);
    for (std::size_t i = 0; i < gx->size(); ++i)
      (*gx)[i] += self.grad[i] * unary_derivative(kind, xv[i], self.value[i]);
  });
}

Var softmax(const Var& x) {
  const auto& xv = x.value();
  if (xv.rank() > 2) throw ShapeError("softmax: expected rank 1 or 2, got " + to_string(xv.shape()));
  const std::size_t n = xv.rank() == 1 ? 1 : xv.shape()[0];
  const std::size_t m = xv.rank() == 1 ? xv.size() : xv.shape()[1];
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = xv.data().data() + r * m;
    double* o = out.data().data() + r * m;
    const double mx = *std::max_element(in, in + m);
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k) z += (o[k] = std::exp(in[k] - mx));
    for (std::size_t k = 0; k < m; ++k) o[k] /= z;
  }
  return tape_of(x).record(std::move(out), {x}, "softmax", [n, m](Tape& t, const DiffNode& self) {
    auto* gx = parent_grad(t, self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < n; ++r) {
      const double* s = self.value.data().data() + r * m;
      const double* g = self.grad.data().data() + r * m;
      double inner = 0.0;
      for (std::size_t k = 0; k < m; ++k) inner += g[k] * s[k];
      double* d = gx->data().data() + r * m;
      for (std::size_t k = 0; k < m; ++k) d[k] += s[k] * (g[k] - inner);
    }
  });
}

Var concat(const Var& a, const Var& b, std::size_t axis) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto mismatch = [&] {
    return ShapeError("concat(axis " + std::to_string(axis) + "): shapes " + to_string(av.shape()) +
                      " and " + to_string(bv.shape()) + " disagree off the concatenation axis");
  };
  if (av.rank() != bv.rank() || av.rank() > 2 || axis >= av.rank()) throw mismatch();
  if (av.rank() == 2 && av.shape()[1 - axis] != bv.shape()[1 - axis]) throw mismatch();

  // View both operands as [outer x inner] blocks joined along inner.
  const std::size_t outer = (av.rank() == 2 && axis == 1) ? av.shape()[0] : 1;
  const std::size_t ia = av.size() / outer, ib = bv.size() / outer;
  Shape shape = av.shape();
  shape[axis] += bv.shape()[axis];
  Tensor out(shape);
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(av.data().data() + r * ia, ia, out.data().data() + r * (ia + ib));
    std::copy_n(bv.data().data() + r * ib, ib, out.data().data() + r * (ia + ib) + ia);
  }
  return tape_of(a).record(std::move(out), {a, b}, "concat", [outer, ia, ib](Tape& t, const DiffNode& self) {
    auto* ga = parent_grad(t, self, 0);
    auto* gb = parent_grad(t, self, 1);
    for (std::size_t r = 0; r < outer; ++r) {
      const double* g = self.grad.data().data() + r * (ia + ib);
      if (ga) for (std::size_t j = 0; j < ia; ++j) (*ga)[r * ia + j] += g[j];
      if (gb) for (std::size_t j = 0; j < ib; ++j) (*gb)[r * ib + j] += g[ia + j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.shape()[1] != cols) {
      throw ShapeError("concat_rows: column mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    }
    rows += p.shape()[0];
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.value().size();
  }
  return tape_of(parts[0]).record(std::move(out), {parts.begin(), parts.end()}, "concat_rows",
                                  [offsets](Tape& t, const DiffNode& self) {
    for (std::size_t s = 0; s < offsets.size(); ++s) {
      if (auto* g = parent_grad(t, self, s)) {
        for (std::size_t j = 0; j < g->size(); ++j) (*g)[j] += self.grad[offsets[s] + j];
      }
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  if (xv.rank() > 2 || axis >= xv.rank() || begin >= end || end > xv.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " invalid for " + to_string(xv.shape()));
  }
  const std::size_t outer = (xv.rank() == 2 && axis == 1) ? xv.shape()[0] : 1;
  const std::size_t stride = xv.size() / outer;
  const std::size_t unit = (xv.rank() == 2 && axis == 0) ? xv.shape()[1] : 1;
  const std::size_t lo = begin * unit, width = (end - begin) * unit;
  Shape shape = xv.shape();
  shape[axis] = end - begin;
  Tensor out(shape);
  for (std::size_t r = 0; r < outer; ++r)
    std::copy_n(xv.data().data() + r * stride + lo, width, out.data().data() + r * width);
  return tape_of(x).record(std::move(out), {x}, "slice", [outer, stride, lo, width](Tape& t, const DiffNode& self) {
    auto* gx = parent_grad(t, self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < outer; ++r)
      for (std::size_t j = 0; j < width; ++j) (*gx)[r * stride + lo + j] += self.grad[r * width + j];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record(Tensor::scalar(s), {x}, "sum", [](Tape& t, const DiffNode& self) {
    auto* gx = parent_grad(t, self, 0);
    if (!gx) return;
    const double g = self.grad[0];
    for (auto& v : gx->data()) v += g;
  });
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

}  // namespace trajnet
