#include "trajnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace trajnet {

namespace {

std::size_t steps_of(const Var& seq, std::size_t batch, const char* op) {
  if (seq.value().rank() != 2) throw ShapeError(std::string(op) + ": expected [T*N x features], got " + to_string(seq.shape()));
  if (batch == 0 || seq.rows() % batch != 0) {
    throw ShapeError(std::string(op) + ": " + std::to_string(seq.rows()) + " rows do not split into batch " + std::to_string(batch));
  }
  return seq.rows() / batch;
}

// Zero-padded width-3 temporal patches: row t*N + r becomes [x(t-1) | x(t) | x(t+1)].
Var time_patches(const Var& seq, std::size_t steps, std::size_t batch) {
  const std::size_t m = seq.cols();
  const auto& x = seq.value();
  Tensor out({steps * batch, 3 * m});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < batch; ++r) {
      double* row = out.data().data() + (t * batch + r) * 3 * m;
      for (int k = -1; k <= 1; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t) + k;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
        std::copy_n(x.data().data() + (static_cast<std::size_t>(src) * batch + r) * m, m, row + (k + 1) * m);
      }
    }
  }
  return seq.tape()->record(std::move(out), {seq}, "time_patches", [steps, batch, m](Tape& t, const DiffNode& self) {
    auto& parent = t.node(self.parents[0]);
    if (!parent.requires_grad) return;
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t r = 0; r < batch; ++r) {
        const double* g = self.grad.data().data() + (s * batch + r) * 3 * m;
        for (int k = -1; k <= 1; ++k) {
          const auto src = static_cast<std::ptrdiff_t>(s) + k;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
          double* d = parent.grad.data().data() + (static_cast<std::size_t>(src) * batch + r) * m;
          for (std::size_t j = 0; j < m; ++j) d[j] += g[(k + 1) * m + j];
        }
      }
    }
  });
}

// E[r,k] = sum_p v_p tanh(A[r,p] + O[r,k] u_p)
Var additive_scores(const Var& a, const Var& o, const Var& u, const Var& v) {
  const std::size_t n = o.rows(), m = o.cols(), p = u.value().size();
  if (a.rows() != n || a.cols() != p || v.value().size() != p) {
    throw ShapeError("attention scores: inconsistent shapes " + to_string(a.shape()) + ", " +
                     to_string(o.shape()) + ", u " + to_string(u.shape()) + ", v " + to_string(v.shape()));
  }
  Tensor z({n * m, p});
  Tensor e({n, m});
  const double* av = a.value().data().data();
  const double* ov = o.value().data().data();
  const double* uv = u.value().data().data();
  const double* vv = v.value().data().data();
  double* zv = z.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < m; ++k) {
      const double ok = ov[r * m + k];
      double* zrow = zv + (r * m + k) * p;
      double acc = 0.0;
      for (std::size_t q = 0; q < p; ++q) {
        const double zz = std::tanh(av[r * p + q] + ok * uv[q]);
        zrow[q] = zz;
        acc += vv[q] * zz;
      }
      e.at(r, k) = acc;
    }
  }
  return a.tape()->record(std::move(e), {a, o, u, v}, "additive_scores",
                          [n, m, p, z = std::move(z)](Tape& t, const DiffNode& self) {
    auto grad_if = [&](std::size_t slot) -> Tensor* {
      auto& node = t.node(self.parents[slot]);
      return node.requires_grad ? &node.grad : nullptr;
    };
    const auto& ov = t.node(self.parents[1]).value;
    const auto& uv = t.node(self.parents[2]).value;
    const auto& vv = t.node(self.parents[3]).value;
    Tensor* ga = grad_if(0);
    Tensor* go = grad_if(1);
    Tensor* gu = grad_if(2);
    Tensor* gv = grad_if(3);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < m; ++k) {
        const double g = self.grad.at(r, k);
        const double ok = ov.at(r, k);
        double go_acc = 0.0;
        for (std::size_t q = 0; q < p; ++q) {
          const double zz = z.at(r * m + k, q);
          if (gv) (*gv)[q] += g * zz;
          const double dz = g * vv[q] * (1.0 - zz * zz);
          if (ga) ga->at(r, q) += dz;
          if (gu) (*gu)[q] += dz * ok;
          go_acc += dz * uv[q];
        }
        if (go) go->at(r, k) += go_acc;
      }
    }
  });
}

}  // namespace

void SocialGridConfig::validate() const {
  if (!(extent_m > 0.0) || !std::isfinite(extent_m)) throw ContractError("social grid extent must be positive, got " + std::to_string(extent_m));
  if (cells < 1) throw ContractError("social grid needs at least one cell per axis");
}

Var linear(const Var& x, const LinearParams& p) {
  return add_rowwise(matmul_nt(x, p.weight), p.bias);
}

Var conv1d(const Var& seq, const Conv1dParams& p, std::size_t batch) {
  const std::size_t steps = steps_of(seq, batch, "conv1d");
  if (steps < 3) throw ContractError("conv1d: needs at least 3 steps, got " + std::to_string(steps));
  if (p.kernels.cols() != 3 * seq.cols()) {
    throw ShapeError("conv1d: kernels " + to_string(p.kernels.shape()) + " do not match " +
                     std::to_string(seq.cols()) + " input features (expected width 3 x m)");
  }
  Var z = add_rowwise(matmul_nt(time_patches(seq, steps, batch), p.kernels), p.bias);
  return p.activation == UnaryKind::identity ? z : unary(z, p.activation);
}

Var maxpool_time(const Var& features, std::size_t batch) {
  const std::size_t steps = steps_of(features, batch, "maxpool_time");
  if (steps < 2) throw ContractError("maxpool_time: needs at least 2 steps");
  const std::size_t out_steps = steps / 2, c = features.cols();
  const auto& x = features.value();
  Tensor out({out_steps * batch, c});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t t = 0; t < out_steps; ++t) {
    for (std::size_t r = 0; r < batch; ++r) {
      const std::size_t first = (2 * t) * batch + r, second = (2 * t + 1) * batch + r;
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t pick = x.at(second, j) > x.at(first, j) ? second : first;
        out.at(t * batch + r, j) = x.at(pick, j);
        argmax[(t * batch + r) * c + j] = pick * c + j;
      }
    }
  }
  return features.tape()->record(std::move(out), {features}, "maxpool_time",
                                 [argmax = std::move(argmax)](Tape& t, const DiffNode& self) {
    auto& parent = t.node(self.parents[0]);
    if (!parent.requires_grad) return;
    for (std::size_t i = 0; i < argmax.size(); ++i) parent.grad[argmax[i]] += self.grad[i];
  });
}

LstmState lstm_step(const Var& x, const Var& h_prev, const Var& s_prev, const LstmCellParams& p) {
  const std::size_t d = p.hidden();
  if (x.value().rank() != 2 || h_prev.value().rank() != 2 || s_prev.shape() != h_prev.shape() ||
      h_prev.cols() != d || x.cols() != p.input() || x.rows() != h_prev.rows()) {
    throw ShapeError("lstm_step: x " + to_string(x.shape()) + ", h " + to_string(h_prev.shape()) +
                     ", s " + to_string(s_prev.shape()) + " inconsistent with weight " +
                     to_string(p.weight.shape()));
  }
  Var z = add_rowwise(matmul_nt(concat(x, h_prev, 1), p.weight), p.bias);
  Var in = sigmoid(slice(z, 1, 0, d));
  Var forget = sigmoid(slice(z, 1, d, 2 * d));
  Var out = sigmoid(slice(z, 1, 2 * d, 3 * d));
  Var cand = tanh(slice(z, 1, 3 * d, 4 * d));
  Var s = add(mul(forget, s_prev), mul(in, cand));
  Var h = mul(out, tanh(s));
  return {h, s};
}

Var attention_scores(const Var& o, const Var& h_prev, const Var& s_prev, const InputAttentionParams& p) {
  Var state = concat(h_prev, s_prev, 1);
  if (p.W.cols() != state.cols()) {
    throw ShapeError("attention_scores: W " + to_string(p.W.shape()) + " does not match [h, s] " +
                     to_string(state.shape()));
  }
  return additive_scores(matmul_nt(state, p.W), o, p.u, p.v);
}

Var reweight(const Var& o, const Var& alpha) {
  if (o.shape() != alpha.shape()) {
    throw ShapeError("reweight: features " + to_string(o.shape()) + " vs weights " + to_string(alpha.shape()));
  }
  return mul(o, alpha);
}

Var attention_encode(const Var& seq, const InputAttentionParams& p, bool attention_on,
                     std::size_t batch, AttentionTrace* trace) {
  const std::size_t steps = steps_of(seq, batch, "attention_encode");
  Tape& tape = *seq.tape();
  const std::size_t d = p.cell.hidden();
  Var h = tape.constant(Tensor({batch, d}));
  Var s = tape.constant(Tensor({batch, d}));
  std::vector<Var> hiddens;
  hiddens.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Var o = slice(seq, 0, t * batch, (t + 1) * batch);
    if (attention_on) {
      Var alpha = softmax(attention_scores(o, h, s, p));
      if (trace) trace->weights.push_back(alpha.value());
      o = reweight(o, alpha);
    }
    const LstmState next = lstm_step(o, h, s, p.cell);
    h = next.h;
    s = next.s;
    hiddens.push_back(h);
  }
  return steps == 1 ? hiddens.front() : concat_rows(hiddens);
}

std::optional<std::array<std::size_t, 3>> grid_cell(std::span<const double, 3> offset_m,
                                                    const SocialGridConfig& cfg) {
  const double r = cfg.extent_m;
  const double edge = cfg.cell_edge();
  const auto g = static_cast<std::ptrdiff_t>(cfg.cells);
  std::array<std::size_t, 3> cell{};
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const double d = offset_m[axis];
    if (!(d >= -r && d < r)) return std::nullopt;
    auto idx = static_cast<std::ptrdiff_t>(std::floor((d + r) * static_cast<double>(g) / (2.0 * r)));
    idx = std::clamp<std::ptrdiff_t>(idx, 0, g - 1);
    // Snap to the half-open cell [-R + l*edge, -R + (l+1)*edge) when rounding lands one off.
    while (idx > 0 && d < -r + static_cast<double>(idx) * edge) --idx;
    while (idx + 1 < g && d >= -r + static_cast<double>(idx + 1) * edge) ++idx;
    cell[axis] = static_cast<std::size_t>(idx);
  }
  return cell;
}

std::size_t flat_cell(const std::array<std::size_t, 3>& cell, std::size_t g) {
  return (cell[0] * g + cell[1]) * g + cell[2];
}

Var social_grid(const Var& hiddens, const Tensor& positions_m, std::span<const SceneGroup> groups,
                const SocialGridConfig& cfg) {
  cfg.validate();
  const std::size_t n = hiddens.rows(), d = hiddens.cols(), cells = cfg.cell_count();
  if (positions_m.rank() != 2 || positions_m.rows() != n || positions_m.cols() != 3) {
    throw ShapeError("social_grid: positions " + to_string(positions_m.shape()) + " do not match hiddens " +
                     to_string(hiddens.shape()));
  }
  // (focal row, flat cell, neighbour row) in summation order.
  struct Contribution {
    std::size_t focal, cell, neighbour;
  };
  std::vector<Contribution> plan;
  const auto& hv = hiddens.value();
  for (const auto& grp : groups) {
    if (grp.begin + grp.count > n) throw ShapeError("social_grid: scene group exceeds batch");
    for (std::size_t i = grp.begin; i < grp.begin + grp.count; ++i) {
      std::vector<Contribution> local;
      for (std::size_t j = grp.begin; j < grp.begin + grp.count; ++j) {
        if (j == i) continue;
        const std::array<double, 3> delta{positions_m.at(j, 0) - positions_m.at(i, 0),
                                          positions_m.at(j, 1) - positions_m.at(i, 1),
                                          positions_m.at(j, 2) - positions_m.at(i, 2)};
        if (auto c = grid_cell(delta, cfg)) local.push_back({i, flat_cell(*c, cfg.cells), j});
      }
      // Canonical order (cell, then hidden values) so the sum is independent of neighbour order.
      std::sort(local.begin(), local.end(), [&](const Contribution& a, const Contribution& b) {
        if (a.cell != b.cell) return a.cell < b.cell;
        const double* ha = hv.data().data() + a.neighbour * d;
        const double* hb = hv.data().data() + b.neighbour * d;
        return std::lexicographical_compare(ha, ha + d, hb, hb + d);
      });
      plan.insert(plan.end(), local.begin(), local.end());
    }
  }
  Tensor grid({n, cells * d});
  for (const auto& c : plan) {
    double* dst = grid.data().data() + c.focal * cells * d + c.cell * d;
    const double* src = hv.data().data() + c.neighbour * d;
    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
  }
  return hiddens.tape()->record(std::move(grid), {hiddens}, "social_grid",
                                [plan = std::move(plan), cells, d](Tape& t, const DiffNode& self) {
    auto& parent = t.node(self.parents[0]);
    if (!parent.requires_grad) return;
    for (const auto& c : plan) {
      const double* g = self.grad.data().data() + c.focal * cells * d + c.cell * d;
      double* dst = parent.grad.data().data() + c.neighbour * d;
      for (std::size_t k = 0; k < d; ++k) dst[k] += g[k];
    }
  });
}

Var social_pool(const Var& hiddens, const Tensor& positions_m, std::span<const SceneGroup> groups,
                const SocialGridConfig& cfg, const LinearParams& embed) {
  return linear(social_grid(hiddens, positions_m, groups, cfg), embed);
}

}  // namespace trajnet
