#include "trajnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "trajnet/text.hpp"

namespace trajnet {

double l2_loss(const Tensor& pred, const Tensor& truth) {
  require_same_shape(pred, truth, "l2_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s;
}

Var l2_loss(const Var& pred, const Var& truth) {
  require_same_shape(pred.value(), truth.value(), "l2_loss");
  const Var d = sub(pred, truth);
  return sum(mul(d, d));
}

void adam_step(std::span<Parameter> params, AdamState& st, double lr) {
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.value.shape());
      st.v.emplace_back(p.value.shape());
    }
  }
  if (st.m.size() != params.size()) throw ContractError("adam_step: state tracks a different parameter set");
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    require_same_shape(p.value, p.grad, "adam_step");
    require_same_shape(p.value, st.m[k], "adam_step");
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = st.m[k].data();
    auto v = st.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] -= lr * mh / (std::sqrt(vh) + st.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      for (auto& g : p.grad.data()) g *= f;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0)) throw ContractError("train config: lr0 must be non-negative");
  if (!(decay > 0.0 && decay <= 1.0)) throw ContractError("train config: decay must be in (0, 1]");
  if (decay_period < 1) throw ContractError("train config: decay_period must be positive");
  if (batch < 1) throw ContractError("train config: batch must be at least 1");
  if (!(clip_norm >= 0.0)) throw ContractError("train config: clip_norm must be non-negative");
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_period));
}

void write_loss_csv(const LossRecord& record, std::ostream& out) {
  out << kLossCsvHeader << '\n';
  for (const auto& e : record.epochs) {
    out << e.epoch << ',' << text::format_double(e.mean_loss) << ',' << text::format_double(e.lr) << ','
        << text::format_double(e.seconds) << '\n';
  }
}

void write_loss_csv(const LossRecord& record, const std::filesystem::path& path) {
  std::ostringstream s;
  write_loss_csv(record, s);
  write_file_atomic(path, s.str());
}

namespace {

// Predicted and true future steps of a batch, stacked to [horizon*N x m].
std::pair<Var, Var> forward(const Model& model, Tape& tape, const BoundParams& p,
                            std::span<const WindowSample* const> batch) {
  std::vector<const SceneWindow*> windows;
  windows.reserve(batch.size());
  for (const auto* s : batch) windows.push_back(&s->observed);
  const auto wb = WindowBatch::of(windows);
  const std::size_t horizon = model.config().t_pred, m = model.config().features;

  const auto preds = model.rollout(tape, p, Model::window_vars(tape, windows), wb, horizon);
  Tensor truth({horizon * wb.rows, m});
  for (std::size_t k = 0; k < horizon; ++k) {
    std::size_t r = 0;
    for (const auto* s : batch) {
      if (s->target.dim(1) != horizon || s->target.dim(2) != m) {
        throw ShapeError("training target " + to_string(s->target.shape()) + " does not match t_pred=" +
                         std::to_string(horizon) + ", m=" + std::to_string(m));
      }
      for (std::size_t i = 0; i < s->target.dim(0); ++i, ++r)
        for (std::size_t a = 0; a < m; ++a) truth.at(k * wb.rows + r, a) = s->target.at(i, k, a);
    }
  }
  return {concat_rows(preds), tape.constant(std::move(truth))};
}

}  // namespace

double batch_loss_and_grad(Model& model, std::span<const WindowSample* const> batch) {
  Tape tape;
  const auto p = model.bind(tape);
  const auto [pred, truth] = forward(model, tape, p, batch);
  const Var loss = l2_loss(pred, truth);
  tape.backward(loss);
  tape.flush_parameter_grads();
  return loss.value().item();
}

double batch_loss(const Model& model, std::span<const WindowSample* const> batch) {
  Tape tape;
  const auto p = model.bind_frozen(tape);
  const auto [pred, truth] = forward(model, tape, p, batch);
  return l2_loss(pred.value(), truth.value());
}

LossRecord fit(Model& model, std::span<const WindowSample> samples, const TrainConfig& cfg,
               const EpochCallback& on_epoch) {
  if (samples.empty()) throw ContractError("fit: empty training set");
  cfg.validate();
  std::vector<std::size_t> order(samples.size());
  AdamState adam;
  LossRecord record;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0;
    std::vector<const WindowSample*> batch;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch); ++i) batch.push_back(&samples[order[i]]);
      model.zero_grad();
      total += batch_loss_and_grad(model, batch);
      if (cfg.clip_norm > 0.0) clip_grad_norm(model.parameters(), cfg.clip_norm);
      adam_step(model.parameters(), adam, lr);
    }
    model.zero_grad();

    EpochStats e;
    e.epoch = epoch + 1;
    e.mean_loss = total / static_cast<double>(samples.size());
    e.lr = lr;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return record;
}

}  // namespace trajnet
