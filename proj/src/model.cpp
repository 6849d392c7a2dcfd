#include "trajnet/model.hpp"

#include <cmath>
#include <set>

#include "trajnet/text.hpp"

namespace trajnet {

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ContractError("model config: " + msg); };
  if (features < 3) fail("m must be at least 3 (x, y, z lead every feature row)");
  if (conv_channels < 1 || hidden < 1 || attn_dim < 1) fail("layer widths must be positive");
  if (t_obs < 3) fail("t_obs must be at least 3 for the width-3 convolution");
  if (pool && t_obs < 4) fail("pooling needs t_obs >= 4");
  if (t_pred < 1) fail("t_pred must be positive");
  grid.validate();
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_pairs() const {
  using text::format_bool;
  using text::format_double;
  return {
      {"m", std::to_string(features)},
      {"conv_channels", std::to_string(conv_channels)},
      {"hidden", std::to_string(hidden)},
      {"attn_dim", std::to_string(attn_dim)},
      {"grid_extent_m", format_double(grid.extent_m)},
      {"grid_cells", std::to_string(grid.cells)},
      {"social_dim", std::to_string(grid.embed_dim)},
      {"pool", format_bool(pool)},
      {"t_obs", std::to_string(t_obs)},
      {"t_pred", std::to_string(t_pred)},
      {"attention", format_bool(attention)},
      {"social", format_bool(social)},
      {"social_per_step", format_bool(social_per_step)},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_pairs(const std::map<std::string, std::string>& pairs) {
  ModelConfig cfg;
  auto size_of = [](const std::string& key, const std::string& v) {
    auto x = text::parse_uint(v);
    if (!x) throw std::invalid_argument("model config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
    return static_cast<std::size_t>(*x);
  };
  auto bool_of = [](const std::string& key, const std::string& v) {
    auto x = text::parse_bool(v);
    if (!x) throw std::invalid_argument("model config: key '" + key + "' expects a boolean, got '" + v + "'");
    return *x;
  };
  for (const auto& [key, v] : pairs) {
    if (key == "m") cfg.features = size_of(key, v);
    else if (key == "conv_channels") cfg.conv_channels = size_of(key, v);
    else if (key == "hidden") cfg.hidden = size_of(key, v);
    else if (key == "attn_dim") cfg.attn_dim = size_of(key, v);
    else if (key == "grid_extent_m") {
      auto x = text::parse_double(v);
      if (!x) throw std::invalid_argument("model config: key 'grid_extent_m' expects a number, got '" + v + "'");
      cfg.grid.extent_m = *x;
    } else if (key == "grid_cells") cfg.grid.cells = size_of(key, v);
    else if (key == "social_dim") cfg.grid.embed_dim = size_of(key, v);
    else if (key == "pool") cfg.pool = bool_of(key, v);
    else if (key == "t_obs") cfg.t_obs = size_of(key, v);
    else if (key == "t_pred") cfg.t_pred = size_of(key, v);
    else if (key == "attention") cfg.attention = bool_of(key, v);
    else if (key == "social") cfg.social = bool_of(key, v);
    else if (key == "social_per_step") cfg.social_per_step = bool_of(key, v);
    else if (key == "seed") cfg.seed = size_of(key, v);
    else throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters

UniformSource::UniformSource(std::uint64_t seed) : engine_(seed) {}

double UniformSource::next(double lo, double hi) {
  const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg) {
  const std::size_t m = cfg.features, c = cfg.conv_channels, d = cfg.hidden, p = cfg.attn_dim;
  const std::size_t dsp = cfg.social_dim(), cells = cfg.grid.cell_count();
  return {
      {"conv.weight", {c, 3 * m}},
      {"conv.bias", {c}},
      {"attn.v", {p}},
      {"attn.W", {p, 2 * d}},
      {"attn.u", {p}},
      {"attn.cell.weight", {4 * d, c + d}},
      {"attn.cell.bias", {4 * d}},
      {"social.weight", {dsp, cells * d}},
      {"social.bias", {dsp}},
      {"merge.weight", {d, d + dsp}},
      {"merge.bias", {d}},
      {"temporal.weight", {4 * d, 2 * d}},
      {"temporal.bias", {4 * d}},
      {"head.weight", {m, d}},
      {"head.bias", {m}},
  };
}

std::vector<Parameter> init_params(const ModelConfig& cfg) {
  cfg.validate();
  UniformSource rng(cfg.seed);
  std::vector<Parameter> params;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    Tensor value(shape);
    const bool is_bias = name.ends_with(".bias");
    if (!is_bias) {
      // attn.v scores a P-vector; attn.u lifts a scalar feature.
      std::size_t fan_in = shape.size() == 2 ? shape[1] : shape[0];
      if (name == "attn.u") fan_in = 1;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : value.data()) v = rng.next(-bound, bound);
    } else if (name == "attn.cell.bias" || name == "temporal.bias") {
      const std::size_t d = shape[0] / 4;
      for (std::size_t i = d; i < 2 * d; ++i) value[i] = 1.0;
    }
    params.emplace_back(name, std::move(value));
  }
  return params;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)), params_(init_params(cfg_)) {}

Model::Model(ModelConfig cfg, std::vector<Parameter> params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size()) {
    throw ShapeError("model: expected " + std::to_string(layout.size()) + " parameters, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].name != layout[i].first || params_[i].value.shape() != layout[i].second) {
      throw ShapeError("model: parameter '" + params_[i].name + "' " + to_string(params_[i].value.shape()) +
                       " does not match expected '" + layout[i].first + "' " + to_string(layout[i].second));
    }
    if (params_[i].grad.shape() != params_[i].value.shape()) params_[i].grad = Tensor(params_[i].value.shape());
  }
}

Parameter& Model::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("model: no parameter named '" + std::string(name) + "'");
}

const Parameter& Model::parameter(std::string_view name) const {
  return const_cast<Model*>(this)->parameter(name);
}

void Model::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

namespace {

template <class BindFn>
BoundParams bind_with(BindFn&& bind) {
  BoundParams b;
  b.conv.kernels = bind("conv.weight");
  b.conv.bias = bind("conv.bias");
  b.conv.activation = UnaryKind::relu;
  b.attn.v = bind("attn.v");
  b.attn.W = bind("attn.W");
  b.attn.u = bind("attn.u");
  b.attn.cell.weight = bind("attn.cell.weight");
  b.attn.cell.bias = bind("attn.cell.bias");
  b.social.weight = bind("social.weight");
  b.social.bias = bind("social.bias");
  b.merge.weight = bind("merge.weight");
  b.merge.bias = bind("merge.bias");
  b.temporal.weight = bind("temporal.weight");
  b.temporal.bias = bind("temporal.bias");
  b.head.weight = bind("head.weight");
  b.head.bias = bind("head.bias");
  return b;
}

}  // namespace

BoundParams Model::bind(Tape& tape) {
  return bind_with([&](std::string_view name) { return tape.parameter(parameter(name)); });
}

BoundParams Model::bind_frozen(Tape& tape) const {
  return bind_with([&](std::string_view name) { return tape.constant(parameter(name).value); });
}

// ---------------------------------------------------------------------------
// Forward pass

WindowBatch WindowBatch::of(std::span<const SceneWindow* const> windows) {
  WindowBatch b;
  for (const auto* w : windows) {
    b.groups.push_back({b.rows, w->fighters()});
    b.row_scale_m.insert(b.row_scale_m.end(), w->fighters(), w->norm.scale_m);
    b.rows += w->fighters();
  }
  return b;
}

std::vector<Var> Model::window_vars(Tape& tape, std::span<const SceneWindow* const> windows) {
  if (windows.empty()) throw ContractError("window_vars: empty batch");
  const std::size_t steps = windows.front()->steps(), m = windows.front()->features();
  std::size_t rows = 0;
  for (const auto* w : windows) {
    if (w->steps() != steps || w->features() != m) {
      throw ShapeError("window_vars: windows disagree on shape " + to_string(windows.front()->positions.shape()) +
                       " vs " + to_string(w->positions.shape()));
    }
    rows += w->fighters();
  }
  std::vector<Var> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor step({rows, m});
    std::size_t r = 0;
    for (const auto* w : windows) {
      for (std::size_t i = 0; i < w->fighters(); ++i, ++r)
        for (std::size_t k = 0; k < m; ++k) step.at(r, k) = w->positions.at(i, t, k);
    }
    out.push_back(tape.constant(std::move(step)));
  }
  return out;
}

Var Model::encode(Tape& tape, const BoundParams& p, std::span<const Var> window, const WindowBatch& batch,
                  EncodeTrace* trace) const {
  const std::size_t n = batch.rows;
  if (window.size() != cfg_.t_obs) {
    throw ShapeError("encode: window has " + std::to_string(window.size()) + " steps, config expects " +
                     std::to_string(cfg_.t_obs));
  }
  for (const auto& w : window) {
    if (w.rows() != n || w.cols() != cfg_.features) {
      throw ShapeError("encode: window step " + to_string(w.shape()) + " does not match [" +
                       std::to_string(n) + "x" + std::to_string(cfg_.features) + "]");
    }
  }
  Var features = conv1d(concat_rows(window), p.conv, n);
  if (cfg_.pool) features = maxpool_time(features, n);
  const std::size_t steps = features.rows() / n;
  Var hidden = attention_encode(features, p.attn, cfg_.attention, n, trace ? &trace->attention : nullptr);

  const std::size_t dsp = cfg_.social_dim();
  Var social;
  if (cfg_.social) {
    auto positions_at = [&](std::size_t obs) {
      Tensor pos({n, 3});
      const auto& v = window[obs].value();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < 3; ++a) pos.at(r, a) = v.at(r, a) * batch.row_scale_m[r];
      return pos;
    };
    auto pooled_at = [&](std::size_t step, std::size_t obs) {
      Var h = slice(hidden, 0, step * n, (step + 1) * n);
      Var grid = social_grid(h, positions_at(obs), batch.groups, cfg_.grid);
      if (trace && step + 1 == steps) trace->social_grid = grid.value();
      return linear(grid, p.social);
    };
    std::vector<Var> per_step;
    if (cfg_.social_per_step) {
      for (std::size_t t = 0; t < steps; ++t) per_step.push_back(pooled_at(t, (t + 1) * cfg_.t_obs / steps - 1));
    } else {
      per_step.assign(steps, pooled_at(steps - 1, cfg_.t_obs - 1));
    }
    social = steps == 1 ? per_step.front() : concat_rows(per_step);
  } else {
    social = tape.constant(Tensor({steps * n, dsp}));
  }

  Var merged = linear(concat(hidden, social, 1), p.merge);
  const std::size_t d = cfg_.hidden;
  LstmState state{tape.constant(Tensor({n, d})), tape.constant(Tensor({n, d}))};
  for (std::size_t t = 0; t < steps; ++t) {
    state = lstm_step(slice(merged, 0, t * n, (t + 1) * n), state.h, state.s, p.temporal);
  }
  return state.h;
}

Var Model::predict_step(Tape& tape, const BoundParams& p, std::span<const Var> window,
                        const WindowBatch& batch) const {
  Var h = encode(tape, p, window, batch);
  return add(window.back(), linear(h, p.head));
}

std::vector<Var> Model::rollout(Tape& tape, const BoundParams& p, std::vector<Var> window,
                                const WindowBatch& batch, std::size_t horizon) const {
  std::vector<Var> preds;
  preds.reserve(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    Var next = predict_step(tape, p, window, batch);
    preds.push_back(next);
    window.erase(window.begin());
    window.push_back(next);
  }
  return preds;
}

void Model::check_window(const SceneWindow& w) const {
  if (w.positions.rank() != 3 || w.steps() != cfg_.t_obs || w.features() != cfg_.features) {
    throw ShapeError("scene window " + to_string(w.positions.shape()) + " does not match config [n x " +
                     std::to_string(cfg_.t_obs) + " x " + std::to_string(cfg_.features) + "]");
  }
}

Tensor Model::encode(const SceneWindow& window, EncodeTrace* trace) const {
  check_window(window);
  Tape tape;
  const SceneWindow* ws[] = {&window};
  const auto batch = WindowBatch::of(ws);
  return encode(tape, bind_frozen(tape), window_vars(tape, ws), batch, trace).value();
}

Tensor Model::predict_step(const SceneWindow& window) const {
  check_window(window);
  Tape tape;
  const SceneWindow* ws[] = {&window};
  const auto batch = WindowBatch::of(ws);
  return predict_step(tape, bind_frozen(tape), window_vars(tape, ws), batch).value();
}

Tensor Model::rollout(const SceneWindow& window) const { return rollout(window, cfg_.t_pred); }

Tensor Model::rollout(const SceneWindow& window, std::size_t horizon) const {
  check_window(window);
  Tape tape;
  const SceneWindow* ws[] = {&window};
  const auto batch = WindowBatch::of(ws);
  const auto preds = rollout(tape, bind_frozen(tape), window_vars(tape, ws), batch, horizon);
  const std::size_t n = window.fighters(), m = cfg_.features;
  Tensor out({n, horizon, m});
  for (std::size_t k = 0; k < horizon; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < m; ++a) out.at(i, k, a) = preds[k].value().at(i, a);
  return out;
}

}  // namespace trajnet
