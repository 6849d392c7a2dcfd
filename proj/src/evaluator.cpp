#include "trajnet/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "trajnet/text.hpp"

namespace trajnet {

namespace {

void check_trajectories(const Tensor& pred, const Tensor& truth, const char* what) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError(std::string(what) + ": prediction " + to_string(pred.shape()) + " vs truth " +
                     to_string(truth.shape()));
  }
  if (pred.rank() != 3 || pred.dim(2) < 3) {
    throw ShapeError(std::string(what) + ": expected [n x T x 3], got " + to_string(pred.shape()));
  }
  if (pred.dim(0) == 0 || pred.dim(1) == 0) throw ShapeError(std::string(what) + ": empty trajectory");
}

double distance(const Tensor& a, const Tensor& b, std::size_t i, std::size_t k) {
  const double dx = a.at(i, k, 0) - b.at(i, k, 0);
  const double dy = a.at(i, k, 1) - b.at(i, k, 1);
  const double dz = a.at(i, k, 2) - b.at(i, k, 2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

double ade(const Tensor& pred, const Tensor& truth) {
  check_trajectories(pred, truth, "ade");
  const std::size_t n = pred.dim(0), T = pred.dim(1);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < T; ++k) s += distance(pred, truth, i, k);
  return s / static_cast<double>(n * T) / 1000.0;
}

double fde(const Tensor& pred, const Tensor& truth) {
  check_trajectories(pred, truth, "fde");
  const std::size_t n = pred.dim(0), last = pred.dim(1) - 1;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += distance(pred, truth, i, last);
  return s / static_cast<double>(n) / 1000.0;
}

std::vector<Tensor> predict_samples(const Model& model, std::span<const WindowSample> samples, std::size_t batch) {
  const std::size_t horizon = model.config().t_pred, m = model.config().features;
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); b += std::max<std::size_t>(batch, 1)) {
    const std::size_t e = std::min(samples.size(), b + std::max<std::size_t>(batch, 1));
    std::vector<const SceneWindow*> windows;
    for (std::size_t s = b; s < e; ++s) windows.push_back(&samples[s].observed);
    Tape tape;
    const auto wb = WindowBatch::of(windows);
    const auto preds = model.rollout(tape, model.bind_frozen(tape), Model::window_vars(tape, windows), wb, horizon);
    std::size_t r = 0;
    for (const auto* w : windows) {
      Tensor norm({w->fighters(), horizon, m});
      for (std::size_t i = 0; i < w->fighters(); ++i, ++r)
        for (std::size_t k = 0; k < horizon; ++k)
          for (std::size_t a = 0; a < m; ++a) norm.at(i, k, a) = preds[k].value().at(r, a);
      out.push_back(w->norm.to_meters(norm));
    }
  }
  return out;
}

Metrics evaluate(const Model& model, std::span<const WindowSample> samples) {
  Metrics r;
  if (samples.empty()) return r;
  const auto preds = predict_samples(model, samples);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Tensor truth = samples[s].observed.norm.to_meters(samples[s].target);
    r.ade_km += ade(preds[s], truth);
    r.fde_km += fde(preds[s], truth);
  }
  r.samples = samples.size();
  r.ade_km /= static_cast<double>(r.samples);
  r.fde_km /= static_cast<double>(r.samples);
  return r;
}

namespace {
volatile double pat_sink = 0.0;
}  // namespace

double measure_pat(const Model& model, std::span<const WindowSample> samples, std::size_t repetitions) {
  if (samples.empty()) throw ContractError("measure_pat: empty sample set");
  if (repetitions < 3) throw ContractError("measure_pat: repetitions must be at least 3");
  double sink = 0.0;
  for (const auto& s : samples) sink += model.rollout(s.observed)[0];  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < repetitions; ++r)
    for (const auto& s : samples) sink += model.rollout(s.observed)[0];
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  pat_sink = sink;  // keeps the rollouts observable
  return ms / static_cast<double>(repetitions * samples.size());
}

// ---------------------------------------------------------------------------
// Ablation

std::string variant_name(bool attention, bool social) {
  if (attention && social) return "full";
  if (attention) return "+A";
  if (social) return "+SP";
  return "plain";
}

std::optional<std::pair<bool, bool>> parse_variant(std::string_view name) {
  for (bool a : {true, false})
    for (bool s : {true, false})
      if (variant_name(a, s) == name) return std::pair{a, s};
  return std::nullopt;
}

std::uint64_t digest(std::span<const WindowSample> samples) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& s : samples) {
    feed(s.observed.positions.values().data(), s.observed.positions.size() * sizeof(double));
    feed(s.target.values().data(), s.target.size() * sizeof(double));
    feed(s.observed.norm.centroid_m.data(), sizeof(double) * 3);
    feed(&s.observed.norm.scale_m, sizeof(double));
  }
  return h;
}

double AblationResult::median(const std::string& variant, const std::string& scene_set,
                              double MetricsRow::*metric) const {
  std::vector<double> xs;
  for (const auto& r : rows)
    if (r.variant == variant && r.scene_set == scene_set) xs.push_back(r.*metric);
  if (xs.empty()) throw ContractError("median: no rows for " + variant + " on " + scene_set);
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

AblationResult run_ablation(std::span<const WindowSample> train, std::span<const ScenarioSet> test_sets,
                            const AblationPlan& plan, const RunLogger& log) {
  if (plan.seeds.empty()) throw ContractError("run_ablation: need at least one seed");
  AblationResult result;
  for (const auto seed : plan.seeds) {
    for (const auto& [attention, social] : plan.variants) {
      ModelConfig mc = plan.model;
      mc.attention = attention;
      mc.social = social;
      mc.seed = seed;
      TrainConfig tc = plan.train;
      tc.seed = seed;
      Model model(mc);
      const auto record = fit(model, train, tc);
      const std::string name = variant_name(attention, social);
      if (log) log(name, seed, record);
      for (const auto& set : test_sets) {
        if (set.samples.empty()) continue;
        const auto m = evaluate(model, set.samples);
        MetricsRow row;
        row.variant = name;
        row.scene_set = set.name;
        row.seed = seed;
        row.ade_km = m.ade_km;
        row.fde_km = m.fde_km;
        row.pat_ms = measure_pat(model, set.samples, plan.pat_repetitions);
        row.input_digest = digest(set.samples);
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.variant << ',' << r.scene_set << ',' << r.seed << ',' << text::format_double(r.ade_km) << ','
        << text::format_double(r.fde_km) << ',' << text::format_double(r.pat_ms) << '\n';
  }
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ostringstream s;
  write_metrics_csv(rows, s);
  write_file_atomic(path, s.str());
}

std::string format_table(std::span<const MetricsRow> rows, bool medians) {
  std::vector<MetricsRow> shown;
  if (medians) {
    // Keep first-appearance order of (variant, scene_set).
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& r : rows) {
      std::pair key{r.variant, r.scene_set};
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    AblationResult all{std::vector<MetricsRow>(rows.begin(), rows.end())};
    for (const auto& [v, s] : keys) {
      MetricsRow m;
      m.variant = v;
      m.scene_set = s;
      m.ade_km = all.median(v, s, &MetricsRow::ade_km);
      m.fde_km = all.median(v, s, &MetricsRow::fde_km);
      m.pat_ms = all.median(v, s, &MetricsRow::pat_ms);
      shown.push_back(m);
    }
  } else {
    shown.assign(rows.begin(), rows.end());
  }

  std::size_t wv = 7, ws = 9;
  for (const auto& r : shown) {
    wv = std::max(wv, r.variant.size());
    ws = std::max(ws, r.scene_set.size());
  }
  std::ostringstream o;
  o << std::left << std::setw(static_cast<int>(wv)) << "variant" << "  " << std::setw(static_cast<int>(ws))
    << "scene_set";
  if (!medians) o << "  " << std::right << std::setw(6) << "seed";
  o << std::right << "  " << std::setw(10) << "ADE(km)" << "  " << std::setw(10) << "FDE(km)" << "  "
    << std::setw(10) << "PAT(ms)" << '\n';
  o << std::fixed;
  for (const auto& r : shown) {
    o << std::left << std::setw(static_cast<int>(wv)) << r.variant << "  " << std::setw(static_cast<int>(ws))
      << r.scene_set;
    if (!medians) o << "  " << std::right << std::setw(6) << r.seed;
    o << std::right << std::setprecision(4) << "  " << std::setw(10) << r.ade_km << "  " << std::setw(10)
      << r.fde_km << "  " << std::setprecision(3) << std::setw(10) << r.pat_ms << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Trajectory dumps

std::string format_trajectories(std::span<const std::string> ids, const Tensor& history, const Tensor& truth,
                                const Tensor& pred) {
  std::ostringstream o;
  o << kTrajectoryCsvHeader << '\n';
  const std::pair<const char*, const Tensor*> roles[] = {{"history", &history}, {"truth", &truth}, {"pred", &pred}};
  for (const auto& [role, t] : roles) {
    if (t->size() == 0) continue;
    if (t->rank() != 3 || t->dim(2) < 3 || t->dim(0) != ids.size()) {
      throw ShapeError(std::string("dump_trajectories: ") + role + " has shape " + to_string(t->shape()) +
                       " for " + std::to_string(ids.size()) + " fighters");
    }
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (const auto& [role, t] : roles) {
      if (t->size() == 0) continue;
      for (std::size_t k = 0; k < t->dim(1); ++k) {
        o << ids[i] << ',' << role << ',' << k << ',' << text::format_double(t->at(i, k, 0)) << ','
          << text::format_double(t->at(i, k, 1)) << ',' << text::format_double(t->at(i, k, 2)) << '\n';
      }
    }
  }
  return o.str();
}

void dump_trajectories(std::span<const std::string> ids, const Tensor& history, const Tensor& truth,
                       const Tensor& pred, const std::filesystem::path& path) {
  write_file_atomic(path, format_trajectories(ids, history, truth, pred));
}

std::vector<TrajectoryRow> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kTrajectoryCsvHeader)
    throw DataError(path.string() + ": expected header " + kTrajectoryCsvHeader);
  std::vector<TrajectoryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    auto bad = [&] { return DataError(path.string() + ":" + std::to_string(lineno) + ": malformed row"); };
    if (f.size() != 6) throw bad();
    TrajectoryRow r;
    r.fighter_id = f[0];
    r.role = f[1];
    const auto step = text::parse_uint(f[2]);
    const auto x = text::parse_double(f[3]), y = text::parse_double(f[4]), z = text::parse_double(f[5]);
    if (!step || !x || !y || !z) throw bad();
    r.step = static_cast<std::size_t>(*step);
    r.x_m = *x;
    r.y_m = *y;
    r.z_m = *z;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace trajnet
