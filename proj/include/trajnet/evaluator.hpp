#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajnet/data.hpp"
#include "trajnet/model.hpp"
#include "trajnet/trainer.hpp"

namespace trajnet {

// Metrics over [n x T x 3] trajectories in meters, reported in kilometers.
double ade(const Tensor& pred_m, const Tensor& truth_m);
double fde(const Tensor& pred_m, const Tensor& truth_m);

/// Rolled-out predictions for each sample, in meters ([n x t_pred x 3]).
/// Windows are evaluated in batches on one tape; results match Model::rollout.
std::vector<Tensor> predict_samples(const Model& model, std::span<const WindowSample> samples,
                                    std::size_t batch = 64);

struct Metrics {
  double ade_km = 0.0;
  double fde_km = 0.0;
  std::size_t samples = 0;
};

/// Per-sample ADE/FDE averaged over samples.
Metrics evaluate(const Model& model, std::span<const WindowSample> samples);

/// Mean milliseconds per single-window rollout, after one untimed warm-up pass.
double measure_pat(const Model& model, std::span<const WindowSample> samples, std::size_t repetitions = 3);

// Ablation ------------------------------------------------------------------------

/// "full", "+A" (attention only), "+SP" (social pooling only), "plain".
std::string variant_name(bool attention, bool social);
/// Inverse of variant_name.
std::optional<std::pair<bool, bool>> parse_variant(std::string_view name);

struct ScenarioSet {
  std::string name;
  std::vector<WindowSample> samples;
};

struct MetricsRow {
  std::string variant;
  std::string scene_set;
  std::uint64_t seed = 0;
  double ade_km = 0.0;
  double fde_km = 0.0;
  double pat_ms = 0.0;
  std::uint64_t input_digest = 0;  // hash of the evaluated inputs
};

struct AblationResult {
  std::vector<MetricsRow> rows;

  /// Median over seeds of one metric for (variant, scene_set).
  double median(const std::string& variant, const std::string& scene_set, double MetricsRow::*metric) const;
};

struct AblationPlan {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1};
  std::size_t pat_repetitions = 3;
  // {attention, social} pairs to train; defaults to full, +A, +SP, plain.
  std::vector<std::pair<bool, bool>> variants{{true, true}, {true, false}, {false, true}, {false, false}};
};

using RunLogger = std::function<void(const std::string& variant, std::uint64_t seed, const LossRecord&)>;

/// Trains every {attention, social} combination per seed on the same samples
/// in the same order and evaluates each on every scenario set. The seed drives
/// both initialization and shuffling.
AblationResult run_ablation(std::span<const WindowSample> train, std::span<const ScenarioSet> test_sets,
                            const AblationPlan& plan, const RunLogger& log = {});

inline constexpr const char* kMetricsCsvHeader = "variant,scene_set,seed,ade_km,fde_km,pat_ms";

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out);
void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);
/// Aligned text table. With `medians`, rows collapse to per-variant medians over seeds.
std::string format_table(std::span<const MetricsRow> rows, bool medians = false);

/// FNV-1a over the raw bytes of the samples' inputs and targets.
std::uint64_t digest(std::span<const WindowSample> samples);

// Trajectory dumps ------------------------------------------------------------------

inline constexpr const char* kTrajectoryCsvHeader = "fighter_id,role,step,x_m,y_m,z_m";

struct TrajectoryRow {
  std::string fighter_id;
  std::string role;  // history, truth, pred
  std::size_t step = 0;
  double x_m = 0.0, y_m = 0.0, z_m = 0.0;
};

/// history/truth/pred are [n x T x >=3] meters; an empty tensor omits that role.
std::string format_trajectories(std::span<const std::string> fighter_ids, const Tensor& history,
                                const Tensor& truth, const Tensor& pred);
void dump_trajectories(std::span<const std::string> fighter_ids, const Tensor& history, const Tensor& truth,
                       const Tensor& pred, const std::filesystem::path& path);
std::vector<TrajectoryRow> load_trajectories(const std::filesystem::path& path);

}  // namespace trajnet
