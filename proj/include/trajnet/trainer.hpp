#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trajnet/autodiff.hpp"
#include "trajnet/data.hpp"
#include "trajnet/model.hpp"

namespace trajnet {

/// Sum of squared coordinate differences (no averaging).
double l2_loss(const Tensor& pred, const Tensor& truth);
Var l2_loss(const Var& pred, const Var& truth);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m, v;  // lazily sized on the first step
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update from each parameter's accumulated grad.
void adam_step(std::span<Parameter> params, AdamState& state, double lr);

/// Rescale all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

struct TrainConfig {
  double lr0 = 1e-4;
  double decay = 0.5;
  std::size_t decay_period = 20;  // epochs
  std::size_t batch = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // 0 disables

  void validate() const;
};

/// lr0 * decay^floor(epoch / period)
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;  // per window
  double lr = 0.0;
  double seconds = 0.0;
};

struct LossRecord {
  std::vector<EpochStats> epochs;

  std::size_t size() const { return epochs.size(); }
  const EpochStats& back() const { return epochs.back(); }
};

inline constexpr const char* kLossCsvHeader = "epoch,mean_loss,lr,seconds";

void write_loss_csv(const LossRecord& record, std::ostream& out);
void write_loss_csv(const LossRecord& record, const std::filesystem::path& path);

/// Summed loss and gradients for one batch of windows; gradients accumulate
/// into the model's parameters.
double batch_loss_and_grad(Model& model, std::span<const WindowSample* const> batch);
/// Loss only, parameters untouched.
double batch_loss(const Model& model, std::span<const WindowSample* const> batch);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch training. Each epoch reshuffles the samples with a generator
/// seeded from (seed, epoch), so a run is reproducible bit for bit.
LossRecord fit(Model& model, std::span<const WindowSample> samples, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

}  // namespace trajnet
