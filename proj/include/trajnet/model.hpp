#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajnet/autodiff.hpp"
#include "trajnet/layers.hpp"
#include "trajnet/scene.hpp"

namespace trajnet {

struct ModelConfig {
  std::size_t features = 3;
  std::size_t conv_channels = 16;
  std::size_t hidden = 32;
  std::size_t attn_dim = 16;
  SocialGridConfig grid{};
  bool pool = true;
  std::size_t t_obs = 8;
  std::size_t t_pred = 8;
  bool attention = true;
  bool social = true;
  // Pool neighbours at every merge step instead of once from the final step.
  bool social_per_step = false;
  std::uint64_t seed = 1;

  std::size_t social_dim() const { return grid.embed_dim == 0 ? hidden : grid.embed_dim; }
  std::size_t encoder_steps() const { return pool ? t_obs / 2 : t_obs; }
  void validate() const;

  /// Ordered key=value echo, as written into checkpoints.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  static ModelConfig from_pairs(const std::map<std::string, std::string>& pairs);

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_pairs() == b.to_pairs(); }
};

/// Parameters bound on one tape.
struct BoundParams {
  Conv1dParams conv;
  InputAttentionParams attn;
  LinearParams social;
  LinearParams merge;
  LstmCellParams temporal;
  LinearParams head;
};

/// Intermediate values captured during a forward pass.
struct EncodeTrace {
  Tensor social_grid;                 // [N x G^3*D] (final-step pooling)
  AttentionTrace attention;           // per encoder step
};

/// A batch of scene windows flattened into fighter rows.
struct WindowBatch {
  std::vector<SceneGroup> groups;     // one per window
  std::vector<double> row_scale_m;    // normalization scale of each row's window
  std::size_t rows = 0;

  static WindowBatch of(std::span<const SceneWindow* const> windows);
};

/// Enhanced CNN-LSTM trajectory predictor.
///
/// Per fighter: temporal convolution -> optional max pooling -> input
/// attention LSTM. In parallel, neighbour hidden states are pooled on a
/// relative-position lattice. Both streams are merged per step, fed to a
/// temporal LSTM, and a linear head emits the next displacement. The decoder
/// rolls this forward one step at a time over a sliding window.
class Model {
 public:
  explicit Model(ModelConfig cfg);
  Model(ModelConfig cfg, std::vector<Parameter> params);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  void zero_grad();

  /// Bind as tape variables whose gradients flush into the parameters.
  BoundParams bind(Tape& tape);
  /// Bind as constants (inference; parameters are not touched).
  BoundParams bind_frozen(Tape& tape) const;

  // Taped building blocks over a batch. `window` holds t_obs entries of
  // [N x m] normalized positions, oldest first.
  Var encode(Tape& tape, const BoundParams& p, std::span<const Var> window, const WindowBatch& batch,
             EncodeTrace* trace = nullptr) const;
  Var predict_step(Tape& tape, const BoundParams& p, std::span<const Var> window,
                   const WindowBatch& batch) const;
  /// Returns `horizon` predicted steps of [N x m], each fed back into the window.
  std::vector<Var> rollout(Tape& tape, const BoundParams& p, std::vector<Var> window,
                           const WindowBatch& batch, std::size_t horizon) const;

  /// Observed windows as tape constants, one [N x m] per step.
  static std::vector<Var> window_vars(Tape& tape, std::span<const SceneWindow* const> windows);

  // Tape-free conveniences for one scene; results are normalized coordinates.
  Tensor encode(const SceneWindow& window, EncodeTrace* trace = nullptr) const;  // [n x D]
  Tensor predict_step(const SceneWindow& window) const;                          // [n x m]
  Tensor rollout(const SceneWindow& window) const;                               // [n x t_pred x m]
  Tensor rollout(const SceneWindow& window, std::size_t horizon) const;

 private:
  void check_window(const SceneWindow& window) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
};

/// Expected parameter names and shapes for a configuration, in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& cfg);

/// Deterministic initialization: weights uniform in +-1/sqrt(fan_in), biases
/// zero, forget-gate biases one.
std::vector<Parameter> init_params(const ModelConfig& cfg);

/// Seeded uniform draws in [lo, hi) from raw mt19937_64 output (53-bit
/// mantissa), independent of the library's distribution implementations.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed);
  double next(double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

// Checkpoints ---------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

/// Serialized form, shared by save/load and byte-level comparisons.
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);

}  // namespace trajnet
