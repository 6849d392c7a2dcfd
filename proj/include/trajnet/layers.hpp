#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "trajnet/autodiff.hpp"

namespace trajnet {

// Sequences passed between layers are row-batched and time-major: a batch of
// N sequences of length T is a [T*N x features] matrix whose row t*N + r is
// step t of sequence r. A single fighter is the N = 1 case.

/// Temporal convolution. Row c of `kernels` is a 3 x m kernel flattened as
/// [w(t-1) | w(t) | w(t+1)].
struct Conv1dParams {
  Var kernels;  // [C x 3m]
  Var bias;     // [C]
  UnaryKind activation = UnaryKind::relu;
};

/// One LSTM cell. Gate rows are stacked input, forget, output, candidate;
/// columns are [x | h_prev].
struct LstmCellParams {
  Var weight;  // [4D x (d_in + D)]
  Var bias;    // [4D]

  std::size_t hidden() const { return weight.shape()[0] / 4; }
  std::size_t input() const { return weight.shape()[1] - hidden(); }
};

struct LstmState {
  Var h;
  Var s;
};

/// Encoder-side input attention: e_k = v · tanh(W [h, s] + u * o_k) scored per
/// feature, feeding `cell`.
struct InputAttentionParams {
  Var v;  // [P]
  Var W;  // [P x 2D]
  Var u;  // [P]
  LstmCellParams cell;
};

struct LinearParams {
  Var weight;  // [out x in]
  Var bias;    // [out]
};

struct SocialGridConfig {
  double extent_m = 5000.0;  // half-width R of the cubic neighbourhood
  std::size_t cells = 4;     // G cells per axis
  std::size_t embed_dim = 0; // D_sp; 0 means "same as the hidden size"

  double cell_edge() const { return 2.0 * extent_m / static_cast<double>(cells); }
  std::size_t cell_count() const { return cells * cells * cells; }
  void validate() const;
};

/// Rows [begin, begin + count) of a fighter batch that share one scene.
struct SceneGroup {
  std::size_t begin = 0;
  std::size_t count = 0;
};

Var linear(const Var& x, const LinearParams& p);

Var conv1d(const Var& seq, const Conv1dParams& p, std::size_t batch = 1);

/// Non-overlapping temporal max over step pairs (size 2, stride 2). The
/// gradient goes to the first maximal element of each pair; an odd final
/// step is dropped.
Var maxpool_time(const Var& features, std::size_t batch = 1);

LstmState lstm_step(const Var& x, const Var& h_prev, const Var& s_prev, const LstmCellParams& p);

Var attention_scores(const Var& o, const Var& h_prev, const Var& s_prev,
                     const InputAttentionParams& p);

Var reweight(const Var& o, const Var& alpha);

/// Per-step attention weights captured by attention_encode, one [N x m]
/// tensor per step.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

/// Run the attention cell over a time-major sequence and return the hidden
/// state of every step ([T*N x D]). With `attention_on` false the raw
/// features enter the cell unweighted.
Var attention_encode(const Var& seq, const InputAttentionParams& p, bool attention_on,
                     std::size_t batch = 1, AttentionTrace* trace = nullptr);

/// Lattice cell [l, m, n] of a relative offset in meters, or nothing when the
/// offset falls outside the half-open cube [-R, R)^3.
std::optional<std::array<std::size_t, 3>> grid_cell(std::span<const double, 3> offset_m,
                                                    const SocialGridConfig& cfg);
std::size_t flat_cell(const std::array<std::size_t, 3>& cell, std::size_t cells_per_axis);

/// Occupancy grid of neighbour hidden states around every fighter
/// ([N x G^3*D], cell-major). Positions are meters ([N x 3]); fighters only
/// see neighbours in their own group and never themselves.
Var social_grid(const Var& hiddens, const Tensor& positions_m, std::span<const SceneGroup> groups,
                const SocialGridConfig& cfg);

/// social_grid followed by the embedding map.
Var social_pool(const Var& hiddens, const Tensor& positions_m, std::span<const SceneGroup> groups,
                const SocialGridConfig& cfg, const LinearParams& embed);

}  // namespace trajnet
