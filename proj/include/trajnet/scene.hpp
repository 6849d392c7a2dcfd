#pragma once

#include <array>
#include <cstddef>

#include "trajnet/tensor.hpp"

namespace trajnet {

/// Maps meters to network coordinates: (p - centroid) / scale.
struct Normalization {
  std::array<double, 3> centroid_m{0.0, 0.0, 0.0};
  double scale_m = 1000.0;

  /// Converts a [... x 3] tensor of normalized coordinates to meters.
  Tensor to_meters(const Tensor& normalized) const;
  Tensor to_normalized(const Tensor& meters) const;

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Observed positions of every fighter in one scene, aligned on a shared
/// time base: [n x T x 3] normalized coordinates plus the record that maps
/// them back to meters.
struct SceneWindow {
  Tensor positions;
  Normalization norm;

  std::size_t fighters() const { return positions.dim(0); }
  std::size_t steps() const { return positions.dim(1); }
  std::size_t features() const { return positions.dim(2); }
};

}  // namespace trajnet
