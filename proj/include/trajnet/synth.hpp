#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "trajnet/data.hpp"

namespace trajnet {

enum class ManeuverKind { straight, level_turn, mutation, pursuit };

std::string_view kind_name(ManeuverKind kind);
std::optional<ManeuverKind> parse_kind(std::string_view name);
/// "straight, level_turn, mutation, pursuit"
std::string valid_kinds();

/// Synthetic multi-fighter engagement.
///
/// straight: constant velocity. level_turn: constant speed and turn rate at
/// fixed altitude. mutation: straight, then one abrupt 60-120 degree heading
/// change plus a 20 degree pitch change at a random interior step, then
/// straight. pursuit: fighter 0 flies one of the other kinds while the rest
/// chase it by pure pursuit with a bounded turn rate.
struct SynthScenario {
  ManeuverKind kind = ManeuverKind::straight;
  std::size_t fighters = 2;
  double duration_s = 60.0;
  double noise_m = 0.0;  // Gaussian position jitter sigma
  std::uint64_t seed = 1;
  double dt_s = 1.0;
};

/// Fully determined by the scenario (same seed, same scene).
Scene synth_generate(const SynthScenario& spec);

}  // namespace trajnet
