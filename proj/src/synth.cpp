#include "trajnet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace trajnet {

namespace {

using Vec3 = std::array<double, 3>;

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 operator+(Vec3 a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(Vec3 a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 direction(double heading, double pitch) {
  return {std::cos(pitch) * std::cos(heading), std::cos(pitch) * std::sin(heading), std::sin(pitch)};
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(engine_() % (hi - lo + 1));
  }

 private:
  std::mt19937_64 engine_;
};

// Closed-form flight path for the non-reactive maneuvers.
struct Flight {
  ManeuverKind kind = ManeuverKind::straight;
  Vec3 p0{};
  double speed = 250.0;
  double heading = 0.0;
  double pitch = 0.0;
  double turn_rate = 0.0;  // rad/s, level_turn
  double t_mutation = 0.0;
  Vec3 before{}, after{};  // unit directions around the mutation

  Vec3 at(double t) const {
    switch (kind) {
      case ManeuverKind::level_turn: {
        const double r = speed / turn_rate;
        const double psi = heading + turn_rate * t;
        return {p0[0] + r * (std::sin(psi) - std::sin(heading)), p0[1] - r * (std::cos(psi) - std::cos(heading)), p0[2]};
      }
      case ManeuverKind::mutation:
        if (t <= t_mutation) return p0 + (speed * t) * before;
        return p0 + (speed * t_mutation) * before + (speed * (t - t_mutation)) * after;
      default:
        return p0 + (speed * t) * direction(heading, pitch);
    }
  }
};

Flight make_flight(ManeuverKind kind, const Vec3& p0, Rng& rng, std::size_t steps, double dt) {
  Flight f;
  f.kind = kind;
  f.p0 = p0;
  f.speed = rng.uniform(200.0, 300.0);
  f.heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  switch (kind) {
    case ManeuverKind::straight:
      f.pitch = rng.uniform(-5.0, 5.0) * kDeg;
      break;
    case ManeuverKind::level_turn:
      f.turn_rate = rng.sign() * rng.uniform(3.0, 8.0) * kDeg;
      break;
    case ManeuverKind::mutation: {
      f.pitch = rng.uniform(-5.0, 5.0) * kDeg;
      const std::size_t lo = std::max<std::size_t>(1, steps / 4);
      const std::size_t hi = std::max(lo, std::min(steps - 2, 3 * steps / 4));
      f.t_mutation = static_cast<double>(rng.index(lo, hi)) * dt;
      f.before = direction(f.heading, f.pitch);
      const double turn = rng.sign() * rng.uniform(60.0, 120.0) * kDeg;
      const double new_pitch = f.pitch + rng.sign() * 20.0 * kDeg;
      f.after = direction(f.heading + turn, new_pitch);
      break;
    }
    case ManeuverKind::pursuit:
      break;
  }
  return f;
}

// Rotate unit vector `from` toward unit vector `to` by at most max_angle.
Vec3 steer(const Vec3& from, const Vec3& to, double max_angle) {
  const double c = std::clamp(dot(from, to), -1.0, 1.0);
  const double angle = std::acos(c);
  if (angle <= max_angle) return to;
  Vec3 ortho = to - c * from;
  double on = norm(ortho);
  if (on < 1e-12) {  // opposite: turn about the vertical
    ortho = {-from[1], from[0], 0.0};
    on = norm(ortho);
    if (on < 1e-12) {
      ortho = {1.0, 0.0, 0.0};
      on = 1.0;
    }
  }
  ortho = (1.0 / on) * ortho;
  return std::cos(max_angle) * from + std::sin(max_angle) * ortho;
}

}  // namespace

std::string_view kind_name(ManeuverKind kind) {
  switch (kind) {
    case ManeuverKind::straight: return "straight";
    case ManeuverKind::level_turn: return "level_turn";
    case ManeuverKind::mutation: return "mutation";
    case ManeuverKind::pursuit: return "pursuit";
  }
  return "unknown";
}

std::optional<ManeuverKind> parse_kind(std::string_view name) {
  for (auto k : {ManeuverKind::straight, ManeuverKind::level_turn, ManeuverKind::mutation, ManeuverKind::pursuit})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

std::string valid_kinds() { return "straight, level_turn, mutation, pursuit"; }

Scene synth_generate(const SynthScenario& spec) {
  if (spec.fighters < 1) throw ContractError("synth: need at least one fighter");
  if (!(spec.dt_s > 0.0) || !(spec.duration_s >= spec.dt_s)) throw ContractError("synth: duration must cover at least one step");
  if (!(spec.noise_m >= 0.0)) throw ContractError("synth: noise sigma must be non-negative");
  const auto steps = static_cast<std::size_t>(std::floor(spec.duration_s / spec.dt_s + 1e-9)) + 1;
  const std::size_t n = spec.fighters;
  Rng rng(spec.seed);

  const Vec3 center{rng.uniform(-2000.0, 2000.0), rng.uniform(-2000.0, 2000.0), rng.uniform(4000.0, 7000.0)};
  Scene scene;
  scene.t0_s = 0.0;
  scene.dt_s = spec.dt_s;
  scene.label = std::string(kind_name(spec.kind));
  scene.positions = Tensor({n, steps, 3});
  for (std::size_t i = 0; i < n; ++i) scene.fighter_ids.push_back("f" + std::to_string(i));

  auto record = [&](std::size_t i, std::size_t k, const Vec3& p) {
    for (std::size_t a = 0; a < 3; ++a) scene.positions.at(i, k, a) = p[a];
  };

  if (spec.kind != ManeuverKind::pursuit) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 start = center + Vec3{rng.uniform(-2500.0, 2500.0), rng.uniform(-2500.0, 2500.0), rng.uniform(-500.0, 500.0)};
      const Flight f = make_flight(spec.kind, start, rng, steps, spec.dt_s);
      for (std::size_t k = 0; k < steps; ++k) record(i, k, f.at(static_cast<double>(k) * spec.dt_s));
    }
  } else {
    constexpr ManeuverKind leader_kinds[] = {ManeuverKind::straight, ManeuverKind::level_turn, ManeuverKind::mutation};
    const Flight leader = make_flight(leader_kinds[rng.index(0, 2)], center, rng, steps, spec.dt_s);
    struct Chaser {
      Vec3 pos, dir;
      double speed;
    };
    std::vector<Chaser> chasers;
    for (std::size_t i = 1; i < n; ++i) {
      const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double range = rng.uniform(1500.0, 4000.0);
      const Vec3 pos = center + Vec3{range * std::cos(bearing), range * std::sin(bearing), rng.uniform(-300.0, 300.0)};
      const Vec3 los = center - pos;
      const double off = rng.uniform(-60.0, 60.0) * kDeg;
      const double heading = std::atan2(los[1], los[0]) + off;
      chasers.push_back({pos, direction(heading, 0.0), leader.speed * rng.uniform(1.05, 1.2)});
    }
    constexpr int kSubsteps = 20;
    const double h = spec.dt_s / kSubsteps;
    const double max_turn = 15.0 * kDeg * h;
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * spec.dt_s;
      record(0, k, leader.at(t));
      for (std::size_t c = 0; c < chasers.size(); ++c) record(c + 1, k, chasers[c].pos);
      if (k + 1 == steps) break;
      for (int s = 0; s < kSubsteps; ++s) {
        const Vec3 target = leader.at(t + s * h);
        for (auto& ch : chasers) {
          const Vec3 los = target - ch.pos;
          const double range = norm(los);
          if (range > 50.0) ch.dir = steer(ch.dir, (1.0 / range) * los, max_turn);
          ch.pos = ch.pos + (ch.speed * h) * ch.dir;
        }
      }
    }
  }

  if (spec.noise_m > 0.0) {
    std::mt19937_64 engine(spec.seed ^ 0x9E3779B97F4A7C15ull);
    std::normal_distribution<double> jitter(0.0, spec.noise_m);
    for (auto& v : scene.positions.data()) v += jitter(engine);
  }
  return scene;
}

}  // namespace trajnet
