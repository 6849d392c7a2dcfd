#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajnet/scene.hpp"
#include "trajnet/tensor.hpp"

namespace trajnet {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Human-readable remarks collected while loading (ignored columns, dropped fighters, ...).
using Notes = std::vector<std::string>;

struct TrackPoint {
  double t_s = 0.0;
  std::string fighter_id;
  double x_m = 0.0, y_m = 0.0, z_m = 0.0;
};

/// One fighter's samples, sorted by time.
struct Track {
  std::string fighter_id;
  std::vector<double> t_s;
  std::vector<std::array<double, 3>> pos_m;

  std::size_t size() const { return t_s.size(); }
};

/// Fighters on a shared uniform time base. positions is [n x T x 3] meters.
struct Scene {
  double t0_s = 0.0;
  double dt_s = 1.0;
  std::vector<std::string> fighter_ids;
  Tensor positions;
  std::string label;

  std::size_t fighters() const { return positions.dim(0); }
  std::size_t steps() const { return positions.dim(1); }
  double time_at(std::size_t step) const { return t0_s + static_cast<double>(step) * dt_s; }
};

// CSV --------------------------------------------------------------------------

inline constexpr const char* kCsvHeader = "time_s,fighter_id,x_m,y_m,z_m";

std::vector<TrackPoint> read_csv(std::istream& in, Notes* notes = nullptr);
std::vector<TrackPoint> load_csv(const std::filesystem::path& path, Notes* notes = nullptr);
void write_csv(const Scene& scene, std::ostream& out);
void write_csv(const Scene& scene, const std::filesystem::path& path);

/// Group points by fighter (first-appearance order) and sort each by time.
/// Repeated timestamps keep the first sample.
std::vector<Track> group_tracks(const std::vector<TrackPoint>& points, Notes* notes = nullptr);

// Conditioning --------------------------------------------------------------------

/// First-order exponential smoothing per coordinate:
/// y[0] = x[0], y[t] = alpha * x[t] + (1 - alpha) * y[t-1]. Requires 0 < alpha <= 1.
Track lowpass(const Track& track, double alpha);
Scene lowpass(const Scene& scene, double alpha);

/// Linear interpolation onto a shared grid of spacing dt over the interval
/// every kept fighter covers. Fighters with fewer than two samples, and
/// fighters whose span leaves no common interval, are dropped with a note.
Scene resample(const std::vector<Track>& tracks, double dt_s, Notes* notes = nullptr);

// Windows --------------------------------------------------------------------------

struct WindowOptions {
  std::size_t t_obs = 8;
  std::size_t t_pred = 8;
  std::size_t stride = 1;
  double scale_m = 1000.0;
};

/// Observed window paired with the steps that immediately follow it. Both
/// are normalized by the centroid of all fighters' last observed points.
struct WindowSample {
  SceneWindow observed;
  Tensor target;  // [n x t_pred x 3] normalized
  std::size_t scene_index = 0;
  std::size_t start = 0;  // first observed step within the scene
  double t0_s = 0.0;
  double dt_s = 1.0;
  std::string label;

  std::size_t span() const { return observed.steps() + target.dim(1); }
  double last_observed_time() const { return t0_s + static_cast<double>(start + observed.steps() - 1) * dt_s; }
  double first_target_time() const { return t0_s + static_cast<double>(start + observed.steps()) * dt_s; }
};

Normalization centroid_normalization(const Tensor& observed_m, double scale_m);

std::vector<WindowSample> make_windows(const Scene& scene, const WindowOptions& opt,
                                       std::size_t scene_index = 0, Notes* notes = nullptr);

/// The last t_obs steps of a scene as a model input.
SceneWindow latest_window(const Scene& scene, std::size_t t_obs, double scale_m);

struct SplitResult {
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
  std::size_t dropped = 0;
};

/// Chronological split per scene: the first train/(train+test) share of each
/// scene's windows (rounded half up) trains, the rest tests. Training windows
/// whose time span overlaps the scene's first test window are dropped.
SplitResult split(std::vector<WindowSample> samples, std::size_t train_parts = 4,
                  std::size_t test_parts = 1);

// Datasets -------------------------------------------------------------------------

struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
};

/// One scene CSV per line, optionally followed by whitespace and a scene-set
/// label. Relative paths resolve against the manifest's directory. '#' starts a comment.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries);

struct PipelineOptions {
  double dt_s = 1.0;
  double lowpass_alpha = 0.3;
  WindowOptions windows{};
};

/// load_csv -> group -> resample -> lowpass.
Scene prepare_scene(const std::filesystem::path& csv, const PipelineOptions& opt, Notes* notes = nullptr);

struct Dataset {
  std::vector<Scene> scenes;
  SplitResult split;
  Notes notes;
};

Dataset load_dataset(const std::filesystem::path& manifest, const PipelineOptions& opt);

/// Write bytes to `path` through a sibling temporary file and rename, so a
/// failed write leaves no partial output.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace trajnet
