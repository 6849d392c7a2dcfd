#include "trajnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "trajnet/text.hpp"

namespace trajnet {

// ---------------------------------------------------------------------------
// Normalization

Tensor Normalization::to_meters(const Tensor& normalized) const {
  Tensor out = normalized;
  const std::size_t last = out.shape().back();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t axis = i % last;
    if (axis < 3) out[i] = out[i] * scale_m + centroid_m[axis];
  }
  return out;
}

Tensor Normalization::to_normalized(const Tensor& meters) const {
  Tensor out = meters;
  const std::size_t last = out.shape().back();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t axis = i % last;
    if (axis < 3) out[i] = (out[i] - centroid_m[axis]) / scale_m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::vector<TrackPoint> read_csv(std::istream& in, Notes* notes) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line).empty()) throw DataError("csv: empty file (header row required)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = text::split(text::trim(line), ',');
  const std::array<std::string_view, 5> required{"time_s", "fighter_id", "x_m", "y_m", "z_m"};
  std::array<std::size_t, 5> column{};
  for (std::size_t r = 0; r < required.size(); ++r) {
    auto it = std::find_if(header.begin(), header.end(), [&](auto h) { return text::trim(h) == required[r]; });
    if (it == header.end()) throw DataError("csv: missing required column '" + std::string(required[r]) + "'");
    column[r] = static_cast<std::size_t>(it - header.begin());
  }
  if (notes) {
    for (auto h : header) {
      h = text::trim(h);
      if (std::find(required.begin(), required.end(), h) == required.end())
        notes->push_back("csv: ignoring column '" + std::string(h) + "'");
    }
  }

  std::vector<TrackPoint> points;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const auto cells = text::split(line, ',');
    if (cells.size() < header.size()) {
      throw DataError("csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    auto number = [&](std::size_t r) {
      auto cell = text::trim(cells[column[r]]);
      auto v = text::parse_double(cell);
      if (!v || !std::isfinite(*v)) {
        throw DataError("csv: row " + std::to_string(row) + ", column '" + std::string(required[r]) +
                        "': non-numeric value '" + std::string(cell) + "'");
      }
      return *v;
    };
    TrackPoint p;
    p.t_s = number(0);
    p.fighter_id = std::string(text::trim(cells[column[1]]));
    if (p.fighter_id.empty()) throw DataError("csv: row " + std::to_string(row) + ": empty fighter_id");
    p.x_m = number(2);
    p.y_m = number(3);
    p.z_m = number(4);
    points.push_back(std::move(p));
  }
  if (points.empty()) throw DataError("csv: no data rows");
  return points;
}

std::vector<TrackPoint> load_csv(const std::filesystem::path& path, Notes* notes) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open " + path.string());
  return read_csv(in, notes);
}

void write_csv(const Scene& scene, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (std::size_t t = 0; t < scene.steps(); ++t) {
    for (std::size_t i = 0; i < scene.fighters(); ++i) {
      out << text::format_double(scene.time_at(t)) << ',' << scene.fighter_ids[i];
      for (std::size_t a = 0; a < 3; ++a) out << ',' << text::format_double(scene.positions.at(i, t, a));
      out << '\n';
    }
  }
}

void write_csv(const Scene& scene, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_csv(scene, ss);
  write_file_atomic(path, ss.str());
}

std::vector<Track> group_tracks(const std::vector<TrackPoint>& points, Notes* notes) {
  std::vector<Track> tracks;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<const TrackPoint*>> members;
  for (const auto& p : points) {
    auto [it, fresh] = index.try_emplace(p.fighter_id, tracks.size());
    if (fresh) {
      tracks.push_back({p.fighter_id, {}, {}});
      members.emplace_back();
    }
    members[it->second].push_back(&p);
  }
  for (std::size_t k = 0; k < tracks.size(); ++k) {
    auto& m = members[k];
    std::stable_sort(m.begin(), m.end(), [](auto* a, auto* b) { return a->t_s < b->t_s; });
    std::size_t duplicates = 0;
    for (const auto* p : m) {
      if (!tracks[k].t_s.empty() && p->t_s == tracks[k].t_s.back()) {
        ++duplicates;
        continue;
      }
      tracks[k].t_s.push_back(p->t_s);
      tracks[k].pos_m.push_back({p->x_m, p->y_m, p->z_m});
    }
    if (duplicates && notes) {
      notes->push_back("fighter " + tracks[k].fighter_id + ": dropped " + std::to_string(duplicates) +
                       " repeated timestamps");
    }
  }
  return tracks;
}

// ---------------------------------------------------------------------------
// Conditioning

namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("lowpass: alpha must lie in (0, 1], got " + text::format_double(alpha));
}

}  // namespace

Track lowpass(const Track& track, double alpha) {
  require_alpha(alpha);
  Track out = track;
  for (std::size_t t = 1; t < out.size(); ++t)
    for (std::size_t a = 0; a < 3; ++a)
      out.pos_m[t][a] = out.pos_m[t - 1][a] + alpha * (track.pos_m[t][a] - out.pos_m[t - 1][a]);
  return out;
}

Scene lowpass(const Scene& scene, double alpha) {
  require_alpha(alpha);
  Scene out = scene;
  for (std::size_t i = 0; i < scene.fighters(); ++i)
    for (std::size_t t = 1; t < scene.steps(); ++t)
      for (std::size_t a = 0; a < 3; ++a)
        out.positions.at(i, t, a) =
            out.positions.at(i, t - 1, a) + alpha * (scene.positions.at(i, t, a) - out.positions.at(i, t - 1, a));
  return out;
}

Scene resample(const std::vector<Track>& tracks, double dt_s, Notes* notes) {
  if (!(dt_s > 0.0)) throw ContractError("resample: dt must be positive");
  std::vector<const Track*> kept;
  for (const auto& tr : tracks) {
    if (tr.size() < 2) {
      if (notes) notes->push_back("fighter " + tr.fighter_id + ": fewer than two samples, dropped");
      continue;
    }
    kept.push_back(&tr);
  }
  auto overlap = [&] {
    double lo = -INFINITY, hi = INFINITY;
    for (const auto* tr : kept) {
      lo = std::max(lo, tr->t_s.front());
      hi = std::min(hi, tr->t_s.back());
    }
    return std::pair{lo, hi};
  };
  // Drop the shortest-covering fighter until the rest share at least one grid interval.
  while (kept.size() > 1) {
    auto [lo, hi] = overlap();
    if (hi - lo >= dt_s) break;
    auto shortest = std::min_element(kept.begin(), kept.end(), [](auto* a, auto* b) {
      return a->t_s.back() - a->t_s.front() < b->t_s.back() - b->t_s.front();
    });
    if (notes) notes->push_back("fighter " + (*shortest)->fighter_id + ": insufficient time coverage, dropped");
    kept.erase(shortest);
  }
  if (kept.empty()) throw DataError("resample: empty overlap interval (no fighter has two or more samples)");
  const auto [lo, hi] = overlap();
  const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / dt_s + 1e-9)) + 1;

  Scene scene;
  scene.t0_s = lo;
  scene.dt_s = dt_s;
  scene.positions = Tensor({kept.size(), steps, 3});
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const Track& tr = *kept[i];
    scene.fighter_ids.push_back(tr.fighter_id);
    std::size_t seg = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = std::min(lo + static_cast<double>(k) * dt_s, hi);
      while (seg + 2 < tr.size() && tr.t_s[seg + 1] <= t) ++seg;
      const double ta = tr.t_s[seg], tb = tr.t_s[seg + 1];
      for (std::size_t a = 0; a < 3; ++a) {
        const double pa = tr.pos_m[seg][a], pb = tr.pos_m[seg + 1][a];
        double v;
        if (t == ta) v = pa;
        else if (t == tb) v = pb;
        else v = pa + (pb - pa) * ((t - ta) / (tb - ta));
        scene.positions.at(i, k, a) = v;
      }
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Windows

Normalization centroid_normalization(const Tensor& observed_m, double scale_m) {
  if (!(scale_m > 0.0)) throw ContractError("normalization scale must be positive");
  Normalization norm;
  norm.scale_m = scale_m;
  const std::size_t n = observed_m.dim(0), last = observed_m.dim(1) - 1;
  for (std::size_t a = 0; a < 3; ++a) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += observed_m.at(i, last, a);
    norm.centroid_m[a] = s / static_cast<double>(n);
  }
  return norm;
}

namespace {

Tensor scene_slice(const Scene& scene, std::size_t start, std::size_t len) {
  Tensor out({scene.fighters(), len, 3});
  for (std::size_t i = 0; i < scene.fighters(); ++i)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t a = 0; a < 3; ++a) out.at(i, t, a) = scene.positions.at(i, start + t, a);
  return out;
}

}  // namespace

std::vector<WindowSample> make_windows(const Scene& scene, const WindowOptions& opt,
                                       std::size_t scene_index, Notes* notes) {
  if (opt.stride == 0 || opt.t_obs == 0 || opt.t_pred == 0) throw ContractError("make_windows: lengths and stride must be positive");
  const std::size_t len = opt.t_obs + opt.t_pred;
  std::vector<WindowSample> out;
  if (scene.steps() < len) {
    if (notes) {
      notes->push_back("scene " + std::to_string(scene_index) + " (" + scene.label + "): " +
                       std::to_string(scene.steps()) + " steps, need " + std::to_string(len) + " for one window");
    }
    return out;
  }
  for (std::size_t start = 0; start + len <= scene.steps(); start += opt.stride) {
    const Tensor observed = scene_slice(scene, start, opt.t_obs);
    const Tensor target = scene_slice(scene, start + opt.t_obs, opt.t_pred);
    WindowSample w;
    w.observed.norm = centroid_normalization(observed, opt.scale_m);
    w.observed.positions = w.observed.norm.to_normalized(observed);
    w.target = w.observed.norm.to_normalized(target);
    w.scene_index = scene_index;
    w.start = start;
    w.t0_s = scene.t0_s;
    w.dt_s = scene.dt_s;
    w.label = scene.label;
    out.push_back(std::move(w));
  }
  return out;
}

SceneWindow latest_window(const Scene& scene, std::size_t t_obs, double scale_m) {
  if (scene.steps() < t_obs) {
    throw DataError("scene too short: need " + std::to_string(t_obs) + " aligned steps, have " +
                    std::to_string(scene.steps()));
  }
  const Tensor observed = scene_slice(scene, scene.steps() - t_obs, t_obs);
  SceneWindow w;
  w.norm = centroid_normalization(observed, scale_m);
  w.positions = w.norm.to_normalized(observed);
  return w;
}

SplitResult split(std::vector<WindowSample> samples, std::size_t train_parts, std::size_t test_parts) {
  if (train_parts + test_parts == 0) throw ContractError("split: ratio parts must not both be zero");
  std::map<std::size_t, std::vector<WindowSample>> by_scene;
  for (auto& s : samples) by_scene[s.scene_index].push_back(std::move(s));
  SplitResult out;
  const std::size_t total_parts = train_parts + test_parts;
  for (auto& [scene, windows] : by_scene) {
    std::stable_sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    const std::size_t n = windows.size();
    const std::size_t n_train = (2 * train_parts * n + total_parts) / (2 * total_parts);
    const std::size_t test_start = n_train < n ? windows[n_train].start : SIZE_MAX;
    for (std::size_t k = 0; k < n; ++k) {
      if (k >= n_train) {
        out.test.push_back(std::move(windows[k]));
      } else if (windows[k].start + windows[k].span() > test_start) {
        ++out.dropped;
      } else {
        out.train.push_back(std::move(windows[k]));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("manifest: cannot open " + manifest.string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    auto body = text::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto ws = body.find_first_of(" \t");
    ManifestEntry e;
    e.path = std::string(body.substr(0, ws));
    if (ws != std::string_view::npos) e.label = std::string(text::trim(body.substr(ws)));
    if (e.path.is_relative()) e.path = manifest.parent_path() / e.path;
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
  std::string body;
  for (const auto& e : entries) {
    body += e.path.generic_string();
    if (!e.label.empty()) body += " " + e.label;
    body += '\n';
  }
  write_file_atomic(manifest, body);
}

Scene prepare_scene(const std::filesystem::path& csv, const PipelineOptions& opt, Notes* notes) {
  const auto points = load_csv(csv, notes);
  Scene scene = resample(group_tracks(points, notes), opt.dt_s, notes);
  return lowpass(scene, opt.lowpass_alpha);
}

Dataset load_dataset(const std::filesystem::path& manifest, const PipelineOptions& opt) {
  Dataset ds;
  std::vector<WindowSample> samples;
  for (const auto& entry : read_manifest(manifest)) {
    Scene scene = prepare_scene(entry.path, opt, &ds.notes);
    scene.label = entry.label.empty() ? entry.path.stem().string() : entry.label;
    auto windows = make_windows(scene, opt.windows, ds.scenes.size(), &ds.notes);
    samples.insert(samples.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
    ds.scenes.push_back(std::move(scene));
  }
  if (ds.scenes.empty()) throw DataError("manifest " + manifest.string() + " lists no scenes");
  ds.split = split(std::move(samples));
  return ds;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw DataError("failed writing " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace trajnet
