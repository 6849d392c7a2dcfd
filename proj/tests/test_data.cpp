#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "trajnet/data.hpp"
#include "trajnet/synth.hpp"

using namespace trajnet;
namespace fs = std::filesystem;

namespace {

std::vector<TrackPoint> parse(const std::string& text, Notes* notes = nullptr) {
  std::istringstream in(text);
  return read_csv(in, notes);
}

Track make_track(std::vector<double> t, std::vector<std::array<double, 3>> p) {
  Track tr;
  tr.fighter_id = "a";
  tr.t_s = std::move(t);
  tr.pos_m = std::move(p);
  return tr;
}

Scene ramp_scene(std::size_t n, std::size_t T) {
  Scene s;
  s.label = "ramp";
  s.positions = Tensor({n, T, 3});
  for (std::size_t i = 0; i < n; ++i) {
    s.fighter_ids.push_back("f" + std::to_string(i));
    for (std::size_t t = 0; t < T; ++t) {
      s.positions.at(i, t, 0) = 250.0 * static_cast<double>(t) + 1000.0 * static_cast<double>(i);
      s.positions.at(i, t, 1) = -40.0 * static_cast<double>(t) + 3.5;
      s.positions.at(i, t, 2) = 6000.0 + std::sin(0.3 * static_cast<double>(t + i));
    }
  }
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("trajnet_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

using Vec3 = std::array<double, 3>;

Vec3 point(const Scene& s, std::size_t i, std::size_t t) {
  return {s.positions.at(i, t, 0), s.positions.at(i, t, 1), s.positions.at(i, t, 2)};
}
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double len(const Vec3& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_CASE("csv parsing") {
  SUBCASE("minimal file") {
    auto pts = parse("time_s,fighter_id,x_m,y_m,z_m\n0,a,1,2,3\n1,a,4,5,6\n");
    REQUIRE(pts.size() == 2);
    CHECK(pts[1].t_s == 1.0);
    CHECK(pts[1].fighter_id == "a");
    CHECK(pts[1].z_m == 6.0);
  }
  SUBCASE("extra columns are ignored with a note") {
    Notes notes;
    auto with = parse("roll_deg,time_s,fighter_id,x_m,speed,y_m,z_m\n9,0,a,1,300,2,3\n8,1,b,4,310,5,6\n", &notes);
    auto without = parse("time_s,fighter_id,x_m,y_m,z_m\n0,a,1,2,3\n1,b,4,5,6\n");
    REQUIRE(with.size() == without.size());
    for (std::size_t k = 0; k < with.size(); ++k) {
      CHECK(with[k].t_s == without[k].t_s);
      CHECK(with[k].fighter_id == without[k].fighter_id);
      CHECK(with[k].x_m == without[k].x_m);
      CHECK(with[k].y_m == without[k].y_m);
      CHECK(with[k].z_m == without[k].z_m);
    }
    REQUIRE(notes.size() == 2);
    CHECK(notes[0].find("roll_deg") != std::string::npos);
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(parse(""), doctest::Contains("empty"), DataError);
    CHECK_THROWS_WITH_AS(parse("time_s,fighter_id,x_m,y_m\n0,a,1,2\n"), doctest::Contains("z_m"), DataError);
    CHECK_THROWS_WITH_AS(parse("time_s,fighter_id,x_m,y_m,z_m\n0,a,1,2,3\n1,a,4,oops,6\n"),
                         doctest::Contains("row 3, column 'y_m'"), DataError);
    CHECK_THROWS_AS(parse("time_s,fighter_id,x_m,y_m,z_m\n"), DataError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
  }
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e5, 1e5);
  Scene s;
  s.t0_s = 12.25;
  s.dt_s = 0.5;
  s.fighter_ids = {"alpha", "bravo", "c3"};
  s.positions = Tensor({3, 11, 3});
  for (auto& v : s.positions.data()) v = u(rng);
  const auto dir = temp_dir("roundtrip");
  write_csv(s, dir / "s.csv");

  auto tracks = group_tracks(load_csv(dir / "s.csv"));
  REQUIRE(tracks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tracks[i].fighter_id == s.fighter_ids[i]);
    REQUIRE(tracks[i].size() == 11);
    for (std::size_t t = 0; t < 11; ++t) {
      CHECK(std::abs(tracks[i].t_s[t] - s.time_at(t)) <= 1e-9);
      for (std::size_t a = 0; a < 3; ++a) CHECK(std::abs(tracks[i].pos_m[t][a] - s.positions.at(i, t, a)) <= 1e-9);
    }
  }
}

TEST_CASE("grouping sorts by time and drops repeated stamps") {
  Notes notes;
  auto tracks = group_tracks(parse("time_s,fighter_id,x_m,y_m,z_m\n2,b,0,0,0\n1,a,1,0,0\n0,a,0,0,0\n1,a,9,9,9\n", &notes),
                             &notes);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].fighter_id == "b");
  CHECK(tracks[1].t_s == std::vector<double>{0.0, 1.0});
  CHECK(tracks[1].pos_m[1][0] == 1.0);
  CHECK(notes.size() == 1);
}

TEST_CASE("lowpass") {
  SUBCASE("impulse response decays geometrically") {
    auto tr = make_track({0, 1, 2, 3, 4}, {{0, 0, 0}, {1, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}});
    auto y = lowpass(tr, 0.3);
    const double expect[] = {0.0, 0.3, 0.21, 0.147, 0.1029};
    for (std::size_t t = 0; t < 5; ++t) CHECK(std::abs(y.pos_m[t][0] - expect[t]) <= 1e-15);
  }
  SUBCASE("alpha one is identity, constants are fixed") {
    auto tr = make_track({0, 1, 2}, {{1, 2, 3}, {-4, 5, 9}, {7, 7, 7}});
    CHECK(lowpass(tr, 1.0).pos_m == tr.pos_m);
    auto flat = make_track({0, 1, 2}, {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    CHECK(lowpass(flat, 0.3).pos_m == flat.pos_m);
  }
  SUBCASE("output stays inside the input range") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 100.0);
    Track tr;
    for (int t = 0; t < 200; ++t) {
      tr.t_s.push_back(t);
      tr.pos_m.push_back({g(rng), g(rng), g(rng)});
    }
    auto y = lowpass(tr, 0.3);
    for (std::size_t a = 0; a < 3; ++a) {
      double lo = 1e300, hi = -1e300;
      for (const auto& p : tr.pos_m) lo = std::min(lo, p[a]), hi = std::max(hi, p[a]);
      for (const auto& p : y.pos_m) CHECK((p[a] >= lo && p[a] <= hi));
    }
  }
  SUBCASE("alpha out of range") {
    auto tr = make_track({0}, {{0, 0, 0}});
    CHECK_THROWS_AS(lowpass(tr, 0.0), ContractError);
    CHECK_THROWS_AS(lowpass(tr, 1.5), ContractError);
    CHECK_THROWS_AS(lowpass(tr, std::nan("")), ContractError);
  }
}

TEST_CASE("resample") {
  SUBCASE("two points interpolate linearly") {
    auto s = resample({make_track({0, 10}, {{0, 0, 0}, {10, 0, 0}})}, 1.0);
    REQUIRE(s.steps() == 11);
    for (std::size_t t = 0; t <= 10; ++t) CHECK(s.positions.at(0, t, 0) == doctest::Approx(t).epsilon(1e-12));
  }
  SUBCASE("uniform track is unchanged") {
    auto tr = make_track({5, 6, 7, 8}, {{1, 2, 3}, {4, 1, 0}, {9, 9, 9}, {-1, -2, -3}});
    auto s = resample({tr}, 1.0);
    CHECK(s.t0_s == 5.0);
    REQUIRE(s.steps() == 4);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t a = 0; a < 3; ++a) CHECK(s.positions.at(0, t, a) == tr.pos_m[t][a]);
  }
  SUBCASE("random piecewise-linear tracks match the analytic interpolant") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> gap(0.3, 2.5), u(-500.0, 500.0);
    for (int trial = 0; trial < 20; ++trial) {
      Track tr;
      tr.fighter_id = "x";
      double t = u(rng) / 100.0;
      for (int k = 0; k < 30; ++k, t += gap(rng)) {
        tr.t_s.push_back(t);
        tr.pos_m.push_back({u(rng), u(rng), u(rng)});
      }
      const double dt = 0.7;
      auto s = resample({tr}, dt);
      for (std::size_t k = 0; k < s.steps(); ++k) {
        const double q = s.time_at(k);
        REQUIRE(q >= tr.t_s.front() - 1e-12);
        REQUIRE(q <= tr.t_s.back() + 1e-12);
        std::size_t j = 0;
        while (j + 2 < tr.t_s.size() && tr.t_s[j + 1] < q) ++j;
        const double w = (q - tr.t_s[j]) / (tr.t_s[j + 1] - tr.t_s[j]);
        for (std::size_t a = 0; a < 3; ++a) {
          const double expect = tr.pos_m[j][a] + w * (tr.pos_m[j + 1][a] - tr.pos_m[j][a]);
          CHECK(std::abs(s.positions.at(0, k, a) - expect) < 1e-9);
        }
      }
    }
  }
  SUBCASE("fighters share the common interval") {
    auto a = make_track({0, 20}, {{0, 0, 0}, {20, 0, 0}});
    auto b = make_track({5, 30}, {{0, 0, 0}, {25, 0, 0}});
    b.fighter_id = "b";
    auto s = resample({a, b}, 1.0);
    CHECK(s.fighters() == 2);
    CHECK(s.t0_s == 5.0);
    CHECK(s.steps() == 16);
    CHECK(s.positions.at(0, 0, 0) == doctest::Approx(5.0));
    CHECK(s.positions.at(1, 15, 0) == doctest::Approx(15.0));
  }
  SUBCASE("single-sample fighters are dropped with a note") {
    Notes notes;
    auto lone = make_track({3}, {{0, 0, 0}});
    lone.fighter_id = "lone";
    auto s = resample({make_track({0, 4}, {{0, 0, 0}, {4, 0, 0}}), lone}, 1.0, &notes);
    CHECK(s.fighters() == 1);
    CHECK(s.fighter_ids == std::vector<std::string>{"a"});
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("lone") != std::string::npos);
    CHECK_THROWS_AS(resample({lone}, 1.0), DataError);
  }
}

TEST_CASE("windows") {
  WindowOptions opt;
  SUBCASE("counts") {
    CHECK(make_windows(ramp_scene(2, 16), opt).size() == 1);
    CHECK(make_windows(ramp_scene(2, 17), opt).size() == 2);
    opt.stride = 3;
    CHECK(make_windows(ramp_scene(2, 26), opt).size() == 4);
  }
  SUBCASE("short scene gives no samples and a note") {
    Notes notes;
    CHECK(make_windows(ramp_scene(2, 15), opt, 4, &notes).empty());
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("15 steps") != std::string::npos);
  }
  SUBCASE("normalization and exact continuation") {
    auto scene = ramp_scene(3, 30);
    scene.t0_s = 100.0;
    scene.dt_s = 0.5;
    auto windows = make_windows(scene, opt);
    REQUIRE(windows.size() == 15);
    for (const auto& w : windows) {
      CHECK(w.first_target_time() == doctest::Approx(w.last_observed_time() + scene.dt_s));
      // centroid of last observed points
      for (std::size_t a = 0; a < 3; ++a) {
        double c = 0.0;
        for (std::size_t i = 0; i < 3; ++i) c += scene.positions.at(i, w.start + 7, a);
        CHECK(w.observed.norm.centroid_m[a] == doctest::Approx(c / 3.0).epsilon(1e-14));
      }
      CHECK(w.observed.norm.scale_m == 1000.0);
      const Tensor obs_m = w.observed.norm.to_meters(w.observed.positions);
      const Tensor tgt_m = w.observed.norm.to_meters(w.target);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t t = 0; t < 8; ++t)
          for (std::size_t a = 0; a < 3; ++a) {
            CHECK(std::abs(obs_m.at(i, t, a) - scene.positions.at(i, w.start + t, a)) <= 1e-9);
            CHECK(std::abs(tgt_m.at(i, t, a) - scene.positions.at(i, w.start + 8 + t, a)) <= 1e-9);
          }
    }
  }
  SUBCASE("normalize round trip on random tensors") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2e5, 2e5);
    Normalization norm{{u(rng), u(rng), u(rng)}, 1000.0};
    Tensor x({4, 8, 3});
    for (auto& v : x.data()) v = u(rng);
    const Tensor back = norm.to_meters(norm.to_normalized(x));
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(back.values()[k] - x.values()[k]) <= 1e-9);
  }
  SUBCASE("latest window") {
    auto scene = ramp_scene(2, 20);
    auto w = latest_window(scene, 8, 1000.0);
    const Tensor m = w.norm.to_meters(w.positions);
    CHECK(m.at(1, 7, 0) == doctest::Approx(scene.positions.at(1, 19, 0)));
    CHECK_THROWS_AS(latest_window(ramp_scene(2, 5), 8, 1000.0), DataError);
  }
}

TEST_CASE("chronological split") {
  SUBCASE("shares before boundary dropping") {
    WindowOptions opt;
    opt.stride = 16;  // disjoint windows, so nothing overlaps the boundary
    auto ten = make_windows(ramp_scene(1, 160), opt);
    REQUIRE(ten.size() == 10);
    auto r = split(ten);
    CHECK(r.train.size() == 8);
    CHECK(r.test.size() == 2);
    CHECK(r.dropped == 0);
    auto five = make_windows(ramp_scene(1, 80), opt);
    REQUIRE(five.size() == 5);
    r = split(five);
    CHECK(r.train.size() == 4);
    CHECK(r.test.size() == 1);
  }
  SUBCASE("no timestamp lands in both halves") {
    WindowOptions opt;
    auto scene = ramp_scene(2, 120);
    std::vector<WindowSample> all;
    for (std::size_t s = 0; s < 3; ++s) {
      auto w = make_windows(scene, opt, s);
      all.insert(all.end(), w.begin(), w.end());
    }
    const std::size_t total = all.size();
    auto r = split(all);
    CHECK(r.train.size() + r.test.size() + r.dropped == total);
    CHECK(!r.train.empty());
    for (std::size_t s = 0; s < 3; ++s) {
      std::set<std::size_t> train_steps, test_steps;
      for (const auto& w : r.train)
        if (w.scene_index == s)
          for (std::size_t k = 0; k < w.span(); ++k) train_steps.insert(w.start + k);
      for (const auto& w : r.test)
        if (w.scene_index == s)
          for (std::size_t k = 0; k < w.span(); ++k) test_steps.insert(w.start + k);
      for (auto t : train_steps) CHECK(test_steps.count(t) == 0);
      for (const auto& w : r.train)
        if (w.scene_index == s)
          for (const auto& v : r.test)
            if (v.scene_index == s) CHECK(w.start < v.start);
    }
  }
}

TEST_CASE("manifest and dataset loading") {
  const auto dir = temp_dir("manifest");
  fs::create_directories(dir / "scenes");
  for (int k = 0; k < 2; ++k) {
    SynthScenario spec;
    spec.kind = k == 0 ? ManeuverKind::straight : ManeuverKind::level_turn;
    spec.duration_s = 40;
    spec.seed = 7 + k;
    write_csv(synth_generate(spec), dir / "scenes" / ("s" + std::to_string(k) + ".csv"));
  }
  {
    std::ofstream out(dir / "manifest.txt");
    out << "# two scenes\n\nscenes/s0.csv straight\nscenes/s1.csv\n";
  }
  auto entries = read_manifest(dir / "manifest.txt");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].label == "straight");
  CHECK(entries[1].label.empty());
  CHECK(entries[1].path == dir / "scenes" / "s1.csv");

  auto ds = load_dataset(dir / "manifest.txt", PipelineOptions{});
  REQUIRE(ds.scenes.size() == 2);
  CHECK(ds.scenes[0].label == "straight");
  CHECK(ds.scenes[1].label == "s1");
  CHECK(ds.scenes[0].steps() == 41);
  CHECK(ds.split.train.size() + ds.split.test.size() + ds.split.dropped == 2 * 26);

  write_manifest(dir / "again.txt", entries);
  auto again = read_manifest(dir / "again.txt");
  REQUIRE(again.size() == 2);
  CHECK(again[0].path == entries[0].path);
  CHECK(again[0].label == "straight");

  CHECK_THROWS_AS(read_manifest(dir / "missing.txt"), DataError);
}

TEST_CASE("synthetic scenes") {
  SynthScenario spec;
  spec.fighters = 3;
  spec.duration_s = 90;

  SUBCASE("straight flights are collinear") {
    spec.kind = ManeuverKind::straight;
    auto s = synth_generate(spec);
    CHECK(s.steps() == 91);
    for (std::size_t i = 0; i < 3; ++i) {
      const Vec3 p0 = point(s, i, 0);
      const Vec3 d = sub(point(s, i, 90), p0);
      for (std::size_t t = 1; t < 90; ++t) {
        const Vec3 r = sub(point(s, i, t), p0);
        const Vec3 cross{r[1] * d[2] - r[2] * d[1], r[2] * d[0] - r[0] * d[2], r[0] * d[1] - r[1] * d[0]};
        CHECK(len(cross) / len(d) < 1e-9);
      }
    }
  }
  SUBCASE("level turns stay on a circle at fixed altitude") {
    spec.kind = ManeuverKind::level_turn;
    auto s = synth_generate(spec);
    for (std::size_t i = 0; i < 3; ++i) {
      // circumcenter of three samples, then every point's distance to it
      const Vec3 a = point(s, i, 0), b = point(s, i, 30), c = point(s, i, 60);
      const double d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
      const double a2 = a[0] * a[0] + a[1] * a[1], b2 = b[0] * b[0] + b[1] * b[1], c2 = c[0] * c[0] + c[1] * c[1];
      const double ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
      const double uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
      const double r0 = std::hypot(a[0] - ux, a[1] - uy);
      for (std::size_t t = 0; t < s.steps(); ++t) {
        const Vec3 p = point(s, i, t);
        CHECK(std::abs(std::hypot(p[0] - ux, p[1] - uy) - r0) < 1e-6);
        CHECK(p[2] == a[2]);
      }
    }
  }
  SUBCASE("mutation has exactly one sharp turn") {
    spec.kind = ManeuverKind::mutation;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      spec.seed = seed;
      auto s = synth_generate(spec);
      for (std::size_t i = 0; i < 3; ++i) {
        int sharp = 0;
        for (std::size_t t = 1; t + 1 < s.steps(); ++t) {
          const Vec3 u = sub(point(s, i, t), point(s, i, t - 1));
          const Vec3 v = sub(point(s, i, t + 1), point(s, i, t));
          const double angle = std::acos(std::clamp(dot(u, v) / (len(u) * len(v)), -1.0, 1.0));
          if (angle > 30.0 * std::numbers::pi / 180.0) ++sharp;
        }
        CHECK(sharp == 1);
      }
    }
  }
  SUBCASE("pursuers close on the leader") {
    spec.kind = ManeuverKind::pursuit;
    spec.fighters = 4;
    spec.seed = 3;
    auto s = synth_generate(spec);
    double start = 0.0, end = 0.0;
    for (std::size_t i = 1; i < 4; ++i) {
      start += len(sub(point(s, i, 0), point(s, 0, 0)));
      end += len(sub(point(s, i, 30), point(s, 0, 30)));
    }
    CHECK(end < start);
  }
  SUBCASE("same seed, same scene; noise is applied") {
    spec.kind = ManeuverKind::pursuit;
    spec.noise_m = 10.0;
    auto a = synth_generate(spec), b = synth_generate(spec);
    CHECK(a.positions.values().size() == b.positions.values().size());
    CHECK(std::equal(a.positions.values().begin(), a.positions.values().end(), b.positions.values().begin()));
    spec.seed = 2;
    auto c = synth_generate(spec);
    CHECK(!std::equal(a.positions.values().begin(), a.positions.values().end(), c.positions.values().begin()));
    spec.seed = 1;
    spec.noise_m = 0.0;
    auto clean = synth_generate(spec);
    double sq = 0.0;
    for (std::size_t k = 0; k < clean.positions.size(); ++k)
      sq += std::pow(a.positions.values()[k] - clean.positions.values()[k], 2);
    const double sigma = std::sqrt(sq / static_cast<double>(clean.positions.size()));
    CHECK(sigma == doctest::Approx(10.0).epsilon(0.1));
  }
  SUBCASE("kind names") {
    for (auto k : {ManeuverKind::straight, ManeuverKind::level_turn, ManeuverKind::mutation, ManeuverKind::pursuit})
      CHECK(parse_kind(kind_name(k)) == k);
    CHECK(!parse_kind("barrel_roll"));
    spec.fighters = 0;
    CHECK_THROWS_AS(synth_generate(spec), ContractError);
  }
}
