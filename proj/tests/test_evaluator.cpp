#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "trajnet/evaluator.hpp"
#include "trajnet/synth.hpp"

using namespace trajnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.conv_channels = 3;
  c.hidden = 4;
  c.attn_dim = 3;
  c.grid = {5000.0, 2, 0};
  return c;
}

std::vector<WindowSample> windows_of(ManeuverKind kind, std::uint64_t seed, double duration = 24) {
  SynthScenario spec;
  spec.kind = kind;
  spec.duration_s = duration;
  spec.seed = seed;
  return make_windows(synth_generate(spec), WindowOptions{});
}

}  // namespace

TEST_CASE("ade and fde by hand") {
  Tensor truth({2, 8, 3}), pred({2, 8, 3});
  CHECK(ade(pred, truth) == 0.0);
  CHECK(fde(pred, truth) == 0.0);

  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 8; ++t) {
      pred.at(i, t, 0) = 3000.0;
      pred.at(i, t, 1) = 4000.0;
    }
  CHECK(ade(pred, truth) == 5.0);
  CHECK(fde(pred, truth) == 5.0);

  Tensor last({1, 8, 3});
  last.at(0, 7, 2) = 1000.0;
  CHECK(fde(last, Tensor({1, 8, 3})) == 1.0);
  CHECK(ade(last, Tensor({1, 8, 3})) == 0.125);

  SUBCASE("shape errors") {
    CHECK_THROWS_AS(ade(Tensor({2, 8, 3}), Tensor({2, 7, 3})), ShapeError);
    CHECK_THROWS_AS(fde(Tensor({2, 8}), Tensor({2, 8})), ShapeError);
  }
}

TEST_CASE("ade and fde match brute-force loops") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = dim(rng), T = dim(rng) + 2;
    const Tensor pred = oracle::random_tensor({n, T, 3}, rng, -1e4, 1e4);
    const Tensor truth = oracle::random_tensor({n, T, 3}, rng, -1e4, 1e4);
    CHECK(std::abs(ade(pred, truth) - oracle::ade(pred, truth)) <= 1e-12);
    CHECK(std::abs(fde(pred, truth) - oracle::fde(pred, truth)) <= 1e-12);
  }

  SUBCASE("properties") {
    const Tensor pred = oracle::random_tensor({3, 8, 3}, rng, -1e4, 1e4);
    const Tensor truth = oracle::random_tensor({3, 8, 3}, rng, -1e4, 1e4);
    Tensor poked = pred;
    for (std::size_t t = 0; t < 7; ++t) poked.at(1, t, 0) += 123.0;
    CHECK(fde(poked, truth) == fde(pred, truth));

    Tensor a = pred, b = truth;
    for (std::size_t k = 0; k < a.size(); k += 3) a[k] += 500.0, b[k] += 500.0;
    CHECK(ade(a, b) == doctest::Approx(ade(pred, truth)).epsilon(1e-12));

    const Tensor p1 = oracle::random_tensor({3, 1, 3}, rng), t1 = oracle::random_tensor({3, 1, 3}, rng);
    CHECK(ade(p1, t1) == fde(p1, t1));
  }
}

TEST_CASE("batched predictions and evaluation") {
  Model model(tiny_model());
  auto samples = windows_of(ManeuverKind::level_turn, 5);
  REQUIRE(samples.size() == 10);
  const auto preds = predict_samples(model, samples, 4);
  REQUIRE(preds.size() == samples.size());
  double ade_sum = 0.0, fde_sum = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    const Tensor single = s.observed.norm.to_meters(model.rollout(s.observed));
    for (std::size_t j = 0; j < single.size(); ++j) CHECK(preds[k][j] == doctest::Approx(single[j]).epsilon(1e-12));
    const Tensor truth = s.observed.norm.to_meters(s.target);
    ade_sum += oracle::ade(single, truth);
    fde_sum += oracle::fde(single, truth);
  }
  const auto m = evaluate(model, samples);
  CHECK(m.samples == 10);
  CHECK(m.ade_km == doctest::Approx(ade_sum / 10).epsilon(1e-12));
  CHECK(m.fde_km == doctest::Approx(fde_sum / 10).epsilon(1e-12));
}

TEST_CASE("predicted average time") {
  Model model(tiny_model());
  auto samples = windows_of(ManeuverKind::straight, 2);
  const double a = measure_pat(model, samples, 3);
  const double b = measure_pat(model, samples, 3);
  const double c = measure_pat(model, samples, 10);
  CHECK(a > 0.0);
  // wall-clock, so only loose agreement is meaningful
  CHECK(std::abs(a - b) < 0.5 * std::max(a, b));
  CHECK(std::abs(a - c) < 0.5 * std::max(a, c));
  CHECK_THROWS_AS(measure_pat(model, samples, 2), ContractError);
  CHECK_THROWS_AS(measure_pat(model, std::span<const WindowSample>{}, 3), ContractError);
}

TEST_CASE("variant names") {
  CHECK(variant_name(true, true) == "full");
  CHECK(variant_name(true, false) == "+A");
  CHECK(variant_name(false, true) == "+SP");
  CHECK(variant_name(false, false) == "plain");
  for (bool a : {true, false})
    for (bool s : {true, false}) CHECK(parse_variant(variant_name(a, s)) == std::pair{a, s});
  CHECK(!parse_variant("both"));
}

TEST_CASE("ablation harness") {
  auto train = windows_of(ManeuverKind::straight, 3);
  std::vector<ScenarioSet> sets{{"straight", windows_of(ManeuverKind::straight, 4)},
                                {"mutation", windows_of(ManeuverKind::mutation, 4, 40)}};
  AblationPlan plan;
  plan.model = tiny_model();
  plan.train.epochs = 1;
  plan.train.batch = 4;
  std::vector<std::string> logged;
  auto result = run_ablation(train, sets, plan, [&](const std::string& v, std::uint64_t, const LossRecord& r) {
    logged.push_back(v);
    CHECK(r.size() == 1);
  });
  CHECK(logged == std::vector<std::string>{"full", "+A", "+SP", "plain"});
  REQUIRE(result.rows.size() == 8);
  std::map<std::string, std::set<std::uint64_t>> digests;
  for (const auto& row : result.rows) {
    digests[row.scene_set].insert(row.input_digest);
    CHECK(row.pat_ms > 0.0);
    CHECK(std::isfinite(row.ade_km));
  }
  CHECK(digests["straight"].size() == 1);
  CHECK(digests["mutation"].size() == 1);
  CHECK(*digests["straight"].begin() == digest(sets[0].samples));
  CHECK(digest(sets[0].samples) != digest(sets[1].samples));

  SUBCASE("medians over seeds") {
    AblationResult r;
    for (std::uint64_t s = 1; s <= 5; ++s) r.rows.push_back({"full", "x", s, static_cast<double>(s * s), 0.0, 1.0, 0});
    CHECK(r.median("full", "x", &MetricsRow::ade_km) == 9.0);
    r.rows.pop_back();
    CHECK(r.median("full", "x", &MetricsRow::ade_km) == 6.5);
  }
  SUBCASE("reports") {
    std::ostringstream csv;
    write_metrics_csv(result.rows, csv);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == kMetricsCsvHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 8);
    const std::string table = format_table(result.rows);
    for (const char* v : {"full", "+A", "+SP", "plain", "PAT"}) CHECK(table.find(v) != std::string::npos);
  }
}

TEST_CASE("trajectory dumps") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> ids{"f0"};
  const Tensor history = oracle::random_tensor({1, 8, 3}, rng, -1e5, 1e5);
  const Tensor truth = oracle::random_tensor({1, 8, 3}, rng, -1e5, 1e5);
  const Tensor pred = oracle::random_tensor({1, 8, 3}, rng, -1e5, 1e5);
  const auto dir = fs::temp_directory_path() / "trajnet_test_dumps";
  fs::remove_all(dir);
  fs::create_directories(dir);
  dump_trajectories(ids, history, truth, pred, dir / "one.csv");
  const auto rows = load_trajectories(dir / "one.csv");
  REQUIRE(rows.size() == 24);

  std::set<std::tuple<std::string, std::string, std::size_t>> keys;
  const std::map<std::string, const Tensor*> by_role{{"history", &history}, {"truth", &truth}, {"pred", &pred}};
  for (const auto& r : rows) {
    CHECK(keys.insert({r.fighter_id, r.role, r.step}).second);
    REQUIRE(by_role.count(r.role) == 1);
    const Tensor& src = *by_role.at(r.role);
    CHECK(std::abs(r.x_m - src.at(0, r.step, 0)) <= 1e-9);
    CHECK(std::abs(r.y_m - src.at(0, r.step, 1)) <= 1e-9);
    CHECK(std::abs(r.z_m - src.at(0, r.step, 2)) <= 1e-9);
  }

  SUBCASE("empty roles are omitted") {
    const std::string text = format_trajectories(ids, history, Tensor{}, pred);
    std::size_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    CHECK(lines == 17);
    CHECK(text.find(",truth,") == std::string::npos);
  }
  SUBCASE("unwritable path") {
    CHECK_THROWS(dump_trajectories(ids, history, truth, pred, dir / "missing" / "x.csv"));
  }
}
