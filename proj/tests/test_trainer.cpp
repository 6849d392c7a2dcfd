#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "trajnet/model.hpp"
#include "trajnet/synth.hpp"
#include "trajnet/trainer.hpp"

using namespace trajnet;

namespace {

ModelConfig tiny_model(std::uint64_t seed = 3) {
  ModelConfig c;
  c.conv_channels = 4;
  c.hidden = 5;
  c.attn_dim = 3;
  c.grid = {5000.0, 2, 0};
  c.seed = seed;
  return c;
}

std::vector<WindowSample> tiny_windows() {
  std::vector<WindowSample> out;
  for (std::uint64_t s = 0; s < 2; ++s) {
    SynthScenario spec;
    spec.kind = s == 0 ? ManeuverKind::straight : ManeuverKind::level_turn;
    spec.duration_s = 24;
    spec.noise_m = 5.0;
    spec.seed = 40 + s;
    auto w = make_windows(synth_generate(spec), WindowOptions{}, s);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

Parameter scalar_param(double v) {
  return Parameter("theta", [&] {
    Tensor t({1});
    t[0] = v;
    return t;
  }());
}

}  // namespace

TEST_CASE("l2 loss") {
  Tensor a({2, 8, 3}), b({2, 8, 3});
  CHECK(l2_loss(a, b) == 0.0);
  b.at(1, 7, 0) = 1.0;
  b.at(1, 7, 1) = 2.0;
  b.at(1, 7, 2) = 2.0;
  CHECK(l2_loss(a, b) == 9.0);
  CHECK_THROWS_AS(l2_loss(a, Tensor({2, 7, 3})), ShapeError);

  SUBCASE("gradient is exactly 2(pred - truth)") {
    std::mt19937_64 rng(4);
    const Tensor pred = oracle::random_tensor({3, 4}, rng), truth = oracle::random_tensor({3, 4}, rng);
    Tape tape;
    Var p = tape.variable(pred), t = tape.constant(truth);
    Var loss = l2_loss(p, t);
    CHECK(loss.value()[0] == doctest::Approx(l2_loss(pred, truth)).epsilon(1e-14));
    tape.backward(loss);
    const auto fd = oracle::finite_diff(
        [&](const oracle::Vec& x) {
          double s = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - truth[k]) * (x[k] - truth[k]);
          return s;
        },
        oracle::to_vec(pred));
    for (std::size_t k = 0; k < pred.size(); ++k) {
      CHECK(p.grad()[k] == 2.0 * (pred[k] - truth[k]));
      CHECK(std::abs(p.grad()[k] - fd[k]) < 1e-8);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    std::vector<Parameter> ps{scalar_param(0.7)};
    AdamState st;
    adam_step(ps, st, 0.1);
    adam_step(ps, st, 0.1);
    CHECK(ps[0].value[0] == 0.7);
    CHECK(st.step == 2);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<Parameter> ps{scalar_param(0.0), scalar_param(0.0)};
    ps[0].grad[0] = 3.5;
    ps[1].grad[0] = -0.002;
    AdamState st;
    adam_step(ps, st, 0.01);
    CHECK(ps[0].value[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(ps[1].value[0] == doctest::Approx(0.01).epsilon(1e-4));
  }
  SUBCASE("minimizes theta squared") {
    std::vector<Parameter> ps{scalar_param(1.0)};
    AdamState st;
    for (int k = 0; k < 200; ++k) {
      ps[0].grad[0] = 2.0 * ps[0].value[0];
      adam_step(ps, st, 0.1);
    }
    CHECK(std::abs(ps[0].value[0]) < 0.1);
  }
  SUBCASE("state bound to one parameter set") {
    std::vector<Parameter> one{scalar_param(1.0)}, two{scalar_param(1.0), scalar_param(2.0)};
    AdamState st;
    adam_step(one, st, 0.1);
    CHECK_THROWS_AS(adam_step(two, st, 0.1), ContractError);
  }
}

TEST_CASE("gradient clipping") {
  std::vector<Parameter> ps{scalar_param(0.0), scalar_param(0.0)};
  ps[0].grad[0] = 3.0;
  ps[1].grad[0] = 4.0;
  CHECK(clip_grad_norm(ps, 10.0) == 5.0);
  CHECK(ps[0].grad[0] == 3.0);
  CHECK(clip_grad_norm(ps, 1.0) == 5.0);
  CHECK(ps[0].grad[0] == doctest::Approx(0.6));
  CHECK(ps[1].grad[0] == doctest::Approx(0.8));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(lr_schedule(0, cfg) == 1e-4);
  CHECK(lr_schedule(19, cfg) == 1e-4);
  CHECK(lr_schedule(20, cfg) == 5e-5);
  CHECK(lr_schedule(45, cfg) == 2.5e-5);
  double prev = lr_schedule(0, cfg);
  for (std::size_t e = 1; e < 200; ++e) {
    CHECK(lr_schedule(e, cfg) <= prev);
    prev = lr_schedule(e, cfg);
  }
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("batch loss matches per-window rollouts") {
  Model m(tiny_model());
  const auto windows = tiny_windows();
  std::vector<const WindowSample*> batch{&windows[0], &windows[5], &windows[windows.size() - 1]};
  double expect = 0.0;
  for (auto* s : batch) expect += l2_loss(m.rollout(s->observed), s->target);
  CHECK(batch_loss(m, batch) == doctest::Approx(expect).epsilon(1e-12));
  m.zero_grad();
  CHECK(batch_loss_and_grad(m, batch) == doctest::Approx(expect).epsilon(1e-12));
  double gsq = 0.0;
  for (const auto& p : m.parameters())
    for (double g : p.grad.values()) gsq += g * g;
  CHECK(gsq > 0.0);
}

TEST_CASE("fit") {
  const auto windows = tiny_windows();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.lr0 = 1e-3;

  SUBCASE("same seed, same trace and parameters") {
    Model a(tiny_model()), b(tiny_model());
    std::vector<EpochStats> seen;
    auto ra = fit(a, windows, cfg, [&](const EpochStats& s) { seen.push_back(s); });
    auto rb = fit(b, windows, cfg);
    REQUIRE(ra.size() == 3);
    REQUIRE(seen.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
      CHECK(ra.epochs[e].epoch == e + 1);
      CHECK(ra.epochs[e].mean_loss == rb.epochs[e].mean_loss);
      CHECK(ra.epochs[e].lr == rb.epochs[e].lr);
      CHECK(seen[e].mean_loss == ra.epochs[e].mean_loss);
    }
    CHECK(encode_checkpoint(a) == encode_checkpoint(b));
  }
  SUBCASE("a different seed shuffles differently") {
    Model a(tiny_model()), b(tiny_model());
    auto other = cfg;
    other.seed = 2;
    auto ra = fit(a, windows, cfg);
    auto rb = fit(b, windows, other);
    CHECK(encode_checkpoint(a) != encode_checkpoint(b));
    CHECK(ra.epochs[0].mean_loss != rb.epochs[0].mean_loss);
  }
  SUBCASE("zero learning rate is the identity") {
    Model a(tiny_model());
    const auto before = encode_checkpoint(a);
    cfg.lr0 = 0.0;
    auto r = fit(a, windows, cfg);
    CHECK(encode_checkpoint(a) == before);
    // every epoch sees the same parameters, so the mean loss is constant
    CHECK(r.epochs[0].mean_loss == doctest::Approx(r.epochs[2].mean_loss).epsilon(1e-12));
  }
  SUBCASE("epoch-one mean loss is the summed loss over samples") {
    Model a(tiny_model());
    cfg.lr0 = 0.0;
    cfg.epochs = 1;
    double total = 0.0;
    for (const auto& w : windows) total += l2_loss(a.rollout(w.observed), w.target);
    auto r = fit(a, windows, cfg);
    CHECK(r.back().mean_loss == doctest::Approx(total / static_cast<double>(windows.size())).epsilon(1e-12));
  }
  SUBCASE("errors") {
    Model a(tiny_model());
    CHECK_THROWS_AS(fit(a, std::span<const WindowSample>{}, cfg), ContractError);
    auto bad = windows;
    bad[1].target = Tensor({2, 7, 3});
    CHECK_THROWS_AS(fit(a, bad, cfg), ShapeError);
  }
}

TEST_CASE("loss csv") {
  LossRecord r;
  r.epochs.push_back({1, 12.5, 1e-4, 0.25});
  r.epochs.push_back({2, 0.1, 5e-5, 0.5});
  std::ostringstream out;
  write_loss_csv(r, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kLossCsvHeader);
  std::getline(in, line);
  std::istringstream row(line);
  std::string cell;
  std::vector<double> cells;
  while (std::getline(row, cell, ',')) cells.push_back(std::stod(cell));
  CHECK(cells == std::vector<double>{1.0, 12.5, 1e-4, 0.25});
  std::size_t lines = 1;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);
}
