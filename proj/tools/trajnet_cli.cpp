// trajnet: generate scenes, train, evaluate, ablate and predict.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajnet/config.hpp"
#include "trajnet/data.hpp"
#include "trajnet/evaluator.hpp"
#include "trajnet/model.hpp"
#include "trajnet/synth.hpp"
#include "trajnet/text.hpp"
#include "trajnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace trajnet;

namespace {

constexpr const char* kPipelineKeys[] = {"dt_s", "lowpass_alpha", "scale_m", "stride"};

// Config file plus `--key value` overrides; flags win over the file.
struct ConfigOptions {
  std::string path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& app, bool pipeline_only) {
    app.add_option("--config", path, "key=value config file");
    for (const auto& k : config_keys()) {
      const std::string name = k.name;
      if (pipeline_only && std::find(std::begin(kPipelineKeys), std::end(kPipelineKeys), name) == std::end(kPipelineKeys))
        continue;
      app.add_option_function<std::string>(
             "--" + name, [this, name](const std::string& v) { overrides[name] = v; }, k.help)
          ->default_str(k.default_value)
          ->type_name("VALUE");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::load(path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    return cfg;
  }
};

void print_notes(const Notes& notes) {
  for (const auto& n : notes) std::cerr << "note: " << n << '\n';
}

std::vector<ScenarioSet> scenario_sets(const std::vector<WindowSample>& samples) {
  std::vector<ScenarioSet> sets{{"all", samples}};
  for (const auto& s : samples) {
    auto it = std::find_if(sets.begin() + 1, sets.end(), [&](const auto& set) { return set.name == s.label; });
    if (it == sets.end()) {
      sets.push_back({s.label, {}});
      it = sets.end() - 1;
    }
    it->samples.push_back(s);
  }
  if (sets.size() == 2) sets.pop_back();  // a single label repeats "all"
  return sets;
}

// synth -----------------------------------------------------------------------

struct SynthArgs {
  std::string kinds = "straight";
  std::size_t fighters = 2;
  std::uint64_t seed = 1;
  std::size_t scenes = 1;
  double duration_s = 60.0;
  double noise_m = 0.0;
  double dt_s = 1.0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  std::vector<ManeuverKind> kinds;
  for (auto name : text::split(a.kinds, ',')) {
    auto k = parse_kind(text::trim(name));
    if (!k) throw std::invalid_argument("unknown kind '" + std::string(text::trim(name)) + "' (valid: " + valid_kinds() + ")");
    kinds.push_back(*k);
  }
  fs::create_directories(a.out);
  std::vector<ManifestEntry> entries;
  for (auto kind : kinds) {
    for (std::size_t i = 0; i < a.scenes; ++i) {
      SynthScenario sc;
      sc.kind = kind;
      sc.fighters = a.fighters;
      sc.duration_s = a.duration_s;
      sc.noise_m = a.noise_m;
      sc.dt_s = a.dt_s;
      sc.seed = a.seed + i;
      const Scene scene = synth_generate(sc);
      const std::string file = std::string(kind_name(kind)) + "_s" + std::to_string(sc.seed) + ".csv";
      write_csv(scene, fs::path(a.out) / file);
      entries.push_back({file, scene.label});
    }
  }
  write_manifest(fs::path(a.out) / "manifest.txt", entries);
  std::cout << "wrote " << entries.size() << " scene(s) and " << (fs::path(a.out) / "manifest.txt").string() << '\n';
  return 0;
}

// train -----------------------------------------------------------------------

struct TrainArgs {
  ConfigOptions cfg;
  std::string data, out, loss;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  const ModelConfig mc = rc.model();
  const TrainConfig tc = rc.train();
  const Dataset ds = load_dataset(a.data, rc.pipeline());
  print_notes(ds.notes);
  if (ds.split.train.empty()) throw DataError("no training windows in " + a.data);
  std::cerr << "training on " << ds.split.train.size() << " windows (" << ds.split.test.size() << " held out, "
            << ds.split.dropped << " dropped)\n";

  Model model(mc);
  const auto record = fit(model, ds.split.train, tc, [](const EpochStats& e) {
    std::cerr << "epoch " << e.epoch << " loss " << text::format_double(e.mean_loss) << " lr "
              << text::format_double(e.lr) << '\n';
  });
  save_checkpoint(model, a.out);
  const std::string loss_path = a.loss.empty() ? a.out + ".loss.csv" : a.loss;
  write_loss_csv(record, loss_path);
  if (record.size() > 0)
    std::cout << "epochs " << record.size() << " final mean loss " << text::format_double(record.back().mean_loss) << '\n';
  else
    std::cout << "epochs 0\n";
  return 0;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  ConfigOptions cfg;
  std::string checkpoint, data, metrics, dump;
  std::string split = "test";
  std::size_t pat_reps = 3;
};

PipelineOptions pipeline_for(const RunConfig& rc, const ModelConfig& mc) {
  PipelineOptions p = rc.pipeline();
  p.windows.t_obs = mc.t_obs;
  p.windows.t_pred = mc.t_pred;
  return p;
}

int cmd_eval(const EvalArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const Dataset ds = load_dataset(a.data, pipeline_for(a.cfg.resolve(), model.config()));
  print_notes(ds.notes);
  std::vector<WindowSample> samples;
  if (a.split == "test" || a.split == "all") samples.insert(samples.end(), ds.split.test.begin(), ds.split.test.end());
  if (a.split == "train" || a.split == "all") samples.insert(samples.end(), ds.split.train.begin(), ds.split.train.end());
  if (samples.empty()) throw DataError("no " + a.split + " windows to evaluate");

  std::vector<MetricsRow> rows;
  const std::string name = variant_name(model.config().attention, model.config().social);
  for (const auto& set : scenario_sets(samples)) {
    const auto m = evaluate(model, set.samples);
    rows.push_back({name, set.name, model.config().seed, m.ade_km, m.fde_km,
                    measure_pat(model, set.samples, a.pat_reps), digest(set.samples)});
  }
  std::cout << format_table(rows);
  if (!a.metrics.empty()) write_metrics_csv(rows, a.metrics);

  if (!a.dump.empty()) {
    fs::create_directories(a.dump);
    const auto preds = predict_samples(model, samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const auto& norm = s.observed.norm;
      char file[64];
      std::snprintf(file, sizeof file, "sample_%05zu.csv", i);
      dump_trajectories(ds.scenes[s.scene_index].fighter_ids, norm.to_meters(s.observed.positions),
                        norm.to_meters(s.target), preds[i], fs::path(a.dump) / file);
    }
    std::cout << "dumped " << samples.size() << " trajectories to " << a.dump << '\n';
  }
  return 0;
}

// ablate ----------------------------------------------------------------------

struct AblateArgs {
  ConfigOptions cfg;
  std::string data, metrics, seeds = "1";
  std::string variants = "full,+A,+SP,plain";
  std::size_t pat_reps = 3;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (auto part : text::split(s, ',')) {
    part = text::trim(part);
    if (auto dash = part.find('-'); dash != std::string_view::npos) {
      auto lo = text::parse_uint(part.substr(0, dash)), hi = text::parse_uint(part.substr(dash + 1));
      if (!lo || !hi || *lo > *hi) throw std::invalid_argument("bad seed range '" + std::string(part) + "'");
      for (auto x = *lo; x <= *hi; ++x) out.push_back(x);
    } else {
      auto x = text::parse_uint(part);
      if (!x) throw std::invalid_argument("bad seed '" + std::string(part) + "'");
      out.push_back(*x);
    }
  }
  if (out.empty()) throw std::invalid_argument("need at least one seed");
  return out;
}

int cmd_ablate(const AblateArgs& a) {
  const RunConfig rc = a.cfg.resolve();
  AblationPlan plan;
  plan.model = rc.model();
  plan.train = rc.train();
  plan.seeds = parse_seeds(a.seeds);
  plan.pat_repetitions = a.pat_reps;
  plan.variants.clear();
  for (auto name : text::split(a.variants, ',')) {
    auto v = parse_variant(text::trim(name));
    if (!v) throw std::invalid_argument("unknown variant '" + std::string(text::trim(name)) + "' (valid: full, +A, +SP, plain)");
    plan.variants.push_back(*v);
  }
  const Dataset ds = load_dataset(a.data, rc.pipeline());
  print_notes(ds.notes);
  if (ds.split.train.empty()) throw DataError("no training windows in " + a.data);
  if (ds.split.test.empty()) throw DataError("no test windows in " + a.data);
  const auto sets = scenario_sets(ds.split.test);
  std::size_t runs = 0;
  const auto result = run_ablation(ds.split.train, sets, plan, [&](const std::string& v, std::uint64_t seed, const LossRecord& r) {
    ++runs;
    std::cerr << "run " << runs << ": " << v << " seed " << seed << " final loss "
              << text::format_double(r.size() ? r.back().mean_loss : 0.0) << '\n';
  });
  std::cout << format_table(result.rows, plan.seeds.size() > 1);
  std::cout << "training runs: " << runs << '\n';
  if (!a.metrics.empty()) write_metrics_csv(result.rows, a.metrics);
  return 0;
}

// predict ---------------------------------------------------------------------

struct PredictArgs {
  ConfigOptions cfg;
  std::string checkpoint, scene, out;
};

int cmd_predict(const PredictArgs& a) {
  const Model model = load_checkpoint(a.checkpoint);
  const auto& mc = model.config();
  const PipelineOptions p = pipeline_for(a.cfg.resolve(), mc);
  Notes notes;
  const Scene scene = prepare_scene(a.scene, p, &notes);
  print_notes(notes);
  const SceneWindow w = latest_window(scene, mc.t_obs, p.windows.scale_m);
  const Tensor pred = w.norm.to_meters(model.rollout(w));
  dump_trajectories(scene.fighter_ids, w.norm.to_meters(w.positions), Tensor{}, pred, a.out);
  std::cout << "predicted " << mc.t_pred << " steps for " << scene.fighters() << " fighter(s) -> " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fighter trajectory prediction"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate synthetic scenes and a manifest");
  s->add_option("--kind", synth.kinds, "maneuver kind(s), comma separated: " + valid_kinds())->capture_default_str();
  s->add_option("--n", synth.fighters, "fighters per scene")->capture_default_str();
  s->add_option("--seed", synth.seed, "first scene seed")->capture_default_str();
  s->add_option("--scenes", synth.scenes, "scenes per kind (seeds seed, seed+1, ...)")->capture_default_str();
  s->add_option("--duration", synth.duration_s, "seconds per scene")->capture_default_str();
  s->add_option("--noise", synth.noise_m, "position noise sigma in meters")->capture_default_str();
  s->add_option("--dt", synth.dt_s, "sample period in seconds")->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model on a scene manifest");
  t->add_option("--data", train.data, "scene manifest")->required();
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_option("--loss", train.loss, "loss CSV path (default <out>.loss.csv)");
  train.cfg.attach(*t, false);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "report ADE/FDE/PAT of a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  e->add_option("--data", eval.data, "scene manifest")->required();
  e->add_option("--split", eval.split, "windows to evaluate")
      ->check(CLI::IsMember({"test", "train", "all"}))
      ->capture_default_str();
  e->add_option("--metrics", eval.metrics, "metrics CSV path");
  e->add_option("--dump", eval.dump, "directory for per-sample trajectory CSVs");
  e->add_option("--pat-reps", eval.pat_reps, "timing repetitions")->check(CLI::Range(3, 1000))->capture_default_str();
  eval.cfg.attach(*e, true);

  AblateArgs ablate;
  auto* b = app.add_subcommand("ablate", "train and compare full, +A, +SP and plain variants");
  b->add_option("--data", ablate.data, "scene manifest")->required();
  b->add_option("--seeds", ablate.seeds, "seeds, e.g. 1,2,3 or 1-5")->capture_default_str();
  b->add_option("--variants", ablate.variants, "variants to train")->capture_default_str();
  b->add_option("--metrics", ablate.metrics, "metrics CSV path");
  b->add_option("--pat-reps", ablate.pat_reps, "timing repetitions")->check(CLI::Range(3, 1000))->capture_default_str();
  ablate.cfg.attach(*b, false);

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "predict the next steps of a scene CSV");
  p->add_option("--checkpoint", predict.checkpoint, "checkpoint path")->required();
  p->add_option("--scene", predict.scene, "scene CSV")->required();
  p->add_option("--out", predict.out, "trajectory CSV path")->required();
  predict.cfg.attach(*p, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (b->parsed()) return cmd_ablate(ablate);
    if (p->parsed()) return cmd_predict(predict);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
