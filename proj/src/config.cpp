#include "trajnet/config.hpp"

#include <fstream>
#include <sstream>

#include "trajnet/text.hpp"

namespace trajnet {

namespace {

constexpr ConfigKey kKeys[] = {
    {"seed", "1", "seeds initialization, shuffling and synthetic data"},
    {"m", "3", "input features per step (x, y, z first)"},
    {"conv_channels", "16", "temporal convolution channels"},
    {"hidden", "32", "LSTM hidden size"},
    {"attn_dim", "16", "input attention projection size"},
    {"grid_extent_m", "5000", "social grid half-width in meters"},
    {"grid_cells", "4", "social grid cells per axis"},
    {"social_dim", "0", "social embedding size (0 = hidden)"},
    {"social_per_step", "false", "pool neighbours at every encoder step"},
    {"pool", "true", "max-pool the convolution output in time"},
    {"t_obs", "8", "observed steps"},
    {"t_pred", "8", "predicted steps"},
    {"attention", "true", "input attention on"},
    {"social", "true", "social pooling on"},
    {"lr0", "1e-4", "initial learning rate"},
    {"decay", "0.5", "learning-rate decay factor"},
    {"decay_period", "20", "epochs between decays"},
    {"batch", "64", "windows per mini-batch"},
    {"epochs", "100", "training epochs"},
    {"clip_norm", "0", "global gradient-norm clip (0 = off)"},
    {"dt_s", "1.0", "resampling period in seconds"},
    {"lowpass_alpha", "0.3", "exponential smoothing factor in (0, 1]"},
    {"scale_m", "1000", "normalization scale in meters"},
    {"stride", "1", "window stride in steps"},
};

}  // namespace

std::span<const ConfigKey> config_keys() { return kKeys; }

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.name] = k.default_value;
}

bool RunConfig::has(const std::string& key) const { return values_.contains(key); }

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!has(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::parse(std::string_view body, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in{std::string(body)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = text::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(text::trim(s.substr(0, eq)));
    const std::string value(text::trim(s.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (!cfg.has(key)) throw ConfigError(where + "unknown config key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse(s.str(), path.string());
}

double RunConfig::number(const std::string& key) const {
  auto v = text::parse_double(get(key));
  if (!v) throw ConfigError("config key '" + key + "' expects a number, got '" + get(key) + "'");
  return *v;
}

std::uint64_t RunConfig::integer(const std::string& key) const {
  auto v = text::parse_uint(get(key));
  if (!v) throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + get(key) + "'");
  return *v;
}

bool RunConfig::flag(const std::string& key) const {
  auto v = text::parse_bool(get(key));
  if (!v) throw ConfigError("config key '" + key + "' expects true/false, got '" + get(key) + "'");
  return *v;
}

ModelConfig RunConfig::model() const {
  std::map<std::string, std::string> pairs;
  for (const char* k : {"m", "conv_channels", "hidden", "attn_dim", "grid_extent_m", "grid_cells", "social_dim",
                        "social_per_step", "pool", "t_obs", "t_pred", "attention", "social", "seed"})
    pairs[k] = get(k);
  try {
    ModelConfig cfg = ModelConfig::from_pairs(pairs);
    cfg.validate();
    return cfg;
  } catch (const std::logic_error& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr0 = number("lr0");
  t.decay = number("decay");
  t.decay_period = integer("decay_period");
  t.batch = integer("batch");
  t.epochs = integer("epochs");
  t.seed = integer("seed");
  t.clip_norm = number("clip_norm");
  try {
    t.validate();
  } catch (const std::logic_error& e) {
    throw ConfigError(e.what());
  }
  return t;
}

PipelineOptions RunConfig::pipeline() const {
  PipelineOptions p;
  p.dt_s = number("dt_s");
  p.lowpass_alpha = number("lowpass_alpha");
  p.windows.t_obs = integer("t_obs");
  p.windows.t_pred = integer("t_pred");
  p.windows.stride = integer("stride");
  p.windows.scale_m = number("scale_m");
  if (!(p.dt_s > 0.0)) throw ConfigError("config key 'dt_s' must be positive");
  if (!(p.lowpass_alpha > 0.0 && p.lowpass_alpha <= 1.0)) throw ConfigError("config key 'lowpass_alpha' must be in (0, 1]");
  if (!(p.windows.scale_m > 0.0)) throw ConfigError("config key 'scale_m' must be positive");
  if (p.windows.stride < 1) throw ConfigError("config key 'stride' must be positive");
  return p;
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& k : kKeys) out += std::string(k.name) + "=" + get(k.name) + "\n";
  return out;
}

}  // namespace trajnet
