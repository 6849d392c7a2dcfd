#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajnet/data.hpp"
#include "trajnet/model.hpp"
#include "trajnet/trainer.hpp"

namespace trajnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

/// Every accepted key in documentation order.
std::span<const ConfigKey> config_keys();

/// Flat key=value settings covering model, training and pipeline knobs.
/// Starts from the documented defaults; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Lines of `key = value`; blank lines and '#' comments are skipped.
  static RunConfig parse(std::string_view text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  double number(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;

  ModelConfig model() const;
  TrainConfig train() const;
  PipelineOptions pipeline() const;

  /// `key=value` lines in documentation order.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace trajnet
