#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadet/model.hpp"
#include "fadet/synthetic.hpp"

namespace fadet {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Key=value run configuration: defaults, optional config file, flag
/// overrides, in that order. Unknown keys are rejected; the effective
/// configuration can be echoed for the run directory.
class RunConfig {
 public:
  RunConfig();

  /// Lines of `key = value`; '#' starts a comment.
  void apply_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  uint64_t seed() const { return static_cast<uint64_t>(get_int("seed")); }

  ModelConfig model_config() const;
  SyntheticDataSpec synthetic_spec() const;

  /// Canonical sorted key=value listing.
  std::string echo() const;
  void write_echo(const std::string& dir) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fadet
