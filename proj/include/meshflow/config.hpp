#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "meshflow/model.hpp"
#include "meshflow/training.hpp"

namespace meshflow {

struct ConfigKey {
  std::string name;
  std::string default_value;  // empty = unset
  std::string help;
};

/// Subcommands and the keys each accepts.
const std::vector<std::string>& subcommands();
const std::vector<ConfigKey>& config_keys(std::string_view subcommand);

/// Flat `key = value` text; `#` starts a comment. Duplicate keys are an error.
std::map<std::string, std::string> parse_config_text(std::string_view text);

class RunConfig {
 public:
  explicit RunConfig(std::string subcommand);

  const std::string& subcommand() const { return subcommand_; }
  /// ConfigError for keys the subcommand does not know.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Sorted `key = value` lines, readable by parse_config_text.
  std::string to_text() const;

 private:
  std::string subcommand_;
  std::map<std::string, std::string> values_;
};

/// Defaults, then MESHFLOW_SEED (if given and `seed` is not set elsewhere),
/// then the config file, then command-line overrides.
RunConfig resolve_config(const std::string& subcommand,
                         const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& overrides,
                         const char* env_seed = nullptr);

ModelConfig model_config_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);

}  // namespace meshflow
