#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vfd::cli {

struct KeySpec {
  std::string name;
  std::string default_value;  // empty = unset
  std::string help;
  bool is_flag = false;  // boolean, may be given without a value
};

// Every key any command understands; one flat namespace so a single file
// can configure a whole run.
const std::vector<KeySpec>& config_schema();

// Effective configuration. Precedence, lowest first: built-in defaults,
// VFD_SEED (seed only), the --config file, command-line flags.
class RunConfig {
 public:
  RunConfig();

  // key=value lines; '#' starts a comment. Unknown keys are rejected.
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  void apply_seed_environment();

  bool has(const std::string& key) const;
  std::string str(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;

  // Required string; ConfigError naming the key when unset.
  std::string require(const std::string& key) const;

  // "# vfd <command>" header, then every key in schema order.
  std::string render(const std::string& command) const;
  void write(const std::filesystem::path& directory, const std::string& command) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vfd::cli
