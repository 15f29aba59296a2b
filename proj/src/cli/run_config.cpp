#include "vfd/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>

#include "vfd/errors.hpp"

namespace vfd::cli {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

const KeySpec* find_key(const std::string& key) {
  const auto& schema = config_schema();
  auto it = std::find_if(schema.begin(), schema.end(), [&](const KeySpec& k) { return k.name == key; });
  return it == schema.end() ? nullptr : &*it;
}

}  // namespace

const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = {
      {"seed", "0", "run seed (default from VFD_SEED when set)"},
      {"out", "", "output directory"},
      {"manifest", "", "dataset manifest (JSON lines)"},
      // synthetic data
      {"identities", "64", "number of synthetic identities"},
      {"real-per-id", "4", "real videos per identity"},
      {"fakes", "512", "number of fake videos"},
      {"noise", "0.1", "observation noise sigma"},
      {"train-fraction", "0.625", "share of identities in the train split"},
      {"val-fraction", "0.125", "share of identities in the val split"},
      // training
      {"steps", "", "training steps (pretrain 1000, finetune 300)"},
      {"lr", "", "base learning rate (pretrain 1e-4, finetune 5e-6)"},
      {"weight-decay", "0.2", "AdamW decoupled weight decay"},
      {"batch-size", "16", "anchors (pretrain) or real pairs (finetune) per step"},
      {"negatives-u", "8", "pretraining negatives per anchor"},
      {"negatives-q", "10", "fine-tuning fake pairs per step"},
      {"temperature", "0.1", "InfoNCE temperature"},
      {"schedule", "cosine", "learning-rate decay: cosine, linear or constant"},
      {"fraction", "1.0", "share of the training split used"},
      {"save-every", "0", "checkpoint interval in steps (0: final only)"},
      {"init", "", "checkpoint to fine-tune from"},
      {"from-scratch", "false", "fine-tune a freshly initialized model", true},
      // encoder
      {"depth", "2", "attention blocks per encoder"},
      {"heads", "4", "attention heads"},
      {"dim", "64", "token width D"},
      {"embed-dim", "64", "embedding length V"},
      {"face-patch", "16", "face patch side"},
      {"voice-patch-h", "32", "spectrogram patch height (frequency)"},
      {"voice-patch-w", "20", "spectrogram patch width (time)"},
      {"feed-forward", "true", "feed-forward sub-layer in each block", true},
      {"literal", "false", "bare single-head attention blocks", true},
      // evaluation and detection
      {"checkpoint", "", "model checkpoint"},
      {"split", "test", "split to evaluate"},
      {"threshold-split", "val", "split used to select lambda"},
      {"lambda", "", "fixed decision threshold (skips selection)"},
      {"audio", "", "WAVE file to score"},
      {"image", "", "face image to score (VFDI or PNG)"},
      // gradient check
      {"instances", "20", "random instances per gradient check"},
      {"inject-fault", "", "negate the analytic gradient of this check"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const KeySpec& k : config_schema()) values_[k.name] = k.default_value;
}

void RunConfig::apply_seed_environment() {
  if (const char* env = std::getenv("VFD_SEED"); env != nullptr && *env != '\0') {
    set("seed", env);
    u64("seed");
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!find_key(key)) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    values_[key] = trim(line.substr(eq + 1));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return !it->second.empty();
}

std::string RunConfig::str(const std::string& key) const {
  has(key);
  return values_.at(key);
}

std::string RunConfig::require(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required setting --" + key);
  return values_.at(key);
}

double RunConfig::real(const std::string& key) const {
  const std::string v = require(key);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) throw ConfigError("--" + key + ": '" + v + "' is not a number");
  return out;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string v = require(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("--" + key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  return static_cast<std::size_t>(u64(key));
}

bool RunConfig::flag(const std::string& key) const {
  const std::string v = require(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("--" + key + ": '" + v + "' is not a boolean");
}

std::string RunConfig::render(const std::string& command) const {
  std::string out = "# vfd " + command + "\n";
  for (const KeySpec& k : config_schema()) out += k.name + "=" + values_.at(k.name) + "\n";
  return out;
}

void RunConfig::write(const std::filesystem::path& directory, const std::string& command) const {
  std::filesystem::create_directories(directory);
  std::ofstream out(directory / "config.txt");
  if (!out) throw InputError("cannot write " + (directory / "config.txt").string());
  out << render(command);
}

}  // namespace vfd::cli
