#include "fadet/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fadet {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
  values_ = {
      {"image_size", "16"},    {"patch_size", "4"},
      {"channels", "1"},       {"d_v", "64"},
      {"vit_layers", "2"},     {"vit_heads", "4"},
      {"d_t", "64"},           {"d_vt", "64"},
      {"context_length", "6"}, {"text_layers", "2"},
      {"text_heads", "4"},     {"clusters", "8"},
      {"alpha", "0.25"},       {"prompt_mode", "attack_agnostic"},
      {"enable_fcb", "true"},  {"enable_multilayer_freq", "true"},
      {"enable_orig_freq", "true"}, {"enable_nt", "true"},
      {"seed", "7"},           {"lr", "0.01"},
      {"batch", "18"},         {"steps", "200"},
      {"tau_cls", "0.07"},     {"tau_nt", "0.1"},
      {"protocol", "P1.3"},    {"protocol_scale", "50"},
      {"manifest", ""},        {"synthetic", "true"},
      {"synth_subjects", "36"}, {"threshold", "eer"},
      {"max_per_category", "1000"}, {"hist_bins", "64"},
      {"conv_channels", "8"},
  };
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string stripped = line.substr(0, line.find('#'));
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not key = value: " + line);
    }
    set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

int64_t RunConfig::get_int(const std::string& key) const {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    size_t pos = 0;
    double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.vit.image_size = get_int("image_size");
  cfg.vit.patch_size = get_int("patch_size");
  cfg.vit.channels = get_int("channels");
  cfg.vit.d_v = get_int("d_v");
  cfg.vit.n_layers = get_int("vit_layers");
  cfg.vit.n_heads = get_int("vit_heads");
  cfg.d_t = get_int("d_t");
  cfg.d_vt = get_int("d_vt");
  cfg.context_length = get_int("context_length");
  cfg.text_layers = get_int("text_layers");
  cfg.text_heads = get_int("text_heads");
  cfg.clusters = get_int("clusters");
  cfg.alpha = get_double("alpha");
  cfg.tau_cls = get_double("tau_cls");
  cfg.tau_nt = get_double("tau_nt");
  cfg.prompt_mode = prompt_mode_from_string(get("prompt_mode"));
  cfg.vision_toggles.enable_fcb = get_bool("enable_fcb");
  cfg.vision_toggles.enable_multilayer_freq = get_bool("enable_multilayer_freq");
  cfg.vision_toggles.enable_orig_freq = get_bool("enable_orig_freq");
  cfg.conv_channels = get_int("conv_channels");
  cfg.vit.validate();
  return cfg;
}

SyntheticDataSpec RunConfig::synthetic_spec() const {
  SyntheticDataSpec spec;
  spec.seed = seed();
  spec.height = get_int("image_size");
  spec.width = get_int("image_size");
  spec.channels = get_int("channels");
  return spec;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) {
    os << key << " = " << value << "\n";
  }
  return os.str();
}

void RunConfig::write_echo(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / "effective_config.txt",
                   std::ios::trunc);
  os << echo();
}

}  // namespace fadet
