#include "pflab/lab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "pflab/errors.hpp"

namespace pflab::lab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

}  // namespace

std::string to_string(Scale s) { return s == Scale::full ? "full" : "ci"; }

Scale parse_scale(const std::string& s) {
  if (s == "full") return Scale::full;
  if (s == "ci") return Scale::ci;
  throw ConfigError("unknown scale '" + s + "' (expected full or ci)");
}

KeyValueConfig KeyValueConfig::parse(std::istream& is) {
  KeyValueConfig kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv.entries_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in);
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double("list", item));
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(static_cast<int>(to_u64("list", item)));
  return out;
}

void ExperimentConfig::validate() const {
  if (m_values.empty()) throw ConfigError("experiment: m_values must be nonempty");
  if (seeds.empty()) throw ConfigError("experiment: seeds must be nonempty");
  for (double m : m_values) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("experiment: m values must be finite and nonnegative");
  }
  if (dataset_size < 1 || generated_samples < 1) throw ConfigError("experiment: sample counts must be positive");
  if (threads < 1) throw ConfigError("experiment: threads must be >= 1");
  if (hist_bins < 1) throw ConfigError("experiment: hist.bins must be >= 1");
  if (!(lip_lo < lip_hi) || lip_grid < 2 || score_lip_grid < 2) throw ConfigError("experiment: bad Lipschitz grid");
  if (r_grid_points < 1) throw ConfigError("experiment: bounds.r_grid_points must be >= 1");
  for (double l : penalty_lips) {
    if (!(l > 0.0)) throw ConfigError("experiment: penalty L values must be positive");
  }
  for (int d : depths) {
    if (d < 1) throw ConfigError("experiment: depths must be >= 1");
  }
  train.validate(dataset_size);
}

ExperimentConfig preset_config(const std::string& preset, Scale scale) {
  ExperimentConfig c;
  c.preset = preset;
  c.scale = scale;
  const bool full = scale == Scale::full;
  c.dataset_size = full ? 50000 : 10000;
  c.generated_samples = full ? 50000 : 10000;
  c.train.epochs = full ? 400 : 100;
  c.train.batch_size = 1000;
  const auto many = seed_range(full ? 10 : 3);
  if (preset == "fig2") {
    c.m_values = {10};
    c.seeds = {1};
  } else if (preset == "figS4") {
    c.m_values = {2, 4, 6, 8};
    c.seeds = {1};
  } else if (preset == "fig3" || preset == "figS3") {
    c.m_values = {2, 4, 6, 8, 10};
    c.seeds = many;
  } else if (preset == "fig4") {
    c.m_values = {10};
    c.seeds = many;
    c.penalty_lips = {5, 15, 25};
  } else if (preset == "figS5") {
    c.m_values = {10};
    c.seeds = many;
    c.penalty_lips = {11, 15, 19, 23};
  } else if (preset == "fig5") {
    c.m_values = {10};
    c.seeds = many;
    c.depths = {2, 3, 4, 5, 6};
  } else if (preset == "fig6") {
    c.m_values = {10};
    c.seeds = many;
    c.skip_backbone = {1, 256, 256, 256, 1};
  } else if (preset == "custom") {
    c.m_values = {10};
    c.seeds = {1};
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  return c;
}

void apply_overrides(ExperimentConfig& c, const KeyValueConfig& kv) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  gen::TrainConfig& t = c.train;
  const std::map<std::string, Setter> table = {
      {"m_values", [&](auto&, auto& v) { c.m_values = parse_double_list(v); }},
      {"seeds",
       [&](auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(k, s));
       }},
      {"scale", [&](auto&, auto& v) { c.scale = parse_scale(v); }},
      {"output_dir", [&](auto&, auto& v) { c.output_dir = v; }},
      {"dataset_size", [&](auto& k, auto& v) { c.dataset_size = to_u64(k, v); }},
      {"generated_samples", [&](auto& k, auto& v) { c.generated_samples = to_u64(k, v); }},
      {"threads", [&](auto& k, auto& v) { c.threads = to_u64(k, v); }},
      {"gan.variant", [&](auto&, auto& v) { c.gan_variant = gen::parse_gan_variant(v); }},
      {"penalty_lips", [&](auto&, auto& v) { c.penalty_lips = parse_double_list(v); }},
      {"fig5.depths", [&](auto&, auto& v) { c.depths = parse_int_list(v); }},
      {"fig6.backbone", [&](auto&, auto& v) { c.skip_backbone = parse_int_list(v); }},
      {"hist.bins", [&](auto& k, auto& v) { c.hist_bins = to_u64(k, v); }},
      {"lip.lo", [&](auto& k, auto& v) { c.lip_lo = to_double(k, v); }},
      {"lip.hi", [&](auto& k, auto& v) { c.lip_hi = to_double(k, v); }},
      {"lip.grid_points", [&](auto& k, auto& v) { c.lip_grid = to_u64(k, v); }},
      {"lip.score_grid_points", [&](auto& k, auto& v) { c.score_lip_grid = to_u64(k, v); }},
      {"bounds.r_grid_points", [&](auto& k, auto& v) { c.r_grid_points = to_u64(k, v); }},
      {"train.epochs", [&](auto& k, auto& v) { t.epochs = to_u64(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { t.batch_size = to_u64(k, v); }},
      {"train.lr", [&](auto& k, auto& v) { t.lr = to_double(k, v); }},
      {"train.beta1", [&](auto& k, auto& v) { t.beta1 = to_double(k, v); }},
      {"train.beta2", [&](auto& k, auto& v) { t.beta2 = to_double(k, v); }},
      {"train.shape", [&](auto&, auto& v) { t.shape = parse_int_list(v); }},
      {"train.skip", [&](auto&, auto& v) { t.skip = nn::parse_skip_kind(v); }},
      {"train.vae_c", [&](auto& k, auto& v) { t.vae_c = to_double(k, v); }},
      {"train.gp_form", [&](auto&, auto& v) { t.gp_form = gen::parse_penalty_form(v); }},
      {"train.gan_non_saturating", [&](auto& k, auto& v) { t.gan_non_saturating = to_bool(k, v); }},
      {"train.sgm_sigma_max", [&](auto& k, auto& v) { t.sgm_sigma_max = to_double(k, v); }},
      {"train.sgm_sigma_min", [&](auto& k, auto& v) { t.sgm_sigma_min = to_double(k, v); }},
      {"train.sgm_levels", [&](auto& k, auto& v) { t.sgm_levels = to_u64(k, v); }},
      {"train.condition_output_layer", [&](auto& k, auto& v) { t.condition_output_layer = to_bool(k, v); }},
      {"train.langevin.epsilon", [&](auto& k, auto& v) { t.langevin.epsilon = to_double(k, v); }},
      {"train.langevin.steps_per_level", [&](auto& k, auto& v) { t.langevin.steps_per_level = to_u64(k, v); }},
      {"train.langevin.normalization",
       [&](auto&, auto& v) { t.langevin.normalization = gen::parse_langevin_normalization(v); }},
      {"train.metrics_lip_grid", [&](auto& k, auto& v) { t.metrics_lip_grid = to_u64(k, v); }},
      {"train.metrics_samples", [&](auto& k, auto& v) { t.metrics_samples = to_u64(k, v); }},
  };
  for (const auto& [key, value] : kv.entries()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(key, value);
  }
}

void apply_scale_caps(ExperimentConfig& c) {
  if (c.scale != Scale::ci) return;
  c.train.epochs = std::min<std::size_t>(c.train.epochs, 100);
  c.dataset_size = std::min<std::size_t>(c.dataset_size, 10000);
  c.train.batch_size = std::min(c.train.batch_size, c.dataset_size);
}

std::string canonical_text(const ExperimentConfig& c) {
  const gen::TrainConfig& t = c.train;
  std::ostringstream os;
  os << "preset=" << c.preset << "\n"
     << "scale=" << to_string(c.scale) << "\n"
     << "m_values=" << join(c.m_values) << "\n"
     << "seeds=" << join(c.seeds) << "\n"
     << "dataset_size=" << c.dataset_size << "\n"
     << "generated_samples=" << c.generated_samples << "\n"
     << "gan.variant=" << gen::to_string(c.gan_variant) << "\n"
     << "penalty_lips=" << join(c.penalty_lips) << "\n"
     << "fig5.depths=" << join(c.depths) << "\n"
     << "fig6.backbone=" << join(c.skip_backbone) << "\n"
     << "hist.bins=" << c.hist_bins << "\n"
     << "lip.lo=" << fmt(c.lip_lo) << "\n"
     << "lip.hi=" << fmt(c.lip_hi) << "\n"
     << "lip.grid_points=" << c.lip_grid << "\n"
     << "lip.score_grid_points=" << c.score_lip_grid << "\n"
     << "bounds.r_grid_points=" << c.r_grid_points << "\n"
     << "train.epochs=" << t.epochs << "\n"
     << "train.batch_size=" << t.batch_size << "\n"
     << "train.lr=" << fmt(t.lr) << "\n"
     << "train.beta1=" << fmt(t.beta1) << "\n"
     << "train.beta2=" << fmt(t.beta2) << "\n"
     << "train.shape=" << join(t.shape) << "\n"
     << "train.skip=" << nn::to_string(t.skip) << "\n"
     << "train.vae_c=" << fmt(t.vae_c) << "\n"
     << "train.gp_form=" << gen::to_string(t.gp_form) << "\n"
     << "train.gan_non_saturating=" << (t.gan_non_saturating ? "true" : "false") << "\n"
     << "train.sgm_sigma_max=" << (t.sgm_sigma_max ? fmt(*t.sgm_sigma_max) : std::string("auto")) << "\n"
     << "train.sgm_sigma_min=" << fmt(t.sgm_sigma_min) << "\n"
     << "train.sgm_levels=" << t.sgm_levels << "\n"
     << "train.condition_output_layer=" << (t.condition_output_layer ? "true" : "false") << "\n"
     << "train.langevin.epsilon=" << fmt(t.langevin.epsilon) << "\n"
     << "train.langevin.steps_per_level=" << t.langevin.steps_per_level << "\n"
     << "train.langevin.normalization=" << gen::to_string(t.langevin.normalization) << "\n"
     << "train.metrics_lip_grid=" << t.metrics_lip_grid << "\n"
     << "train.metrics_samples=" << t.metrics_samples << "\n";
  return os.str();
}

std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pflab::lab
