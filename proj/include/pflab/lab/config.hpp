#pragma once

// Experiment configuration: presets, scale caps and the flat `key = value`
// override format.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pflab/genmodels.hpp"

namespace pflab::lab {

inline constexpr const char* kCodeVersion = "pflab-1.0.0";

enum class Scale { full, ci };
std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

/// Ordered `key = value` pairs; `#` starts a comment, blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is);
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct ExperimentConfig {
  std::string preset = "custom";
  Scale scale = Scale::ci;
  std::vector<double> m_values;
  std::vector<std::uint64_t> seeds;
  std::size_t dataset_size = 10000;
  std::size_t generated_samples = 10000;
  std::size_t threads = 1;
  gen::TrainConfig train;

  gen::GanVariant gan_variant = gen::GanVariant::vanilla;
  std::vector<double> penalty_lips;      // fig4 / figS5
  std::vector<int> depths;               // fig5: hidden layer counts
  std::vector<int> skip_backbone;        // fig6
  std::size_t hist_bins = 200;
  double lip_lo = kLipGridLo;
  double lip_hi = kLipGridHi;
  std::size_t lip_grid = kLipGridPoints;
  std::size_t score_lip_grid = 2001;
  std::size_t r_grid_points = 400;

  std::string output_dir = "out";

  void validate() const;
};

/// Preset defaults at the given scale. Unknown presets throw ConfigError.
ExperimentConfig preset_config(const std::string& preset, Scale scale);

/// Applies overrides; unknown keys throw ConfigError.
void apply_overrides(ExperimentConfig& cfg, const KeyValueConfig& kv);

/// Enforces the ci caps (epochs <= 100, dataset <= 10000).
void apply_scale_caps(ExperimentConfig& cfg);

/// Canonical text of every setting that influences results.
std::string canonical_text(const ExperimentConfig& cfg);
/// FNV-1a 64 of canonical_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::vector<double> parse_double_list(const std::string& s);
std::vector<int> parse_int_list(const std::string& s);

}  // namespace pflab::lab
