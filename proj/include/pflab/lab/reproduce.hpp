#pragma once

// Reproduction presets: sweeps of training runs over (m, seed, model) cells
// written out as CSV tables and SVG plots.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pflab/estimators.hpp"
#include "pflab/genmodels.hpp"
#include "pflab/lab/config.hpp"
#include "pflab/lab/csv.hpp"

namespace pflab::lab {

struct CellSpec {
  double m = 10.0;
  std::uint64_t seed = 1;
  gen::ModelKind kind = gen::ModelKind::vae;
  gen::GanVariant variant = gen::GanVariant::vanilla;
  double penalty_lip = 1.0;
  std::vector<int> shape;  // empty: model default
  nn::SkipKind skip = nn::SkipKind::none;

  /// Stable identifier of the cell's model settings, e.g. "gan:gradient_penalty:L=5".
  std::string label() const;
};

struct CellResult {
  gen::RunRecord record;
  std::vector<double> samples;  // empty when the run diverged
  LipschitzEstimate lip;
};

/// Dataset stream shared by every model trained at (seed, m).
std::uint64_t dataset_seed(std::uint64_t seed, double m);
/// Training stream of one cell.
std::uint64_t cell_seed(const CellSpec& cell);

CellResult run_cell(const ExperimentConfig& cfg, const CellSpec& cell);

/// Runs cells on cfg.threads workers; results are returned in input order.
std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells,
                                  std::ostream* log = nullptr);

std::vector<std::string> fig3_header();

/// One fig3 row (without the preset/version/hash prefix handled by the caller).
struct Fig3Row {
  double m = 0.0;
  std::uint64_t seed = 0;
  std::string model;
  std::string variant;
  std::size_t epochs = 0;
  double lip_empirical = 0.0;
  double lip_certified = 0.0;
  double mass_mid = 0.0;
  double thm1_beta_empirical = 0.0;
  double thm1_beta_certified = 0.0;
  double nu_mid_mass = 0.0;
  double cor2_bound = 0.0;
  std::string status;
};

Fig3Row make_fig3_row(const CellSpec& cell, const CellResult& result);

/// min_interpolation_mass(lip, fraction of samples <= -m/2, r = m); NaN when
/// lip is not positive and finite.
double thm1_beta(double lip, std::span<const double> samples, double m);

struct ReproductionResult {
  std::vector<std::string> files;
};

/// Runs the preset named in cfg.preset, writing into cfg.output_dir.
ReproductionResult run_reproduction(const ExperimentConfig& cfg, std::ostream* log = nullptr);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; NaN for fewer than two values
  std::size_t n = 0;
};
/// Ignores NaN entries.
MeanSd mean_sd(const std::vector<double>& values);

}  // namespace pflab::lab
