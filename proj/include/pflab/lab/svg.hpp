#pragma once

// Static SVG plots of CSV columns: lines with optional +/- sd bands, and
// histograms with an optional density overlay.

#include <string>
#include <vector>

#include "pflab/lab/csv.hpp"

namespace pflab::lab {

enum class YScale { automatic, linear, log };

struct LineSeries {
  std::string y_column;
  std::string sd_column;  // empty: no band
  std::string label;
  /// Optional row filter: keep rows whose filter_column equals filter_value.
  std::string filter_column;
  std::string filter_value;
};

struct LinePlotSpec {
  std::string title;
  std::string x_column;
  std::string x_label;
  std::string y_label;
  std::vector<LineSeries> series;
  YScale y_scale = YScale::automatic;
};

struct HistogramPlotSpec {
  std::string title;
  std::string lo_column = "bin_lo";
  std::string hi_column = "bin_hi";
  std::string density_column = "density";
  std::string overlay_column;  // evaluated at bin centres; empty: none
  std::string filter_column;
  std::string filter_value;
};

/// Log scale is chosen automatically when the positive values span more
/// than three decades.
bool wants_log_scale(const std::vector<double>& values);

std::string render_line_plot(const CsvTable& table, const LinePlotSpec& spec);
std::string render_histogram(const CsvTable& table, const HistogramPlotSpec& spec);

void emit_plot(const std::string& csv_path, const LinePlotSpec& spec, const std::string& svg_path);
void emit_plot(const std::string& csv_path, const HistogramPlotSpec& spec, const std::string& svg_path);

}  // namespace pflab::lab
