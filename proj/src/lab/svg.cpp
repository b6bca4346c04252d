#include "pflab/lab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pflab/errors.hpp"

namespace pflab::lab {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#d62728", "#8c564b", "#17becf"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::vector<std::size_t> filtered_rows(const CsvTable& t, const std::string& column, const std::string& value) {
  std::vector<std::size_t> rows;
  const bool filter = !column.empty();
  const std::size_t c = filter ? t.column(column) : 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (!filter || t.rows[i][c] == value) rows.push_back(i);
  }
  return rows;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double map(double v, double px_lo, double px_hi) const {
    const double a = log ? std::log10(lo) : lo;
    const double b = log ? std::log10(hi) : hi;
    const double x = log ? std::log10(v) : v;
    return px_lo + (x - a) / (b - a) * (px_hi - px_lo);
  }
};

Axis make_axis(const std::vector<double>& values, bool log) {
  Axis ax;
  ax.log = log;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {
    lo = log ? 1.0 : 0.0;
    hi = log ? 10.0 : 1.0;
  }
  if (lo == hi) {
    if (log) {
      lo /= 10.0;
      hi *= 10.0;
    } else {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  if (!log) {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  ax.lo = lo;
  ax.hi = hi;
  return ax;
}

void frame(std::ostringstream& os, const std::string& title, const std::string& xl, const std::string& yl,
           const Axis& x, const Axis& y) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x.lo + (x.hi - x.lo) * i / 4.0;
    const double px = x.map(fx, x0, x1);
    os << "<text x=\"" << num(px) << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << tick(fx) << "</text>\n";
    const double fy = y.log ? std::pow(10.0, std::log10(y.lo) + (std::log10(y.hi) - std::log10(y.lo)) * i / 4.0)
                            : y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.map(fy, y0, y1);
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
       << tick(fy) << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << escape(xl) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (y0 + y1) / 2 << ")\">" << escape(yl) << (y.log ? " (log)" : "") << "</text>\n";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

}  // namespace

bool wants_log_scale(const std::vector<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double v : values) {
    if (std::isfinite(v) && v > 0.0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return std::isfinite(lo) && hi / lo > 1e3;
}

std::string render_line_plot(const CsvTable& table, const LinePlotSpec& spec) {
  struct Prepared {
    std::vector<double> x, y, sd;
    bool band = false;
  };
  std::vector<Prepared> series;
  std::vector<double> all_x;
  std::vector<double> all_y;
  for (const auto& s : spec.series) {
    Prepared p;
    const auto xs = table.numbers(spec.x_column);
    const auto ys = table.numbers(s.y_column);
    const auto sds = s.sd_column.empty() ? std::vector<double>() : table.numbers(s.sd_column);
    for (std::size_t r : filtered_rows(table, s.filter_column, s.filter_value)) {
      p.x.push_back(xs[r]);
      p.y.push_back(ys[r]);
      const double sd = sds.empty() ? NAN : sds[r];
      p.sd.push_back(sd);
      if (std::isfinite(sd) && sd > 0.0) p.band = true;
    }
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      all_x.push_back(p.x[i]);
      all_y.push_back(p.y[i]);
      if (p.band && std::isfinite(p.sd[i])) {
        all_y.push_back(p.y[i] - p.sd[i]);
        all_y.push_back(p.y[i] + p.sd[i]);
      }
    }
    series.push_back(std::move(p));
  }
  const bool log = spec.y_scale == YScale::log || (spec.y_scale == YScale::automatic && wants_log_scale(all_y));
  const Axis x = make_axis(all_x, false);
  const Axis y = make_axis(all_y, log);
  std::ostringstream os;
  frame(os, spec.title, spec.x_label, spec.y_label, x, y);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto ok = [&](double v) { return std::isfinite(v) && (!log || v > 0.0); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Prepared& p = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (p.band) {
      std::string upper, lower;
      for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double sd = std::isfinite(p.sd[i]) ? p.sd[i] : 0.0;
        const double hi = p.y[i] + sd;
        const double lo = log ? std::max(p.y[i] - sd, y.lo) : p.y[i] - sd;
        if (!ok(hi) || !ok(lo)) continue;
        upper += num(x.map(p.x[i], x0, x1)) + "," + num(y.map(hi, y0, y1)) + " ";
        lower = num(x.map(p.x[i], x0, x1)) + "," + num(y.map(lo, y0, y1)) + " " + lower;
      }
      os << "<polygon class=\"band\" points=\"" << upper << lower << "\" fill=\"" << color
         << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      if (!ok(p.y[i])) continue;
      pts += num(x.map(p.x[i], x0, x1)) + "," + num(y.map(p.y[i], y0, y1)) + " ";
    }
    os << "<polyline class=\"line\" points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    const std::string label = spec.series[k].label.empty() ? spec.series[k].y_column : spec.series[k].label;
    os << "<text x=\"" << x0 + 10 << "\" y=\"" << y1 + 14 + 15 * k << "\" font-size=\"11\" fill=\"" << color << "\">"
       << escape(label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_histogram(const CsvTable& table, const HistogramPlotSpec& spec) {
  const auto lo = table.numbers(spec.lo_column);
  const auto hi = table.numbers(spec.hi_column);
  const auto dens = table.numbers(spec.density_column);
  const auto overlay = spec.overlay_column.empty() ? std::vector<double>() : table.numbers(spec.overlay_column);
  const auto rows = filtered_rows(table, spec.filter_column, spec.filter_value);
  std::vector<double> xs, ys;
  for (std::size_t r : rows) {
    xs.push_back(lo[r]);
    xs.push_back(hi[r]);
    ys.push_back(0.0);
    ys.push_back(dens[r]);
    if (!overlay.empty()) ys.push_back(overlay[r]);
  }
  const Axis x = make_axis(xs, false);
  Axis y = make_axis(ys, false);
  y.lo = 0.0;
  std::ostringstream os;
  frame(os, spec.title, "x", "density", x, y);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  for (std::size_t r : rows) {
    const double px = x.map(lo[r], x0, x1);
    const double pw = std::max(x.map(hi[r], x0, x1) - px, 0.0);
    const double py = y.map(dens[r], y0, y1);
    os << "<rect class=\"bar\" x=\"" << num(px) << "\" y=\"" << num(py) << "\" width=\"" << num(pw) << "\" height=\""
       << num(y0 - py) << "\" fill=\"#ff7f0e\" fill-opacity=\"0.7\"/>\n";
  }
  if (!overlay.empty()) {
    std::string pts;
    for (std::size_t r : rows) {
      pts += num(x.map(0.5 * (lo[r] + hi[r]), x0, x1)) + "," + num(y.map(overlay[r], y0, y1)) + " ";
    }
    os << "<polyline class=\"line\" points=\"" << pts << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_plot(const std::string& csv_path, const LinePlotSpec& spec, const std::string& svg_path) {
  write_file(svg_path, render_line_plot(read_csv(csv_path), spec));
}

void emit_plot(const std::string& csv_path, const HistogramPlotSpec& spec, const std::string& svg_path) {
  write_file(svg_path, render_histogram(read_csv(csv_path), spec));
}

}  // namespace pflab::lab
