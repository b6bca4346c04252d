#include "pflab/lab/reproduce.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "pflab/bounds.hpp"
#include "pflab/errors.hpp"
#include "pflab/lab/svg.hpp"

namespace pflab::lab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string shape_text(const std::vector<int>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

int model_rank(gen::ModelKind k) {
  switch (k) {
    case gen::ModelKind::vae:
      return 0;
    case gen::ModelKind::gan:
      return 1;
    case gen::ModelKind::sgm:
      return 2;
  }
  return 3;
}

class Output {
 public:
  Output(const ExperimentConfig& cfg) : cfg_(cfg), hash_(config_hash(cfg)) {
    std::filesystem::create_directories(cfg.output_dir);
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(cfg_.output_dir) / name).string(); }

  /// Header with the provenance prefix columns.
  CsvWriter table(const std::vector<std::string>& columns) const {
    std::vector<std::string> h = {"preset", "code_version", "config_hash"};
    h.insert(h.end(), columns.begin(), columns.end());
    return CsvWriter(h);
  }

  void prefix(CsvWriter& w) const { w.cell(cfg_.preset).cell(kCodeVersion).cell(hash_); }

  void save(const CsvWriter& w, const std::string& name, ReproductionResult& res) const {
    w.write(path(name));
    res.files.push_back(path(name));
  }

  void plot(const std::string& csv, const LinePlotSpec& spec, const std::string& name, ReproductionResult& res) const {
    emit_plot(path(csv), spec, path(name));
    res.files.push_back(path(name));
  }

  void plot(const std::string& csv, const HistogramPlotSpec& spec, const std::string& name,
            ReproductionResult& res) const {
    emit_plot(path(csv), spec, path(name));
    res.files.push_back(path(name));
  }

  void metadata(ReproductionResult& res) const {
    std::ofstream out(path("metadata.txt"), std::ios::binary);
    out << "code_version=" << kCodeVersion << "\n" << "config_hash=" << hash_ << "\n" << canonical_text(cfg_);
    out << "seed_count=" << cfg_.seeds.size() << "\n";
    out << "r_grid=[0.1, 4m] with " << cfg_.r_grid_points << " points\n";
    res.files.push_back(path("metadata.txt"));
  }

 private:
  const ExperimentConfig& cfg_;
  std::string hash_;
};

std::vector<std::string> model_names() { return {"vae", "gan", "sgm"}; }

double near_mass(std::span<const double> s, double center) { return interval_mass(s, center - 2.0, center + 2.0); }

// Histogram rows over [-m - 6, m + 6] with the target density at bin centres.
void histogram_rows(const Output& out, CsvWriter& w, const ExperimentConfig& cfg, const CellSpec& cell,
                    const CellResult& r, const std::string& tag) {
  if (r.samples.empty()) return;
  const GaussianMixture nu = GaussianMixture::balanced(cell.m);
  const EmpiricalHistogram h = build_histogram(r.samples, -cell.m - 6.0, cell.m + 6.0, cfg.hist_bins);
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const double width = h.edges[b + 1] - h.edges[b];
    out.prefix(w);
    w.cell(cell.m).cell(cell.seed).cell(tag).cell(h.edges[b]).cell(h.edges[b + 1]).cell(h.counts[b]);
    w.cell(static_cast<double>(h.counts[b]) / (static_cast<double>(h.n) * width));
    w.cell(mixture_pdf(nu, 0.5 * (h.edges[b] + h.edges[b + 1])));
    w.end_row();
  }
}

std::vector<std::string> hist_columns() {
  return {"m", "seed", "model", "bin_lo", "bin_hi", "count", "density", "nu_density"};
}

// ---------------------------------------------------------------- presets

void preset_histograms(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      for (auto kind : {gen::ModelKind::vae, gen::ModelKind::gan, gen::ModelKind::sgm}) {
        CellSpec c;
        c.m = m;
        c.seed = seed;
        c.kind = kind;
        c.variant = cfg.gan_variant;
        cells.push_back(c);
      }
    }
  }
  const auto results = run_cells(cfg, cells, log);
  CsvWriter w = out.table(hist_columns());
  for (std::size_t i = 0; i < cells.size(); ++i) histogram_rows(out, w, cfg, cells[i], results[i], gen::to_string(cells[i].kind));
  const std::string name = cfg.preset + "_hist.csv";
  out.save(w, name, res);
  for (double m : cfg.m_values) {
    for (const auto& model : model_names()) {
      CsvTable t = read_csv(out.path(name));
      CsvTable sub{t.header, {}};
      const std::size_t mc = t.column("m"), kc = t.column("model"), sc = t.column("seed");
      for (const auto& row : t.rows) {
        if (row[mc] == format_double(m) && row[kc] == model && row[sc] == std::to_string(cfg.seeds.front())) {
          sub.rows.push_back(row);
        }
      }
      HistogramPlotSpec spec;
      spec.title = model + " samples, m = " + format_double(m);
      spec.overlay_column = "nu_density";
      const std::string svg = cfg.preset + "_" + model + "_m" + format_double(m) + ".svg";
      std::ofstream(out.path(svg), std::ios::binary) << render_histogram(sub, spec);
      res.files.push_back(out.path(svg));
    }
  }
}

void preset_fig3(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      for (auto kind : {gen::ModelKind::vae, gen::ModelKind::gan, gen::ModelKind::sgm}) {
        CellSpec c;
        c.m = m;
        c.seed = seed;
        c.kind = kind;
        c.variant = cfg.gan_variant;
        cells.push_back(c);
      }
    }
  }
  const auto results = run_cells(cfg, cells, log);
  std::vector<Fig3Row> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) rows.push_back(make_fig3_row(cells[i], results[i]));
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cells[a].m != cells[b].m) return cells[a].m < cells[b].m;
    if (cells[a].seed != cells[b].seed) return cells[a].seed < cells[b].seed;
    return model_rank(cells[a].kind) < model_rank(cells[b].kind);
  });
  std::vector<std::string> cols = fig3_header();
  cols.erase(cols.begin(), cols.begin() + 3);
  CsvWriter w = out.table(cols);
  for (std::size_t i : order) {
    const Fig3Row& r = rows[i];
    out.prefix(w);
    w.cell(r.m).cell(r.seed).cell(r.model).cell(r.variant).cell(static_cast<std::uint64_t>(r.epochs));
    w.cell(r.lip_empirical).cell(r.lip_certified).cell(r.mass_mid).cell(r.thm1_beta_empirical);
    w.cell(r.thm1_beta_certified).cell(r.nu_mid_mass).cell(r.cor2_bound).cell(r.status);
    w.end_row();
  }
  out.save(w, "fig3.csv", res);

  CsvWriter modes = out.table({"m", "seed", "model", "left_fraction", "near_left_mass", "near_right_mass", "status"});
  for (std::size_t i : order) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const bool ok = !r.samples.empty();
    out.prefix(modes);
    modes.cell(c.m).cell(c.seed).cell(gen::to_string(c.kind));
    modes.cell(ok ? mode_proportion(r.samples, 0.0) : kNaN);
    modes.cell(ok ? near_mass(r.samples, -c.m) : kNaN).cell(ok ? near_mass(r.samples, c.m) : kNaN);
    modes.cell(gen::to_string(r.record.status));
    modes.end_row();
  }
  out.save(modes, "fig3_modes.csv", res);

  CsvWriter s = out.table({"m", "model", "runs", "lip_empirical_mean", "lip_empirical_sd", "lip_certified_mean",
                           "lip_certified_sd", "mass_mid_mean", "mass_mid_sd", "thm1_beta_empirical_mean",
                           "thm1_beta_empirical_sd", "thm1_beta_certified_mean", "thm1_beta_certified_sd",
                           "nu_mid_mass", "cor2_bound"});
  for (double m : cfg.m_values) {
    for (const auto& model : model_names()) {
      std::vector<double> le, lc, mm, be, bc;
      double nu_mass = kNaN, cor2 = kNaN;
      for (const auto& r : rows) {
        if (r.m != m || r.model != model) continue;
        nu_mass = r.nu_mid_mass;
        cor2 = r.cor2_bound;
        if (r.status != "ok") continue;
        le.push_back(r.lip_empirical);
        lc.push_back(r.lip_certified);
        mm.push_back(r.mass_mid);
        be.push_back(r.thm1_beta_empirical);
        bc.push_back(r.thm1_beta_certified);
      }
      out.prefix(s);
      s.cell(m).cell(model).cell(static_cast<std::uint64_t>(le.size()));
      for (const auto& v : {le, lc, mm, be, bc}) {
        const MeanSd ms = mean_sd(v);
        s.cell(ms.n ? ms.mean : kNaN).cell(ms.sd);
      }
      s.cell(nu_mass).cell(cor2);
      s.end_row();
    }
  }
  out.save(s, "fig3_summary.csv", res);

  LinePlotSpec lip;
  lip.title = "Lipschitz constant against m";
  lip.x_column = "m";
  lip.x_label = "m";
  lip.y_label = "Lipschitz constant";
  for (const auto& model : model_names()) {
    lip.series.push_back({"lip_empirical_mean", "lip_empirical_sd", model, "model", model});
  }
  lip.series.push_back({"cor2_bound", "", "two-Gaussian lower bound", "model", "vae"});
  out.plot("fig3_summary.csv", lip, "fig3_lipschitz.svg", res);

  LinePlotSpec mass;
  mass.title = "Mass on [-m/2, m/2]";
  mass.x_column = "m";
  mass.x_label = "m";
  mass.y_label = "mass";
  mass.y_scale = YScale::linear;
  for (const auto& model : model_names()) {
    mass.series.push_back({"mass_mid_mean", "mass_mid_sd", model, "model", model});
  }
  mass.series.push_back({"thm1_beta_empirical_mean", "thm1_beta_empirical_sd", "vae bound", "model", "vae"});
  mass.series.push_back({"thm1_beta_empirical_mean", "thm1_beta_empirical_sd", "gan bound", "model", "gan"});
  out.plot("fig3_summary.csv", mass, "fig3_mass.svg", res);
}

void preset_gan_lipschitz(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      if (cfg.preset == "fig4") {
        CellSpec c;
        c.m = m;
        c.seed = seed;
        c.kind = gen::ModelKind::gan;
        c.variant = gen::GanVariant::sn_generator;
        cells.push_back(c);
      }
      for (double L : cfg.penalty_lips) {
        CellSpec c;
        c.m = m;
        c.seed = seed;
        c.kind = gen::ModelKind::gan;
        c.variant = gen::GanVariant::gradient_penalty;
        c.penalty_lip = L;
        cells.push_back(c);
      }
    }
  }
  const auto results = run_cells(cfg, cells, log);
  CsvWriter w = out.table({"m", "seed", "model", "variant", "penalty_lip", "epochs", "lip_empirical", "lip_certified",
                           "lip_certified_max_epoch", "mass_mid", "left_fraction", "near_left_mass",
                           "near_right_mass", "major_mode_fraction", "status"});
  CsvWriter h = out.table(hist_columns());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const bool ok = r.record.status == gen::RunStatus::ok;
    double cert_max = 0.0;
    for (const auto& e : r.record.metrics) cert_max = std::max(cert_max, e.lip_certified);
    const double left = ok ? mode_proportion(r.samples, 0.0) : kNaN;
    out.prefix(w);
    w.cell(c.m).cell(c.seed).cell("gan").cell(gen::to_string(c.variant));
    w.cell(c.variant == gen::GanVariant::gradient_penalty ? c.penalty_lip : kNaN);
    w.cell(static_cast<std::uint64_t>(r.record.metrics.size()));
    w.cell(ok ? r.lip.empirical_lower : kNaN).cell(ok ? r.lip.certified_upper : kNaN).cell(cert_max);
    w.cell(ok ? interval_mass(r.samples, -c.m / 2.0, c.m / 2.0) : kNaN).cell(left);
    w.cell(ok ? near_mass(r.samples, -c.m) : kNaN).cell(ok ? near_mass(r.samples, c.m) : kNaN);
    w.cell(ok ? std::max(left, 1.0 - left) : kNaN).cell(gen::to_string(r.record.status));
    w.end_row();
    if (c.seed == cfg.seeds.front()) histogram_rows(out, h, cfg, c, r, CellSpec(c).label());
  }
  out.save(w, cfg.preset + ".csv", res);
  out.save(h, cfg.preset + "_hist.csv", res);
  const CsvTable t = read_csv(out.path(cfg.preset + "_hist.csv"));
  std::vector<std::string> labels;
  for (const auto& l : t.strings("model")) {
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  }
  for (const auto& l : labels) {
    HistogramPlotSpec spec;
    spec.title = l;
    spec.overlay_column = "nu_density";
    spec.filter_column = "model";
    spec.filter_value = l;
    std::string file = cfg.preset + "_" + l + ".svg";
    std::replace(file.begin(), file.end(), ':', '_');
    std::replace(file.begin(), file.end(), '=', '_');
    out.plot(cfg.preset + "_hist.csv", spec, file, res);
  }
}

void preset_fig5(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      for (int depth : cfg.depths) {
        for (auto kind : {gen::ModelKind::vae, gen::ModelKind::gan}) {
          CellSpec c;
          c.m = m;
          c.seed = seed;
          c.kind = kind;
          c.variant = cfg.gan_variant;
          c.shape = {1, 128};
          for (int k = 1; k < depth; ++k) c.shape.push_back(256);
          c.shape.push_back(1);
          cells.push_back(c);
        }
      }
    }
  }
  const auto results = run_cells(cfg, cells, log);
  CsvWriter d = out.table({"m", "seed", "model", "depth", "epochs", "lip_empirical", "lip_certified", "mass_mid",
                           "status"});
  CsvWriter e = out.table({"m", "seed", "model", "depth", "epoch", "lip_empirical", "lip_certified", "mass_mid"});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const bool ok = r.record.status == gen::RunStatus::ok;
    const auto depth = static_cast<std::uint64_t>(c.shape.size() - 2);
    out.prefix(d);
    d.cell(c.m).cell(c.seed).cell(gen::to_string(c.kind)).cell(depth);
    d.cell(static_cast<std::uint64_t>(r.record.metrics.size()));
    d.cell(ok ? r.lip.empirical_lower : kNaN).cell(ok ? r.lip.certified_upper : kNaN);
    d.cell(ok ? interval_mass(r.samples, -c.m / 2.0, c.m / 2.0) : kNaN).cell(gen::to_string(r.record.status));
    d.end_row();
    for (const auto& em : r.record.metrics) {
      out.prefix(e);
      e.cell(c.m).cell(c.seed).cell(gen::to_string(c.kind)).cell(depth).cell(static_cast<std::uint64_t>(em.epoch));
      e.cell(em.lip_empirical).cell(em.lip_certified).cell(em.mass_mid);
      e.end_row();
    }
  }
  out.save(d, "fig5_depth.csv", res);
  out.save(e, "fig5_epochs.csv", res);

  auto summarize = [&](const std::string& src, const std::string& key, const std::string& dst) {
    const CsvTable t = read_csv(out.path(src));
    const auto keys = t.numbers(key);
    const auto models = t.strings("model");
    const auto lips = t.numbers("lip_empirical");
    const auto depths = t.numbers("depth");
    std::vector<double> uniq = keys;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    CsvWriter s = out.table({key, "model", "lip_empirical_mean", "lip_empirical_sd"});
    for (double k : uniq) {
      for (const std::string model : {"vae", "gan"}) {
        std::vector<double> v;
        for (std::size_t i = 0; i < keys.size(); ++i) {
          // The epoch sweep uses the base depth only.
          if (key == "epoch" && depths[i] != 2.0) continue;
          if (keys[i] == k && models[i] == model) v.push_back(lips[i]);
        }
        if (v.empty()) continue;
        const MeanSd ms = mean_sd(v);
        out.prefix(s);
        s.cell(k).cell(model).cell(ms.mean).cell(ms.sd);
        s.end_row();
      }
    }
    out.save(s, dst, res);
  };
  summarize("fig5_depth.csv", "depth", "fig5_depth_summary.csv");
  summarize("fig5_epochs.csv", "epoch", "fig5_epochs_summary.csv");
  for (const auto& [csv, key, svg] : {std::tuple<std::string, std::string, std::string>{"fig5_depth_summary.csv",
                                                                                         "depth", "fig5_depth.svg"},
                                      {"fig5_epochs_summary.csv", "epoch", "fig5_epochs.svg"}}) {
    LinePlotSpec spec;
    spec.title = "Lipschitz constant against " + key;
    spec.x_column = key;
    spec.x_label = key;
    spec.y_label = "Lipschitz constant";
    for (const std::string model : {"vae", "gan"}) {
      spec.series.push_back({"lip_empirical_mean", "lip_empirical_sd", model, "model", model});
    }
    out.plot(csv, spec, svg, res);
  }
}

void preset_fig6(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  const nn::SkipKind kinds[] = {nn::SkipKind::none, nn::SkipKind::residual, nn::SkipKind::dense_concat};
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      for (auto skip : kinds) {
        for (auto kind : {gen::ModelKind::vae, gen::ModelKind::gan}) {
          CellSpec c;
          c.m = m;
          c.seed = seed;
          c.kind = kind;
          c.variant = cfg.gan_variant;
          c.shape = cfg.skip_backbone;
          c.skip = skip;
          cells.push_back(c);
        }
      }
    }
  }
  const auto results = run_cells(cfg, cells, log);
  CsvWriter w = out.table({"m", "seed", "model", "skip", "epochs", "lip_empirical", "lip_certified", "mass_mid",
                           "status"});
  CsvWriter h = out.table(hist_columns());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    const bool ok = r.record.status == gen::RunStatus::ok;
    out.prefix(w);
    w.cell(c.m).cell(c.seed).cell(gen::to_string(c.kind)).cell(nn::to_string(c.skip));
    w.cell(static_cast<std::uint64_t>(r.record.metrics.size()));
    w.cell(ok ? r.lip.empirical_lower : kNaN).cell(ok ? r.lip.certified_upper : kNaN);
    w.cell(ok ? interval_mass(r.samples, -c.m / 2.0, c.m / 2.0) : kNaN).cell(gen::to_string(r.record.status));
    w.end_row();
    if (c.seed == cfg.seeds.front()) {
      histogram_rows(out, h, cfg, c, r, gen::to_string(c.kind) + ":" + nn::to_string(c.skip));
    }
  }
  out.save(w, "fig6.csv", res);
  out.save(h, "fig6_hist.csv", res);
  for (auto skip : kinds) {
    for (const std::string model : {"vae", "gan"}) {
      HistogramPlotSpec spec;
      spec.title = model + " with " + nn::to_string(skip) + " skips";
      spec.overlay_column = "nu_density";
      spec.filter_column = "model";
      spec.filter_value = model + ":" + nn::to_string(skip);
      out.plot("fig6_hist.csv", spec, "fig6_" + model + "_" + nn::to_string(skip) + ".svg", res);
    }
  }
}

void preset_figS3(const ExperimentConfig& cfg, const Output& out, ReproductionResult& res, std::ostream* log) {
  std::vector<CellSpec> cells;
  for (double m : cfg.m_values) {
    for (std::uint64_t seed : cfg.seeds) {
      CellSpec c;
      c.m = m;
      c.seed = seed;
      c.kind = gen::ModelKind::vae;
      cells.push_back(c);
    }
  }
  const auto results = run_cells(cfg, cells, log);
  CsvWriter w = out.table({"m", "seed", "lip_empirical", "lip_certified", "tv_empirical", "kl_empirical",
                           "tv_bound_empirical_lip", "tv_bound_certified_lip", "kl_bound_empirical_lip",
                           "kl_bound_certified_lip", "twogauss_tv_bound_empirical_lip", "twogauss_tv_bound_certified_lip",
                           "status"});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const CellSpec& c = cells[i];
    const CellResult& r = results[i];
    out.prefix(w);
    w.cell(c.m).cell(c.seed);
    if (r.record.status != gen::RunStatus::ok) {
      for (int k = 0; k < 10; ++k) w.cell(kNaN);
      w.cell("diverged");
      w.end_row();
      continue;
    }
    const GaussianMixture nu = GaussianMixture::balanced(c.m);
    const EmpiricalHistogram hist = build_histogram(r.samples, cfg.hist_bins);
    const auto grid = default_r_grid(c.m, cfg.r_grid_points);
    const TwoModeSpec two{2.0 * c.m, 1.0, 0.5};
    w.cell(r.lip.empirical_lower).cell(r.lip.certified_upper);
    w.cell(empirical_tv(hist, nu)).cell(empirical_kl(hist, nu).value);
    w.cell(tv_lower_bound_search(r.lip.empirical_lower, r.samples, nu, grid).value);
    w.cell(tv_lower_bound_search(r.lip.certified_upper, r.samples, nu, grid).value);
    w.cell(kl_lower_bound_search(r.lip.empirical_lower, r.samples, nu, grid).value);
    w.cell(kl_lower_bound_search(r.lip.certified_upper, r.samples, nu, grid).value);
    w.cell(tv_lower_bound_two_gaussians(two, r.lip.empirical_lower).value);
    w.cell(tv_lower_bound_two_gaussians(two, r.lip.certified_upper).value);
    w.cell("ok");
    w.end_row();
  }
  out.save(w, "figS3.csv", res);

  // Plotted bounds are clipped at zero; the raw values stay in figS3.csv.
  const CsvTable t = read_csv(out.path("figS3.csv"));
  const std::vector<std::string> cols = {"tv_empirical", "tv_bound_empirical_lip", "twogauss_tv_bound_empirical_lip",
                                         "kl_empirical", "kl_bound_empirical_lip"};
  std::vector<std::string> header = {"m"};
  for (const auto& col : cols) {
    header.push_back(col + "_mean");
    header.push_back(col + "_sd");
  }
  CsvWriter s = out.table(header);
  const auto ms = t.numbers("m");
  const auto status = t.strings("status");
  for (double m : cfg.m_values) {
    out.prefix(s);
    s.cell(m);
    for (const auto& col : cols) {
      const auto v = t.numbers(col);
      std::vector<double> sel;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (ms[i] == m && status[i] == "ok") sel.push_back(std::max(v[i], 0.0));
      }
      const MeanSd st = mean_sd(sel);
      s.cell(st.n ? st.mean : kNaN).cell(st.sd);
    }
    s.end_row();
  }
  out.save(s, "figS3_summary.csv", res);
  LinePlotSpec tv;
  tv.title = "Total variation and lower bounds";
  tv.x_column = "m";
  tv.x_label = "m";
  tv.y_label = "TV";
  tv.y_scale = YScale::linear;
  tv.series = {{"tv_empirical_mean", "tv_empirical_sd", "vae", "", ""},
               {"tv_bound_empirical_lip_mean", "tv_bound_empirical_lip_sd", "search bound", "", ""},
               {"twogauss_tv_bound_empirical_lip_mean", "twogauss_tv_bound_empirical_lip_sd", "two-Gaussian bound", "", ""}};
  out.plot("figS3_summary.csv", tv, "figS3_tv.svg", res);
  LinePlotSpec kl;
  kl.title = "Kullback-Leibler divergence and lower bound";
  kl.x_column = "m";
  kl.x_label = "m";
  kl.y_label = "KL";
  kl.series = {{"kl_empirical_mean", "kl_empirical_sd", "vae", "", ""},
               {"kl_bound_empirical_lip_mean", "kl_bound_empirical_lip_sd", "search bound", "", ""}};
  out.plot("figS3_summary.csv", kl, "figS3_kl.svg", res);
}

}  // namespace

std::string CellSpec::label() const {
  std::string s = gen::to_string(kind);
  if (kind == gen::ModelKind::gan) {
    s += ":" + gen::to_string(variant);
    if (variant == gen::GanVariant::gradient_penalty) s += ":L=" + format_double(penalty_lip);
  }
  if (!shape.empty()) s += ":shape=" + shape_text(shape);
  if (skip != nn::SkipKind::none) s += ":skip=" + nn::to_string(skip);
  return s;
}

std::uint64_t dataset_seed(std::uint64_t seed, double m) { return derive_seed(seed, std::bit_cast<std::uint64_t>(m)); }

std::uint64_t cell_seed(const CellSpec& cell) { return derive_seed(dataset_seed(cell.seed, cell.m), fnv1a(cell.label())); }

CellResult run_cell(const ExperimentConfig& cfg, const CellSpec& cell) {
  const GaussianMixture nu = GaussianMixture::balanced(cell.m);
  const auto data = gen::sample_dataset(nu, cfg.dataset_size, dataset_seed(cell.seed, cell.m));
  gen::TrainConfig t = cfg.train;
  t.kind = cell.kind;
  t.variant = cell.variant;
  t.gp_lip = cell.penalty_lip;
  t.separation = 2.0 * cell.m;
  if (!cell.shape.empty()) t.shape = cell.shape;
  if (cell.skip != nn::SkipKind::none) t.skip = cell.skip;
  t.seed = cell_seed(cell);
  CellResult out;
  out.record = gen::train(data, t);
  if (out.record.status != gen::RunStatus::ok) return out;
  try {
    out.samples = gen::generate(out.record.model, cfg.generated_samples, derive_seed(t.seed, 1));
  } catch (const NumericError& e) {
    out.record.status = gen::RunStatus::diverged;
    out.record.message = e.what();
    return out;
  }
  if (cell.kind == gen::ModelKind::sgm) {
    out.lip = gen::score_lipschitz(*out.record.model.sgm, -cell.m - 3.0, cell.m + 3.0, cfg.score_lip_grid);
  } else {
    out.lip = empirical_lipschitz(out.record.model.pushforward(), cfg.lip_lo, cfg.lip_hi, cfg.lip_grid);
  }
  return out;
}

std::vector<CellResult> run_cells(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells, std::ostream* log) {
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        results[i] = run_cell(cfg, cells[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = cells.size();
        return;
      }
      if (log != nullptr) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard<std::mutex> lock(log_mutex);
        *log << "[" << cfg.preset << "] " << i + 1 << "/" << cells.size() << " m=" << format_double(cells[i].m)
             << " seed=" << cells[i].seed << " " << cells[i].label() << " "
             << gen::to_string(results[i].record.status) << " " << static_cast<int>(secs) << "s" << std::endl;
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, std::max<std::size_t>(cells.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::vector<std::string> fig3_header() {
  return {"preset",     "code_version", "config_hash",  "m",
          "seed",       "model",        "variant",      "epochs",
          "lip_empirical", "lip_certified", "mass_mid", "thm1_beta_empirical",
          "thm1_beta_certified", "nu_mid_mass", "cor2_bound", "status"};
}

double thm1_beta(double lip, std::span<const double> samples, double m) {
  if (!(lip > 0.0) || !std::isfinite(lip)) return kNaN;
  return min_interpolation_mass({lip, mode_proportion(samples, -m / 2.0), m});
}

Fig3Row make_fig3_row(const CellSpec& cell, const CellResult& result) {
  Fig3Row r;
  r.m = cell.m;
  r.seed = cell.seed;
  r.model = gen::to_string(cell.kind);
  r.variant = cell.kind == gen::ModelKind::gan ? gen::to_string(cell.variant) : "default";
  r.epochs = result.record.metrics.size();
  r.nu_mid_mass = mixture_mass_interval(GaussianMixture::balanced(cell.m), -cell.m / 2.0, cell.m / 2.0);
  r.cor2_bound = lip_lower_bound_two_gaussians({2.0 * cell.m, 1.0, 0.5});
  r.status = gen::to_string(result.record.status);
  if (result.record.status != gen::RunStatus::ok) {
    r.lip_empirical = r.lip_certified = r.mass_mid = r.thm1_beta_empirical = r.thm1_beta_certified = kNaN;
    return r;
  }
  r.lip_empirical = result.lip.empirical_lower;
  r.lip_certified = result.lip.certified_upper;
  r.mass_mid = interval_mass(result.samples, -cell.m / 2.0, cell.m / 2.0);
  if (cell.kind == gen::ModelKind::sgm) {
    // The score network is not the push-forward map; the bound does not apply.
    r.thm1_beta_empirical = r.thm1_beta_certified = kNaN;
  } else {
    r.thm1_beta_empirical = thm1_beta(r.lip_empirical, result.samples, cell.m);
    r.thm1_beta_certified = thm1_beta(r.lip_certified, result.samples, cell.m);
  }
  return r;
}

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++out.n;
  }
  if (out.n == 0) {
    out.mean = kNaN;
    out.sd = kNaN;
    return out;
  }
  out.mean = sum / static_cast<double>(out.n);
  if (out.n < 2) {
    out.sd = kNaN;
    return out;
  }
  double ss = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) ss += (v - out.mean) * (v - out.mean);
  }
  out.sd = std::sqrt(ss / static_cast<double>(out.n - 1));
  return out;
}

ReproductionResult run_reproduction(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  ReproductionResult res;
  Output out(cfg);
  if (cfg.preset == "fig2" || cfg.preset == "figS4") {
    preset_histograms(cfg, out, res, log);
  } else if (cfg.preset == "fig3") {
    preset_fig3(cfg, out, res, log);
  } else if (cfg.preset == "fig4" || cfg.preset == "figS5") {
    if (cfg.penalty_lips.empty() && cfg.preset == "figS5") throw ConfigError("figS5: penalty_lips is empty");
    preset_gan_lipschitz(cfg, out, res, log);
  } else if (cfg.preset == "fig5") {
    if (cfg.depths.empty()) throw ConfigError("fig5: fig5.depths is empty");
    preset_fig5(cfg, out, res, log);
  } else if (cfg.preset == "fig6") {
    if (cfg.skip_backbone.size() < 3) throw ConfigError("fig6: backbone needs hidden layers");
    preset_fig6(cfg, out, res, log);
  } else if (cfg.preset == "figS3") {
    preset_figS3(cfg, out, res, log);
  } else {
    throw ConfigError("reproduce: unknown preset '" + cfg.preset + "'");
  }
  out.metadata(res);
  return res;
}

}  // namespace pflab::lab
