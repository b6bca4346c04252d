// pflab command-line tool: closed-form bounds, training, sampling, estimation
// and figure reproduction.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pflab/bounds.hpp"
#include "pflab/errors.hpp"
#include "pflab/estimators.hpp"
#include "pflab/gauss.hpp"
#include "pflab/genmodels.hpp"
#include "pflab/lab/config.hpp"
#include "pflab/lab/csv.hpp"
#include "pflab/lab/reproduce.hpp"

namespace fs = std::filesystem;
using pflab::lab::format_double;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string scale = "ci";
  std::string config;
};

// ---------------------------------------------------------------- helpers

std::string g(double v) { return format_double(v); }

std::vector<double> read_samples(const std::string& path) {
  const auto table = pflab::lab::read_csv(path);
  if (!table.has_column("x")) throw pflab::ConfigError(path + ": expected a column named x");
  return table.numbers("x");
}

void write_samples(const std::string& path, const std::vector<double>& xs) {
  pflab::lab::CsvWriter w({"x"});
  for (double x : xs) w.cell(x).end_row();
  if (path.empty()) {
    std::cout << w.str();
  } else {
    w.write(path);
  }
}

std::vector<std::vector<double>> parse_matrix(const std::string& s) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(s);
  std::string row;
  while (std::getline(ss, row, ';')) rows.push_back(pflab::lab::parse_double_list(row));
  return rows;
}

/// One `key=value` line echoing the inputs next to the result.
class Report {
 public:
  Report& add(const std::string& k, const std::string& v) {
    keys_.push_back(k);
    values_.push_back(v);
    return *this;
  }
  Report& add(const std::string& k, double v) { return add(k, g(v)); }

  void emit(const std::string& csv_path) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) std::cout << (i ? " " : "") << keys_[i] << "=" << values_[i];
    std::cout << "\n";
    if (csv_path.empty()) return;
    pflab::lab::CsvWriter w(keys_);
    for (const auto& v : values_) w.cell(v);
    w.end_row();
    w.write(csv_path);
  }

 private:
  std::vector<std::string> keys_;
  std::vector<std::string> values_;
};

void add_report(Report& r, const pflab::BoundReport& b) {
  r.add("value", b.value).add("vacuous", b.vacuous ? "true" : "false");
  if (!b.witness) return;
  if (!b.witness->subset.empty()) {
    std::string s;
    for (std::size_t i = 0; i < b.witness->subset.size(); ++i) {
      s += (i ? "," : "") + std::to_string(b.witness->subset[i] + 1);
    }
    r.add("subset", s);
  } else {
    r.add("boundary", b.witness->boundary).add("r", b.witness->r);
  }
}

// Model directory: model.txt with the settings needed to sample, network.pfnet.
void save_model(const std::string& dir, const pflab::gen::TrainedModel& model) {
  fs::create_directories(dir);
  std::ofstream meta(fs::path(dir) / "model.txt", std::ios::binary);
  meta << "kind = " << pflab::gen::to_string(model.kind) << "\n";
  std::ofstream net(fs::path(dir) / "network.pfnet", std::ios::binary);
  if (model.kind == pflab::gen::ModelKind::sgm) {
    const auto& s = *model.sgm;
    std::vector<double> sig = s.schedule.sigmas;
    std::string list;
    for (std::size_t i = 0; i < sig.size(); ++i) list += (i ? "," : "") + g(sig[i]);
    meta << "sigmas = " << list << "\n";
    meta << "langevin.epsilon = " << g(s.langevin.epsilon) << "\n";
    meta << "langevin.steps_per_level = " << s.langevin.steps_per_level << "\n";
    meta << "langevin.normalization = " << pflab::gen::to_string(s.langevin.normalization) << "\n";
    pflab::nn::save_network(net, s.score_net);
  } else {
    pflab::nn::save_network(net, model.pushforward());
  }
}

pflab::gen::TrainedModel load_model(const std::string& dir) {
  const auto kv = pflab::lab::KeyValueConfig::load((fs::path(dir) / "model.txt").string()).entries();
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw pflab::ConfigError(dir + "/model.txt: missing key " + k);
    return it->second;
  };
  std::ifstream is(fs::path(dir) / "network.pfnet", std::ios::binary);
  if (!is) throw pflab::ConfigError(dir + ": cannot open network.pfnet");
  pflab::gen::TrainedModel m;
  m.kind = pflab::gen::parse_model_kind(get("kind"));
  pflab::nn::Network net = pflab::nn::load_network(is);
  switch (m.kind) {
    case pflab::gen::ModelKind::vae: {
      pflab::gen::VaeModel v = pflab::gen::make_vae(0);
      v.decoder = std::move(net);
      m.vae = std::move(v);
      break;
    }
    case pflab::gen::ModelKind::gan: {
      // The stored network is already the effective generator.
      pflab::gen::GanModel gm = pflab::gen::make_gan(pflab::gen::GanVariant::vanilla, 0);
      gm.generator = std::move(net);
      m.gan = std::move(gm);
      break;
    }
    case pflab::gen::ModelKind::sgm: {
      pflab::gen::SgmModel s;
      s.score_net = std::move(net);
      s.schedule.sigmas = pflab::lab::parse_double_list(get("sigmas"));
      s.langevin.epsilon = std::stod(get("langevin.epsilon"));
      s.langevin.steps_per_level = std::stoull(get("langevin.steps_per_level"));
      s.langevin.normalization = pflab::gen::parse_langevin_normalization(get("langevin.normalization"));
      s.validate();
      m.sgm = std::move(s);
      break;
    }
  }
  return m;
}

pflab::lab::ExperimentConfig experiment(const Globals& gl, const std::string& preset) {
  auto cfg = pflab::lab::preset_config(preset, pflab::lab::parse_scale(gl.scale));
  if (!gl.config.empty()) pflab::lab::apply_overrides(cfg, pflab::lab::KeyValueConfig::load(gl.config));
  pflab::lab::apply_scale_caps(cfg);
  if (!gl.out.empty()) cfg.output_dir = gl.out;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- bounds

void setup_bounds(CLI::App& app, Globals& gl) {
  auto* bounds = app.add_subcommand("bounds", "Closed-form lower bounds");
  bounds->require_subcommand(1);

  struct Args {
    double sep = 0, sigma = 1, lambda = 0.5, lambda_push = 0.5, lip = 1, dist = 0, m = 0;
    std::string masses, distances, samples;
    std::size_t grid = 200001, r_points = 400;
  };
  auto a = std::make_shared<Args>();

  auto* cor2 = bounds->add_subcommand("cor2", "Smallest Lipschitz constant onto a two-Gaussian mixture");
  cor2->add_option("--sep", a->sep, "Mode separation")->required();
  cor2->add_option("--sigma", a->sigma, "Component standard deviation");
  cor2->add_option("--lambda", a->lambda, "Weight of the first mode");
  cor2->callback([a, &gl] {
    const pflab::TwoModeSpec spec{a->sep, a->sigma, a->lambda};
    Report r;
    r.add("bound", "cor2").add("sep", a->sep).add("sigma", a->sigma).add("lambda", a->lambda);
    r.add("value", pflab::lip_lower_bound_two_gaussians(spec));
    r.add("log_value", pflab::log_lip_lower_bound_two_gaussians(spec));
    r.emit(gl.out);
  });

  auto* cor3 = bounds->add_subcommand("cor3", "Largest slope of the monotone transport onto the mixture");
  cor3->add_option("--sep", a->sep, "Mode separation")->required();
  cor3->add_option("--sigma", a->sigma, "Component standard deviation");
  cor3->add_option("--lambda", a->lambda, "Weight of the first mode");
  cor3->add_option("--grid", a->grid, "Grid points on [-8, 8]");
  cor3->callback([a, &gl] {
    const pflab::TwoModeSpec spec{a->sep, a->sigma, a->lambda};
    spec.validate();
    const auto map = pflab::monge_map_1d(spec.mixture(), -8.0, 8.0, a->grid);
    Report r;
    r.add("bound", "cor3").add("sep", a->sep).add("sigma", a->sigma).add("lambda", a->lambda);
    r.add("grid", std::to_string(a->grid)).add("derivative_sup", map.derivative_sup);
    r.add("log_derivative_sup", map.log_derivative_sup).add("argsup", map.argsup);
    r.emit(gl.out);
  });

  auto* tv2 = bounds->add_subcommand("tv-twogauss", "TV lower bound for a two-Gaussian target");
  tv2->add_option("--sep", a->sep, "Mode separation")->required();
  tv2->add_option("--sigma", a->sigma, "Component standard deviation");
  tv2->add_option("--lambda", a->lambda, "Weight of the first mode");
  tv2->add_option("--lip", a->lip, "Lipschitz constant of the generator")->required();
  tv2->callback([a, &gl] {
    Report r;
    r.add("bound", "tv-twogauss").add("sep", a->sep).add("sigma", a->sigma).add("lambda", a->lambda);
    r.add("lip", a->lip);
    add_report(r, pflab::tv_lower_bound_two_gaussians({a->sep, a->sigma, a->lambda}, a->lip));
    r.emit(gl.out);
  });

  auto* tvd = bounds->add_subcommand("tv-disconnected", "TV lower bound for two disconnected supports");
  tvd->add_option("--lambda", a->lambda, "Mass of the first support")->required();
  tvd->add_option("--dist", a->dist, "Distance between the supports")->required();
  tvd->add_option("--lip", a->lip, "Lipschitz constant of the generator")->required();
  tvd->callback([a, &gl] {
    Report r;
    r.add("bound", "tv-disconnected").add("lambda", a->lambda).add("dist", a->dist).add("lip", a->lip);
    add_report(r, pflab::tv_lower_bound_disconnected(a->lambda, a->dist, a->lip));
    r.emit(gl.out);
  });

  auto* tvm = bounds->add_subcommand("tv-manifolds", "TV lower bound for several disconnected manifolds");
  tvm->add_option("--masses", a->masses, "Comma-separated masses")->required();
  tvm->add_option("--distances", a->distances, "Distance matrix, rows separated by ';'")->required();
  tvm->add_option("--lip", a->lip, "Lipschitz constant of the generator")->required();
  tvm->callback([a, &gl] {
    const pflab::ManifoldFamilySpec spec{pflab::lab::parse_double_list(a->masses), parse_matrix(a->distances)};
    Report r;
    r.add("bound", "tv-manifolds").add("masses", a->masses).add("distances", a->distances).add("lip", a->lip);
    add_report(r, pflab::tv_lower_bound_multimanifold(spec, a->lip));
    r.emit(gl.out);
  });

  auto* kl2 = bounds->add_subcommand("kl-twogauss", "KL lower bound for a two-Gaussian target");
  kl2->add_option("--sep", a->sep, "Mode separation")->required();
  kl2->add_option("--sigma", a->sigma, "Component standard deviation");
  kl2->add_option("--lambda", a->lambda, "Weight of the first mode");
  kl2->add_option("--lip", a->lip, "Lipschitz constant of the generator")->required();
  kl2->add_option("--lambda-push", a->lambda_push, "Push-forward mass of the first half-space")->required();
  kl2->callback([a, &gl] {
    Report r;
    r.add("bound", "kl-twogauss").add("sep", a->sep).add("sigma", a->sigma).add("lambda", a->lambda);
    r.add("lip", a->lip).add("lambda_push", a->lambda_push);
    add_report(r, pflab::kl_lower_bound_two_gaussians({a->sep, a->sigma, a->lambda}, a->lip, a->lambda_push));
    r.emit(gl.out);
  });

  for (const std::string name : {"tv-search", "kl-search"}) {
    auto* s = bounds->add_subcommand(name, name == "tv-search" ? "TV lower bound searched over half-lines"
                                                               : "KL lower bound searched over half-lines");
    s->add_option("--samples", a->samples, "CSV file with a column x of generated samples")->required();
    s->add_option("--m", a->m, "Target is (N(-m,1) + N(m,1))/2")->required();
    s->add_option("--lip", a->lip, "Lipschitz constant of the generator")->required();
    s->add_option("--r-points", a->r_points, "Search grid size on [0.1, 4m]");
    s->callback([a, &gl, name] {
      const auto xs = read_samples(a->samples);
      const auto nu = pflab::GaussianMixture::balanced(a->m);
      const auto grid = pflab::default_r_grid(a->m, a->r_points);
      Report r;
      r.add("bound", name).add("samples", a->samples).add("n", std::to_string(xs.size())).add("m", a->m);
      r.add("lip", a->lip);
      add_report(r, name == "tv-search" ? pflab::tv_lower_bound_search(a->lip, xs, nu, grid)
                                        : pflab::kl_lower_bound_search(a->lip, xs, nu, grid));
      r.emit(gl.out);
    });
  }
}

// ---------------------------------------------------------------- train / sample / estimate

void setup_train(CLI::App& app, Globals& gl) {
  struct Args {
    std::string model = "vae", variant = "vanilla", data, shape, skip = "none", model_dir;
    double m = 10.0, gp_lip = 1.0;
    std::optional<std::size_t> epochs, batch;
    std::size_t n = 0;
  };
  auto a = std::make_shared<Args>();
  auto* t = app.add_subcommand("train", "Train one model and save it with its per-epoch metrics");
  t->add_option("--model", a->model, "vae, gan or sgm");
  t->add_option("--variant", a->variant, "GAN variant: vanilla, hinge, sn_generator, gradient_penalty");
  t->add_option("--m", a->m, "Target half-separation when no --data is given");
  t->add_option("--data", a->data, "CSV file with a column x of training samples");
  t->add_option("--n", a->n, "Dataset size when sampling the target (default from --scale)");
  t->add_option("--epochs", a->epochs, "Epochs");
  t->add_option("--batch-size", a->batch, "Batch size");
  t->add_option("--shape", a->shape, "Generator shape, e.g. 1,128,256,1");
  t->add_option("--skip", a->skip, "none, residual or dense_concat");
  t->add_option("--gp-lip", a->gp_lip, "Target slope of the gradient penalty");
  t->add_option("--model-dir", a->model_dir, "Where to save the model (default: --out or ./model)");
  t->callback([a, &gl] {
    auto cfg = experiment(gl, "custom");
    pflab::gen::TrainConfig tc = cfg.train;
    tc.kind = pflab::gen::parse_model_kind(a->model);
    tc.variant = pflab::gen::parse_gan_variant(a->variant);
    if (a->epochs) tc.epochs = *a->epochs;
    if (a->batch) tc.batch_size = *a->batch;
    if (!a->shape.empty()) tc.shape = pflab::lab::parse_int_list(a->shape);
    tc.skip = pflab::nn::parse_skip_kind(a->skip);
    tc.gp_lip = a->gp_lip;
    tc.separation = 2.0 * a->m;
    tc.seed = gl.seed;
    std::vector<double> data;
    if (!a->data.empty()) {
      data = read_samples(a->data);
    } else {
      const std::size_t n = a->n ? a->n : cfg.dataset_size;
      data = pflab::gen::sample_dataset(pflab::GaussianMixture::balanced(a->m), n,
                                        pflab::lab::dataset_seed(gl.seed, a->m));
    }
    const std::string dir = !a->model_dir.empty() ? a->model_dir : (!gl.out.empty() ? gl.out : "model");
    std::cout << "train model=" << a->model << " variant=" << a->variant << " m=" << g(a->m)
              << " n=" << data.size() << " epochs=" << tc.epochs << " batch_size=" << tc.batch_size
              << " seed=" << gl.seed << " dir=" << dir << std::endl;
    const auto rec = pflab::gen::train(data, tc);
    fs::create_directories(dir);
    pflab::lab::CsvWriter w({"epoch", "loss", "aux_loss", "lip_empirical", "lip_certified", "mass_mid"});
    for (const auto& e : rec.metrics) {
      w.cell(static_cast<std::uint64_t>(e.epoch)).cell(e.loss).cell(e.aux_loss).cell(e.lip_empirical);
      w.cell(e.lip_certified).cell(e.mass_mid).end_row();
    }
    w.write((fs::path(dir) / "metrics.csv").string());
    if (!rec.metrics.empty()) {
      const auto& e = rec.metrics.back();
      std::cout << "epoch=" << e.epoch << " loss=" << g(e.loss) << " lip_empirical=" << g(e.lip_empirical)
                << " lip_certified=" << g(e.lip_certified) << " mass_mid=" << g(e.mass_mid) << "\n";
    }
    std::cout << "status=" << pflab::gen::to_string(rec.status) << "\n";
    if (rec.status != pflab::gen::RunStatus::ok) throw pflab::NumericError("training diverged: " + rec.message);
    save_model(dir, rec.model);
  });
}

void setup_sample(CLI::App& app, Globals& gl) {
  struct Args {
    std::string model_dir;
    std::optional<double> m;
    std::size_t n = 10000;
  };
  auto a = std::make_shared<Args>();
  auto* s = app.add_subcommand("sample", "Draw samples from a trained model or from the target mixture");
  s->add_option("--model-dir", a->model_dir, "Directory written by train");
  s->add_option("--m", a->m, "Sample the target (N(-m,1) + N(m,1))/2 instead");
  s->add_option("--n", a->n, "Number of samples");
  s->callback([a, &gl] {
    if (a->model_dir.empty() == !a->m) throw CLI::ValidationError("sample", "give exactly one of --model-dir or --m");
    std::vector<double> xs;
    if (a->m) {
      xs = pflab::gen::sample_dataset(pflab::GaussianMixture::balanced(*a->m), a->n, gl.seed);
    } else {
      xs = pflab::gen::generate(load_model(a->model_dir), a->n, gl.seed);
    }
    write_samples(gl.out, xs);
    if (!gl.out.empty()) std::cout << "wrote n=" << xs.size() << " seed=" << gl.seed << " to " << gl.out << "\n";
  });
}

void setup_estimate(CLI::App& app, Globals& gl) {
  struct Args {
    std::string samples, model_dir;
    double m = 10.0;
    std::size_t bins = 200, lip_grid = pflab::kLipGridPoints;
  };
  auto a = std::make_shared<Args>();
  auto* e = app.add_subcommand("estimate", "Divergences and masses of samples; Lipschitz constant of a model");
  e->add_option("--samples", a->samples, "CSV file with a column x");
  e->add_option("--model-dir", a->model_dir, "Directory written by train");
  e->add_option("--m", a->m, "Target is (N(-m,1) + N(m,1))/2");
  e->add_option("--bins", a->bins, "Histogram bins");
  e->add_option("--lip-grid", a->lip_grid, "Grid points on [-5, 5] for the Lipschitz estimate");
  e->callback([a, &gl] {
    if (a->samples.empty() && a->model_dir.empty()) {
      throw CLI::ValidationError("estimate", "give --samples and/or --model-dir");
    }
    Report r;
    r.add("m", a->m);
    if (!a->samples.empty()) {
      const auto xs = read_samples(a->samples);
      if (xs.empty()) throw pflab::ConfigError(a->samples + ": no samples");
      const auto nu = pflab::GaussianMixture::balanced(a->m);
      const auto hist = pflab::build_histogram(xs, a->bins);
      const auto kl = pflab::empirical_kl(hist, nu);
      r.add("samples", a->samples).add("n", std::to_string(xs.size())).add("bins", std::to_string(a->bins));
      r.add("tv", pflab::empirical_tv(hist, nu)).add("kl", kl.value);
      r.add("mass_mid", pflab::interval_mass(xs, -a->m / 2.0, a->m / 2.0));
      r.add("nu_mid_mass", pflab::mixture_mass_interval(nu, -a->m / 2.0, a->m / 2.0));
      r.add("left_fraction", pflab::mode_proportion(xs, 0.0));
    }
    if (!a->model_dir.empty()) {
      const auto model = load_model(a->model_dir);
      const auto lip = model.kind == pflab::gen::ModelKind::sgm
                           ? pflab::gen::score_lipschitz(*model.sgm, -a->m - 3.0, a->m + 3.0, 2001)
                           : pflab::empirical_lipschitz(model.pushforward(), pflab::kLipGridLo,
                                                        pflab::kLipGridHi, a->lip_grid);
      r.add("model_dir", a->model_dir).add("lip_empirical", lip.empirical_lower);
      r.add("lip_certified", lip.certified_upper);
    }
    r.emit(gl.out);
  });
}

void setup_reproduce(CLI::App& app, Globals& gl) {
  auto threads = std::make_shared<std::size_t>(0);
  auto quiet = std::make_shared<bool>(false);
  auto* rep = app.add_subcommand("reproduce", "Run a figure preset and write CSV and SVG files");
  rep->require_subcommand(1);
  rep->add_option("--threads", *threads, "Worker threads (results do not depend on it)");
  rep->add_flag("--quiet", *quiet, "No progress lines");
  for (const std::string preset : {"fig2", "fig3", "fig4", "fig5", "fig6", "figS3", "figS4", "figS5"}) {
    auto* p = rep->add_subcommand(preset, "Preset " + preset);
    p->callback([&gl, preset, threads, quiet] {
      Globals local = gl;
      if (local.out.empty()) local.out = "out/" + preset;
      auto cfg = experiment(local, preset);
      if (*threads > 0) cfg.threads = *threads;
      std::cout << "reproduce preset=" << preset << " scale=" << pflab::lab::to_string(cfg.scale)
                << " config_hash=" << pflab::lab::config_hash(cfg) << " out=" << cfg.output_dir << std::endl;
      const auto res = pflab::lab::run_reproduction(cfg, *quiet ? nullptr : &std::cerr);
      for (const auto& f : res.files) std::cout << "wrote " << f << "\n";
    });
  }
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep large Eigen temporaries on the heap instead of fresh mappings.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
  CLI::App app("Push-forward lower bounds and generative-model experiments", "pflab");
  app.require_subcommand(1);
  Globals gl;
  app.add_option("--seed", gl.seed, "Root seed")->capture_default_str();
  app.add_option("--out", gl.out, "Output file or directory");
  app.add_option("--scale", gl.scale, "full or ci")->check(CLI::IsMember({"full", "ci"}));
  app.add_option("--config", gl.config, "key = value override file")->check(CLI::ExistingFile);
  app.fallthrough();
  setup_bounds(app, gl);
  setup_train(app, gl);
  setup_sample(app, gl);
  setup_estimate(app, gl);
  setup_reproduce(app, gl);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const pflab::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const pflab::TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
