// spatgev_main.cpp
// Command-line surface: simulate / fit / sample / predict / coverage /
// grid / refit-check. Every run writes its outputs plus a JSON manifest
// (config echo, seed, versions, wall time, convergence diagnostics).

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spatgev/dataio.hpp"
#include "spatgev/posterior.hpp"
#include "spatgev/rng.hpp"
#include "spatgev/simstudy.hpp"

namespace {

using nlohmann::json;
using namespace spatgev;

constexpr const char* kVersion = "0.1.0";

struct ManifestWriter {
  json j;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  ManifestWriter(const std::string& command, const RunConfig& cfg) {
    j["command"] = command;
    j["config"] = json::parse(cfg.to_json());
    j["seed"] = cfg.seed;
    j["version"] = kVersion;
    j["outputs"] = json::array();
  }

  void add_output(const std::string& path) { j["outputs"].push_back(path); }

  void write(const std::string& path) {
    j["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    atomic_write(path, j.dump(2));
  }
};

std::string manifest_path(const std::string& out) {
  return out + ".manifest.json";
}

Coords read_sites_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Coords coords;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("lon,lat", 0) == 0) continue;
    std::istringstream row(line);
    std::string a, b;
    if (!std::getline(row, a, ',') || !std::getline(row, b)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected lon,lat");
    }
    coords.push_back({std::stod(a), std::stod(b)});
  }
  if (coords.empty()) throw ValidationError("no sites in '" + path + "'");
  return coords;
}

SiteDataset load_model_data(const std::string& path, const ModelSpec& spec) {
  SiteDataset data = ingest_csv(path);
  if (spec.transform == Transform::Log) data = log_transform(data);
  return data;
}

json fit_diag_json(const GevFit& fit) {
  return {
      {"converged", fit.fit.converged},
      {"logml", fit.fit.logml},
      {"outer_iterations", fit.fit.diagnostics.outer_iterations},
      {"logml_evaluations", fit.fit.diagnostics.logml_evaluations},
      {"final_grad_norm", fit.fit.diagnostics.final_grad_norm},
      {"v_theta_projected", fit.fit.diagnostics.v_theta_projected},
      {"joint_cov_repaired", fit.joint.repaired},
      {"wall_seconds", fit.fit.diagnostics.wall_seconds},
  };
}

void write_fit_summary(const GevFit& fit, const Coords& coords,
                       const std::string& path) {
  const int n = fit.n_sites;
  const ThetaLayout lay(fit.spec);
  const auto& cov = fit.joint.cov;
  std::ostringstream out;
  out << "site,lon,lat,a_mean,a_sd,b_mean,b_sd\n";
  for (int i = 0; i < n; ++i) {
    const double a_mean = fit.fit.u_hat[i];
    const double a_sd = std::sqrt(std::max(0.0, cov(i, i)));
    double b_mean, b_sd;
    if (fit.spec.b_random) {
      b_mean = fit.fit.u_hat[n + i];
      b_sd = std::sqrt(std::max(0.0, cov(n + i, n + i)));
    } else {
      b_mean = fit.fit.theta_hat[lay.b_fixed];
      b_sd = std::sqrt(std::max(0.0, fit.fit.v_theta(lay.b_fixed, lay.b_fixed)));
    }
    out << i << ',' << format_g17(coords[i].x) << ',' << format_g17(coords[i].y)
        << ',' << format_g17(a_mean) << ',' << format_g17(a_sd) << ','
        << format_g17(b_mean) << ',' << format_g17(b_sd) << '\n';
  }
  atomic_write(path, out.str());
}

int run(int argc, char** argv) {
  CLI::App app{"Spatial GEV models with latent Gaussian processes"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration file")
      ->expected(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a lattice dataset");
  int side = 20;
  double lo = 0.0, hi = 10.0;
  std::string shape_arg = "-2";
  int n_per_site = 1;
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false;
  std::string sim_out = "data.csv", truth_out;
  sim->add_option("--side", side, "Lattice side length");
  sim->add_option("--lo", lo);
  sim->add_option("--hi", hi);
  sim->add_option("--s", shape_arg, "Log shape, or 'gumbel'");
  sim->add_option("--n-per-site", n_per_site);
  sim->add_option("--seed", sim_seed)->each([&](const std::string&) {
    sim_seed_set = true;
  });
  sim->add_option("--out", sim_out);
  sim->add_option("--truth-out", truth_out, "True surfaces CSV");

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit the GEV-GP model");
  std::string fit_data, fit_out = "fit.json", fit_summary;
  std::string model_arg;
  fitc->add_option("--data", fit_data)->required();
  fitc->add_option("--model", model_arg, "m1|m2|m3|m4 (overrides config)");
  fitc->add_option("--out", fit_out);
  fitc->add_option("--summary-out", fit_summary, "Per-site posterior CSV");

  // sample
  auto* samp = app.add_subcommand("sample", "Return-level posterior summaries");
  std::string samp_fit, samp_out = "returns.csv";
  int samp_nsim = 0;
  std::uint64_t samp_seed = 0;
  bool samp_seed_set = false;
  double samp_p = -1.0;
  samp->add_option("--fit", samp_fit)->required();
  samp->add_option("--n-sim", samp_nsim);
  samp->add_option("--seed", samp_seed)->each([&](const std::string&) {
    samp_seed_set = true;
  });
  samp->add_option("--p", samp_p, "Upper-tail probability");
  samp->add_option("--out", samp_out);

  // predict
  auto* pred = app.add_subcommand("predict", "Posterior prediction at new sites");
  std::string pred_fit, pred_data, pred_sites, pred_out = "predictions.csv";
  int pred_nsim = 0;
  std::uint64_t pred_seed = 0;
  bool pred_seed_set = false;
  double p_exp = 0.95;
  pred->add_option("--fit", pred_fit)->required();
  pred->add_option("--data", pred_data)->required();
  pred->add_option("--sites", pred_sites, "CSV of lon,lat rows")->required();
  pred->add_option("--n-sim", pred_nsim);
  pred->add_option("--seed", pred_seed)->each([&](const std::string&) {
    pred_seed_set = true;
  });
  pred->add_option("--p-exp", p_exp, "Predictive interval level");
  pred->add_option("--out", pred_out);

  // coverage
  auto* cov = app.add_subcommand("coverage", "In-sample predictive coverage");
  std::string cov_fit, cov_data, cov_out = "coverage.csv";
  int cov_nsim = 0;
  std::uint64_t cov_seed = 0;
  bool cov_seed_set = false;
  cov->add_option("--fit", cov_fit)->required();
  cov->add_option("--data", cov_data)->required();
  cov->add_option("--n-sim", cov_nsim);
  cov->add_option("--seed", cov_seed)->each([&](const std::string&) {
    cov_seed_set = true;
  });
  cov->add_option("--out", cov_out);

  // grid
  auto* grd = app.add_subcommand("grid", "Grid track records into cell maxima");
  std::string grd_records, grd_out = "gridded.csv", counts_out;
  GridSpec gspec;
  grd->add_option("--records", grd_records)->required();
  grd->add_option("--cell-deg", gspec.cell_deg);
  grd->add_option("--min-records", gspec.min_records);
  grd->add_option("--lon-min", gspec.lon_min);
  grd->add_option("--lon-max", gspec.lon_max);
  grd->add_option("--lat-min", gspec.lat_min);
  grd->add_option("--lat-max", gspec.lat_max);
  grd->add_option("--out", grd_out);
  grd->add_option("--counts-out", counts_out, "Per-cell record counts CSV");

  // refit-check
  auto* ref = app.add_subcommand("refit-check",
                                 "Fit, simulate pseudo-data, refit, compare");
  std::string ref_data, ref_out = "refit.csv";
  std::string ref_model;
  std::uint64_t ref_seed = 0;
  bool ref_seed_set = false;
  ref->add_option("--data", ref_data)->required();
  ref->add_option("--model", ref_model);
  ref->add_option("--seed", ref_seed)->each([&](const std::string&) {
    ref_seed_set = true;
  });
  ref->add_option("--out", ref_out);

  CLI11_PARSE(app, argc, argv);

  RunConfig cfg;
  if (!config_path.empty()) cfg = load_run_config(config_path);

  if (*sim) {
    if (sim_seed_set) cfg.seed = sim_seed;
    ManifestWriter manifest("simulate", cfg);
    const Coords coords = make_lattice(side, lo, hi);
    const auto [a_true, b_true] = true_surfaces(coords);
    const ShapeParam shape = shape_arg == "gumbel"
                                 ? ShapeParam::gumbel()
                                 : ShapeParam::log_shape(std::stod(shape_arg));
    const SiteDataset data =
        simulate_dataset(coords, a_true, b_true, shape, n_per_site, cfg.seed);
    export_dataset_csv(data, sim_out);
    manifest.add_output(sim_out);
    if (!truth_out.empty()) {
      std::ostringstream out;
      out << "site,lon,lat,a_true,b_true\n";
      for (int i = 0; i < data.n_sites(); ++i) {
        out << i << ',' << format_g17(coords[i].x) << ','
            << format_g17(coords[i].y) << ',' << format_g17(a_true[i]) << ','
            << format_g17(b_true[i]) << '\n';
      }
      atomic_write(truth_out, out.str());
      manifest.add_output(truth_out);
    }
    manifest.write(manifest_path(sim_out));
    return 0;
  }

  if (*fitc) {
    if (!model_arg.empty()) cfg.model = model_arg;
    ManifestWriter manifest("fit", cfg);
    const ModelSpec spec = cfg.model_spec();
    const SiteDataset data = load_model_data(fit_data, spec);
    const GevFit fit =
        fit_gev(data, spec, cfg.kernel_settings(), cfg.outer_options());
    save_fit_json(fit, data.coords, fit_out);
    manifest.add_output(fit_out);
    if (!fit_summary.empty()) {
      write_fit_summary(fit, data.coords, fit_summary);
      manifest.add_output(fit_summary);
    }
    manifest.j["diagnostics"] = fit_diag_json(fit);
    manifest.write(manifest_path(fit_out));
    return 0;
  }

  if (*samp) {
    if (samp_seed_set) cfg.seed = samp_seed;
    if (samp_nsim > 0) cfg.n_sim = samp_nsim;
    if (samp_p > 0.0) cfg.prob_upper = samp_p;
    ManifestWriter manifest("sample", cfg);
    auto [fit, coords] = load_fit_json(samp_fit);
    const PosteriorDraws draws = sample_joint(fit, cfg.n_sim, cfg.seed);
    const auto levels = return_levels(draws, cfg.prob_upper);
    std::ostringstream out;
    out << "site,lon,lat,p,z_mean,z_sd,z_lo,z_hi\n";
    for (const auto& s : levels) {
      out << s.site << ',' << format_g17(coords[s.site].x) << ','
          << format_g17(coords[s.site].y) << ',' << format_g17(s.prob_upper)
          << ',' << format_g17(s.mean) << ',' << format_g17(s.sd) << ','
          << format_g17(s.ci_lo) << ',' << format_g17(s.ci_hi) << '\n';
    }
    atomic_write(samp_out, out.str());
    manifest.add_output(samp_out);
    manifest.write(manifest_path(samp_out));
    return 0;
  }

  if (*pred) {
    if (pred_seed_set) cfg.seed = pred_seed;
    if (pred_nsim > 0) cfg.n_sim = pred_nsim;
    ManifestWriter manifest("predict", cfg);
    auto [fit, fit_coords] = load_fit_json(pred_fit);
    const SiteDataset data = load_model_data(pred_data, fit.spec);
    const Coords new_sites = read_sites_csv(pred_sites);
    PredictOptions opts;
    opts.m = cfg.n_sim;
    opts.p_exp = p_exp;
    opts.seed = cfg.seed;
    const PredictResult res = predict_new(fit, data, new_sites, opts);
    std::ostringstream out;
    out << "site,lon,lat,y_mean,y_lo,y_hi,ok\n";
    for (std::size_t k = 0; k < new_sites.size(); ++k) {
      const auto& s = res.sites[k];
      out << k << ',' << format_g17(new_sites[k].x) << ','
          << format_g17(new_sites[k].y) << ',' << format_g17(s.mean) << ','
          << format_g17(s.lo) << ',' << format_g17(s.hi) << ','
          << (s.ok ? 1 : 0) << '\n';
    }
    atomic_write(pred_out, out.str());
    manifest.add_output(pred_out);
    manifest.write(manifest_path(pred_out));
    return 0;
  }

  if (*cov) {
    if (cov_seed_set) cfg.seed = cov_seed;
    if (cov_nsim > 0) cfg.n_sim = cov_nsim;
    ManifestWriter manifest("coverage", cfg);
    auto [fit, coords] = load_fit_json(cov_fit);
    const SiteDataset data = load_model_data(cov_data, fit.spec);
    const auto points = coverage_check(fit, data, default_coverage_grid(),
                                       cfg.n_sim, cfg.seed);
    std::ostringstream out;
    out << "p_exp,p_obs\n";
    for (const auto& pt : points) {
      out << format_g17(pt.p_exp) << ',' << format_g17(pt.p_obs) << '\n';
    }
    atomic_write(cov_out, out.str());
    manifest.add_output(cov_out);
    manifest.write(manifest_path(cov_out));
    return 0;
  }

  if (*grd) {
    ManifestWriter manifest("grid", cfg);
    const auto records = ingest_records_csv(grd_records);
    const GridResult res = grid_maxima(records, gspec);
    if (res.data.n_sites() == 0) {
      std::cerr << "warning: no cells reached min_records; output is empty\n";
    }
    export_dataset_csv(res.data, grd_out);
    manifest.add_output(grd_out);
    if (!counts_out.empty()) {
      std::ostringstream out;
      out << "site,lon,lat,count\n";
      for (int i = 0; i < res.data.n_sites(); ++i) {
        out << i << ',' << format_g17(res.data.coords[i].x) << ','
            << format_g17(res.data.coords[i].y) << ',' << res.counts[i] << '\n';
      }
      atomic_write(counts_out, out.str());
      manifest.add_output(counts_out);
    }
    manifest.write(manifest_path(grd_out));
    return 0;
  }

  if (*ref) {
    if (!ref_model.empty()) cfg.model = ref_model;
    if (ref_seed_set) cfg.seed = ref_seed;
    ManifestWriter manifest("refit-check", cfg);
    const ModelSpec spec = cfg.model_spec();
    const SiteDataset data = load_model_data(ref_data, spec);
    const KernelSettings ks = cfg.kernel_settings();
    const GevFit fit = fit_gev(data, spec, ks, cfg.outer_options());

    // Posterior means become the truth for pseudo-data.
    const LatentField mode = fit.latent_mode();
    const ThetaLayout lay(spec);
    const ShapeParam shape =
        lay.s >= 0 ? ShapeParam::log_shape(fit.fit.theta_hat[lay.s])
                   : ShapeParam::gumbel();
    Eigen::VectorXd b_means =
        spec.b_random
            ? *mode.b_vals
            : Eigen::VectorXd::Constant(fit.n_sites,
                                        fit.fit.theta_hat[lay.b_fixed]);
    SiteDataset pseudo = simulate_dataset(
        data.coords, mode.a_vals, b_means, shape,
        static_cast<int>(data.obs[0].size()), derive_seed(cfg.seed, 9001));
    pseudo.transform = spec.transform;
    const GevFit refit = fit_gev(pseudo, spec, ks, cfg.outer_options());
    const LatentField mode2 = refit.latent_mode();

    std::ostringstream out;
    out << "site,a_orig,a_refit,b_orig,b_refit\n";
    for (int i = 0; i < fit.n_sites; ++i) {
      const double b2 = spec.b_random
                            ? (*mode2.b_vals)[i]
                            : refit.fit.theta_hat[lay.b_fixed];
      out << i << ',' << format_g17(mode.a_vals[i]) << ','
          << format_g17(mode2.a_vals[i]) << ',' << format_g17(b_means[i])
          << ',' << format_g17(b2) << '\n';
    }
    atomic_write(ref_out, out.str());
    manifest.add_output(ref_out);
    manifest.j["diagnostics"] = fit_diag_json(refit);
    manifest.write(manifest_path(ref_out));
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const spatgev::Error& e) {
    std::cerr << "ERROR:" << e.category() << ":" << e.what() << "\n";
    return e.category() == "numeric" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR:internal:" << e.what() << "\n";
    return 2;
  }
}
