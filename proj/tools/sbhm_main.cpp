// Command-line front end: sparsify / fit / simulate / diagnose.
//
// Exit codes: 0 success, 1 internal failure, 2 bad input, 3 non-convergence.
// Diagnostics go to standard error; the SPARSITY_BHM_LOG environment
// variable (debug|info|warn|error) controls verbosity.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sbhm/estimator.hpp"
#include "sbhm/imagio.hpp"
#include "sbhm/inference.hpp"
#include "sbhm/simharness.hpp"
#include "sbhm/stats.hpp"
#include "sbhm/wavelet.hpp"

namespace {

namespace fs = std::filesystem;
using sbhm::json;

enum LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

LogLevel log_level() {
  const char* env = std::getenv("SPARSITY_BHM_LOG");
  if (!env) return kWarn;
  const std::string v(env);
  if (v == "debug") return kDebug;
  if (v == "info") return kInfo;
  if (v == "error") return kError;
  return kWarn;
}

void log_msg(LogLevel level, const std::string& msg) {
  static const LogLevel active = log_level();
  if (level >= active) std::cerr << "sbhm: " << msg << "\n";
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_theta(const std::string& text, sbhm::Hyperparams& theta) {
  double k, s2, t;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf", &k, &s2, &t) != 3) return false;
  if (!(k > 0.0 && s2 > 0.0 && t > 0.0)) return false;
  theta = {k, s2, t};
  return true;
}

// Writes the sparse-coefficient matrix plus its JSON sidecar.
void write_sparse_coeff(const sbhm::SparseCoeffImage& sci, double sigma_hat,
                        sbhm::SigmaBand band, const std::string& out_prefix) {
  sbhm::GrayImage coeff(sci.n1, sci.n2);
  coeff.data = sci.coeffs;
  const std::string csv_path = out_prefix + ".csv";
  const std::string tmp = csv_path + ".tmp";
  sbhm::save_csv(coeff, tmp);
  fs::rename(tmp, csv_path);

  json sidecar;
  sidecar["threshold_used"] = sci.threshold_used;
  sidecar["sigma_hat"] = sigma_hat;
  sidecar["s"] = sci.s;
  sidecar["n1"] = sci.n1;
  sidecar["n2"] = sci.n2;
  sidecar["sigma_band"] = sbhm::to_string(band);
  std::ofstream js(out_prefix + ".json");
  if (!js) throw sbhm::InputError("cannot write " + out_prefix + ".json");
  js << sidecar.dump(2) << "\n";
}

int cmd_sparsify(const std::string& input, const std::string& out_prefix,
                 const std::string& format, double threshold_override,
                 const std::string& sigma_band) {
  const sbhm::ImageFormat fmt =
      format == "auto" ? sbhm::format_from_path(input)
                       : (format == "pgm" ? sbhm::ImageFormat::pgm : sbhm::ImageFormat::csv);
  const sbhm::GrayImage img = sbhm::load_image(input, fmt);
  const sbhm::SigmaBand band = sbhm::sigma_band_from_string(sigma_band);
  const sbhm::WaveletPyramid pyr = sbhm::dwt2(img);
  const double sigma = sbhm::estimate_noise_sigma(pyr, band);
  const double threshold =
      threshold_override >= 0.0 ? threshold_override : sbhm::universal_threshold(sigma, img.size());
  const sbhm::SparseCoeffImage sci = sbhm::hard_threshold(pyr, threshold);
  write_sparse_coeff(sci, sigma, band, out_prefix);
  log_msg(kInfo, "sparsify: sigma_hat=" + fmt17(sigma) + " threshold=" + fmt17(threshold) +
                     " s=" + std::to_string(sci.s));
  return 0;
}

int cmd_fit(const std::string& input, const std::string& out_prefix,
            const std::optional<sbhm::Hyperparams>& theta, std::uint64_t seed) {
  const sbhm::GrayImage coeff = sbhm::load_csv(input);
  std::vector<std::uint8_t> o(coeff.size());
  long long s = 0;
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    o[i] = coeff.data[i] != 0.0 ? 1 : 0;
    s += o[i];
  }

  sbhm::FitOptions opts;
  opts.marginal_seed = seed;
  sbhm::PriorSpec priors;
  sbhm::LaplaceFit fit = theta ? sbhm::fit_fixed_theta(o, coeff.n1, coeff.n2, *theta, priors, opts)
                               : sbhm::fit_empirical_bayes(o, coeff.n1, coeff.n2, priors, opts);
  const sbhm::PosteriorP post = sbhm::posterior_p_means(fit.eta_mean, fit.eta_var, opts.gh_order);
  const sbhm::SparsityEstimate est = sbhm::estimate_expected_sparsity(post);

  sbhm::GrayImage pm(coeff.n1, coeff.n2), pv(coeff.n1, coeff.n2);
  pm.data = post.p_mean;
  pv.data = post.p_var;
  const std::string pmean_path = out_prefix + "_pmean.csv";
  const std::string pvar_path = out_prefix + "_pvar.csv";
  sbhm::save_csv(pm, pmean_path);
  sbhm::save_csv(pv, pvar_path);

  json j;
  j["theta_hat"] = {{"kappa", fit.theta_hat.kappa},
                    {"sigma2_m", fit.theta_hat.sigma2_m},
                    {"tau_iid", fit.theta_hat.tau_iid}};
  j["theta_provenance"] = fit.diagnostics.theta_provenance;
  j["log_marginal"] = fit.log_marginal;
  j["newton_iters"] = fit.diagnostics.newton_iters;
  j["nm_evals"] = fit.diagnostics.nm_evals;
  j["seed"] = seed;
  j["e_hat"] = est.value;
  j["s"] = s;
  j["n1"] = coeff.n1;
  j["n2"] = coeff.n2;
  j["abs_diff_percent"] = sbhm::abs_diff_percent(est.value, static_cast<double>(s), est.n_pixels);
  j["boundary_degenerate"] = fit.diagnostics.boundary_degenerate;
  j["p_mean"] = pmean_path;
  j["p_var"] = pvar_path;
  std::ofstream js(out_prefix + "_fit.json");
  if (!js) throw sbhm::InputError("cannot write " + out_prefix + "_fit.json");
  js << j.dump(2) << "\n";

  std::cout << "E_hat " << fmt17(est.value) << "\n";
  std::cout << "abs_diff_percent "
            << fmt17(sbhm::abs_diff_percent(est.value, static_cast<double>(s), est.n_pixels))
            << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_override,
                 int workers_override, std::int64_t seed_override) {
  sbhm::SimConfig cfg = sbhm::load_sim_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (cfg.out_dir.empty()) throw sbhm::InputError("config: missing field 'out_dir'");
  if (workers_override > 0) cfg.workers = workers_override;
  if (seed_override >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed_override);

  const sbhm::SimResults results = sbhm::run_simulation(cfg);
  const sbhm::AggregateReport rep = sbhm::aggregate(cfg, results);
  sbhm::write_outputs(cfg.out_dir, cfg, results, rep);
  log_msg(kInfo, "simulate: wrote " + cfg.out_dir);
  return 0;
}

int cmd_diagnose(const std::string& dir, int phi, int rho_star) {
  if (!fs::is_directory(dir)) throw sbhm::InputError("not a directory: " + dir);
  const sbhm::SimResults results = sbhm::load_outputs(dir);
  if (results.replicates.empty()) throw sbhm::InputError("no replicates found in " + dir);
  if (results.p_fields.size() != results.replicates.size())
    throw sbhm::InputError("p_fields.csv row count disagrees with replicates.csv");

  sbhm::SimConfig cfg;
  cfg.n1 = static_cast<int>(std::sqrt(static_cast<double>(results.p_fields[0].size())));
  // Recover the lattice shape from report.json (non-square lattices).
  {
    std::ifstream in(fs::path(dir) / "report.json");
    if (in) {
      json j;
      in >> j;
      cfg.n1 = j.value("n1", cfg.n1);
      cfg.n2 = j.value("n2", cfg.n1);
      cfg.mode = j.value("mode", std::string("generative")) == "pipeline" ? sbhm::SimMode::pipeline
                                                                          : sbhm::SimMode::generative;
      cfg.base_seed = j.value("base_seed", 0ull);
    } else {
      cfg.n2 = cfg.n1;
    }
  }
  cfg.replicates = static_cast<int>(results.replicates.size());
  cfg.phi = phi;
  cfg.rho_star = rho_star;
  if (static_cast<long long>(cfg.n1) * cfg.n2 !=
      static_cast<long long>(results.p_fields[0].size()))
    throw sbhm::InputError("p_fields.csv width disagrees with lattice dimensions");
  // Validate up front so bad flags reject before any output is touched.
  sbhm::block_partition(cfg.n1, cfg.n2, phi, rho_star);

  const sbhm::AggregateReport rep = sbhm::aggregate(cfg, results);
  sbhm::write_outputs(dir, cfg, results, rep);
  log_msg(kInfo, "diagnose: rewrote reports in " + dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expected-sparsity estimation via a spatial Bayesian hierarchical model"};
  app.require_subcommand(1);

  // sparsify
  auto* sparsify = app.add_subcommand("sparsify", "Wavelet-threshold an image to a sparse field");
  std::string sp_input, sp_out = "sparse", sp_format = "auto", sp_band = "pooled";
  double sp_threshold = -1.0;
  sparsify->add_option("input", sp_input, "input image (PGM or CSV)")->required();
  sparsify->add_option("--out", sp_out, "output path prefix");
  sparsify->add_option("--format", sp_format, "input format")
      ->check(CLI::IsMember({"auto", "pgm", "csv"}));
  sparsify->add_option("--threshold", sp_threshold, "override the universal threshold");
  sparsify->add_option("--sigma-band", sp_band, "noise-estimate band")
      ->check(CLI::IsMember({"pooled", "dd1"}));

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the hierarchical model to a sparse-coefficient CSV");
  std::string fit_input, fit_out = "fit", fit_theta_text;
  std::uint64_t fit_seed = 0;
  fit->add_option("input", fit_input, "sparse-coefficient CSV")->required();
  fit->add_option("--out", fit_out, "output path prefix");
  fit->add_option("--theta", fit_theta_text, "fixed kappa,sigma2,tau (skips empirical Bayes)");
  fit->add_option("--seed", fit_seed, "seed for the marginal-variance sampler");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a replicated simulation study");
  std::string sim_config, sim_out;
  int sim_workers = 0;
  std::int64_t sim_seed = -1;
  simulate->add_option("config", sim_config, "SimConfig JSON path")->required();
  simulate->add_option("--out", sim_out, "output directory (overrides config)");
  simulate->add_option("--workers", sim_workers, "worker threads (overrides config)");
  simulate->add_option("--seed", sim_seed, "base seed (overrides config)");

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "Recompute diagnostics for a simulation directory");
  std::string diag_dir;
  int diag_phi = 3, diag_rho = 2;
  diagnose->add_option("dir", diag_dir, "directory produced by simulate")->required();
  diagnose->add_option("--phi", diag_phi, "square half-width");
  diagnose->add_option("--rho-star", diag_rho, "border width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (sparsify->parsed())
      return cmd_sparsify(sp_input, sp_out, sp_format, sp_threshold, sp_band);
    if (fit->parsed()) {
      std::optional<sbhm::Hyperparams> theta;
      if (!fit_theta_text.empty()) {
        sbhm::Hyperparams t;
        if (!parse_theta(fit_theta_text, t))
          throw sbhm::InputError("--theta expects 'kappa,sigma2,tau' with positive values");
        theta = t;
      }
      return cmd_fit(fit_input, fit_out, theta, fit_seed);
    }
    if (simulate->parsed()) return cmd_simulate(sim_config, sim_out, sim_workers, sim_seed);
    if (diagnose->parsed()) return cmd_diagnose(diag_dir, diag_phi, diag_rho);
  } catch (const sbhm::InputError& e) {
    log_msg(kError, e.what());
    return 2;
  } catch (const sbhm::ConvergenceError& e) {
    log_msg(kError, e.what());
    return 3;
  } catch (const std::exception& e) {
    log_msg(kError, std::string("internal error: ") + e.what());
    return 1;
  }
  return 1;
}
