#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbhm/estimator.hpp"
#include "sbhm/imagio.hpp"
#include "sbhm/inference.hpp"
#include "sbhm/stats.hpp"
#include "sbhm/wavelet.hpp"

namespace sbhm {

using json = nlohmann::json;

enum class SimMode { generative, pipeline };

struct SimConfig {
  SimMode mode = SimMode::generative;
  int n1 = 64;
  int n2 = 64;
  int replicates = 50;
  std::uint64_t base_seed = 1;
  Hyperparams theta;           // generative truth, and the fit value when fixed
  bool fit_theta = false;      // true: empirical Bayes; false: fixed theta
  double mu_true = -2.0;       // generative intercept
  PriorSpec priors;
  PhantomSpec phantom;         // pipeline source image (noise seed varies per replicate)
  bool phantom_from_config = false;
  double threshold_override = -1.0;  // pipeline: <0 means use the universal threshold
  SigmaBand sigma_band = SigmaBand::pooled;
  int phi = 3;
  int rho_star = 2;
  int workers = 1;
  int marginal_samples = 200;
  int gh_order = 20;
  std::string out_dir;
};

struct ReplicateResult {
  int index = 0;
  std::uint64_t seed = 0;
  long long s = 0;          // realized sparsity of the (simulated or sparsified) field
  double sum_p = std::numeric_limits<double>::quiet_NaN();  // generative: realized sum of p_i
  double e_hat = 0.0;       // sum of posterior means
  Hyperparams theta_used;
  bool fitted = false;
  int newton_iters = 0;
  bool degenerate = false;
  double runtime_sec = 0.0;  // wall clock; excluded from machine-readable outputs
};

struct SimResults {
  std::vector<ReplicateResult> replicates;
  std::vector<std::vector<double>> p_fields;  // R x N posterior-mean fields
};

struct AggregateReport {
  double e_sim = 0.0;                  // mean realized sparsity
  std::vector<double> metric;          // |e_sim - e_hat_r| * 100 / N
  double metric_mean = 0.0;
  double metric_min = 0.0;
  double metric_max = 0.0;
  double var_e_hat = 0.0;
  bool has_normality = false;
  NormalityReport normality;
  bool has_block = false;
  BlockStats block;
  int n_sq = 0;
};

namespace detail {

struct FitOutcome {
  LaplaceFit fit;
  PosteriorP post;
};

inline FitOutcome fit_field(const std::vector<std::uint8_t>& o, const SimConfig& cfg,
                            std::uint64_t marginal_seed) {
  FitOptions opts;
  opts.marginal_samples = cfg.marginal_samples;
  opts.gh_order = cfg.gh_order;
  opts.marginal_seed = marginal_seed;
  FitOutcome out;
  if (cfg.fit_theta) {
    out.fit = fit_empirical_bayes(o, cfg.n1, cfg.n2, cfg.priors, opts);
  } else {
    out.fit = fit_fixed_theta(o, cfg.n1, cfg.n2, cfg.theta, cfg.priors, opts);
  }
  out.post = posterior_p_means(out.fit.eta_mean, out.fit.eta_var, cfg.gh_order);
  return out;
}

template <typename Fn>
inline void parallel_for_replicates(int count, int workers, Fn&& body) {
  if (workers <= 1) {
    for (int r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int actual = std::min(workers, count);
  pool.reserve(actual);
  for (int w = 0; w < actual; ++w) {
    pool.emplace_back([&]() {
      for (int r = next.fetch_add(1); r < count; r = next.fetch_add(1)) body(r);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Ground-truth-known replicates: draw the latent field from the model at
/// the configured theta, observe Bernoulli indicators, then fit and record
/// the estimator. Every random stream is derived from base_seed + index.
inline SimResults run_generative(const SimConfig& cfg) {
  const int n = cfg.n1 * cfg.n2;
  const SparseSymMatrix q =
      build_precision(MaternParams(1, cfg.theta.kappa, cfg.theta.sigma2_m), cfg.n1, cfg.n2);
  const CholFactor q_factor(q);

  SimResults out;
  out.replicates.resize(cfg.replicates);
  out.p_fields.resize(cfg.replicates);

  detail::parallel_for_replicates(cfg.replicates, cfg.workers, [&](int r) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(r);
    Rng field_rng(derive_seed(seed, 1));
    Eigen::VectorXd m = q_factor.sample(field_rng);
    Rng eps_rng(derive_seed(seed, 2));
    Rng obs_rng(derive_seed(seed, 3));
    const double eps_sd = 1.0 / std::sqrt(cfg.theta.tau_iid);

    std::vector<std::uint8_t> o(n);
    double sum_p = 0.0;
    long long s = 0;
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(cfg.mu_true + m[i] + eps_sd * eps_rng.normal());
      sum_p += p;
      o[i] = obs_rng.bernoulli(p) ? 1 : 0;
      s += o[i];
    }

    auto fitted = detail::fit_field(o, cfg, derive_seed(seed, 4));

    ReplicateResult& res = out.replicates[r];
    res.index = r;
    res.seed = seed;
    res.s = s;
    res.sum_p = sum_p;
    res.e_hat = estimate_expected_sparsity(fitted.post).value;
    res.theta_used = fitted.fit.theta_hat;
    res.fitted = cfg.fit_theta;
    res.newton_iters = fitted.fit.diagnostics.newton_iters;
    res.degenerate = fitted.fit.diagnostics.boundary_degenerate;
    res.runtime_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.p_fields[r] = std::move(fitted.post.p_mean);
  });
  return out;
}

/// Full-pipeline replicates: phantom image (fresh noise seed per replicate)
/// -> wavelet transform -> noise estimate -> universal threshold -> indicator
/// field -> fit. Records the true sparsity of each sparsified image.
inline SimResults run_pipeline(const SimConfig& cfg) {
  if (cfg.n1 % 8 != 0 || cfg.n2 % 8 != 0)
    throw InputError("run_pipeline: dimensions must be divisible by 8");
  PhantomSpec base = cfg.phantom_from_config ? cfg.phantom
                                             : default_phantom_spec(cfg.n1, cfg.n2, cfg.base_seed);

  SimResults out;
  out.replicates.resize(cfg.replicates);
  out.p_fields.resize(cfg.replicates);

  detail::parallel_for_replicates(cfg.replicates, cfg.workers, [&](int r) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(r);
    PhantomSpec spec = base;
    spec.seed = derive_seed(seed, 1);
    const GrayImage img = generate_phantom(spec);
    const WaveletPyramid pyr = dwt2(img);
    const double sigma = estimate_noise_sigma(pyr, cfg.sigma_band);
    const double threshold = cfg.threshold_override >= 0.0
                                 ? cfg.threshold_override
                                 : universal_threshold(sigma, img.size());
    const SparseCoeffImage sci = hard_threshold(pyr, threshold);
    const std::vector<std::uint8_t> o = indicator_map(sci);

    auto fitted = detail::fit_field(o, cfg, derive_seed(seed, 4));

    ReplicateResult& res = out.replicates[r];
    res.index = r;
    res.seed = seed;
    res.s = sci.s;
    res.e_hat = estimate_expected_sparsity(fitted.post).value;
    res.theta_used = fitted.fit.theta_hat;
    res.fitted = cfg.fit_theta;
    res.newton_iters = fitted.fit.diagnostics.newton_iters;
    res.degenerate = fitted.fit.diagnostics.boundary_degenerate;
    res.runtime_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.p_fields[r] = std::move(fitted.post.p_mean);
  });
  return out;
}

inline SimResults run_simulation(const SimConfig& cfg) {
  return cfg.mode == SimMode::generative ? run_generative(cfg) : run_pipeline(cfg);
}

/// Deterministic sequential fold over the replicate table.
inline AggregateReport aggregate(const SimConfig& cfg, const SimResults& results) {
  if (results.replicates.empty()) throw InputError("aggregate: no replicates");
  const std::size_t n_pixels = static_cast<std::size_t>(cfg.n1) * cfg.n2;

  AggregateReport rep;
  std::vector<long long> s_list;
  std::vector<double> e_list;
  s_list.reserve(results.replicates.size());
  e_list.reserve(results.replicates.size());
  for (const auto& r : results.replicates) {
    s_list.push_back(r.s);
    e_list.push_back(r.e_hat);
  }
  rep.e_sim = sample_mean_sparsity(s_list);

  rep.metric.resize(e_list.size());
  double acc = 0.0;
  rep.metric_min = std::numeric_limits<double>::infinity();
  rep.metric_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < e_list.size(); ++i) {
    rep.metric[i] = abs_diff_percent(rep.e_sim, e_list[i], n_pixels);
    acc += rep.metric[i];
    rep.metric_min = std::min(rep.metric_min, rep.metric[i]);
    rep.metric_max = std::max(rep.metric_max, rep.metric[i]);
  }
  rep.metric_mean = acc / static_cast<double>(rep.metric.size());

  if (e_list.size() >= 2) {
    double mean_e = 0.0;
    for (double v : e_list) mean_e += v;
    mean_e /= static_cast<double>(e_list.size());
    double ss = 0.0;
    for (double v : e_list) ss += (v - mean_e) * (v - mean_e);
    rep.var_e_hat = ss / static_cast<double>(e_list.size() - 1);
  }

  if (e_list.size() >= 3 && e_list.size() <= 5000) {
    try {
      rep.normality = shapiro_wilk(e_list);
      rep.has_normality = true;
    } catch (const InputError&) {
      rep.has_normality = false;  // constant sample
    }
  }

  if (results.p_fields.size() >= 2) {
    try {
      const BlockPartition part = block_partition(cfg.n1, cfg.n2, cfg.phi, cfg.rho_star);
      rep.block = block_stats(part, results.p_fields);
      rep.n_sq = part.n_sq;
      rep.has_block = true;
    } catch (const InputError&) {
      rep.has_block = false;  // lattice too small for the requested partition
    }
  }
  return rep;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline json report_to_json(const SimConfig& cfg, const AggregateReport& rep) {
  json j;
  j["mode"] = cfg.mode == SimMode::generative ? "generative" : "pipeline";
  j["n1"] = cfg.n1;
  j["n2"] = cfg.n2;
  j["replicates"] = cfg.replicates;
  j["base_seed"] = cfg.base_seed;
  j["e_sim"] = rep.e_sim;
  j["metric_mean"] = rep.metric_mean;
  j["metric_min"] = rep.metric_min;
  j["metric_max"] = rep.metric_max;
  j["var_e_hat"] = rep.var_e_hat;
  if (rep.has_normality) {
    j["shapiro"] = {{"w", rep.normality.w}, {"p_value", rep.normality.p_value},
                    {"n", rep.normality.n}};
  }
  if (rep.has_block) {
    j["block"] = {{"phi", cfg.phi},
                  {"rho_star", cfg.rho_star},
                  {"n_sq", rep.n_sq},
                  {"n_sq_used", rep.block.n_sq_used},
                  {"ratio_b1", rep.block.ratio_b1},
                  {"ratio_b2", rep.block.ratio_b2}};
  }
  return j;
}

/// Output directory layout: replicates.csv, p_fields.csv, report.json,
/// qq_points.csv, block_stats.csv. All machine-readable values are written
/// with round-trip precision so reruns are byte-identical under fixed seeds.
inline void write_outputs(const std::string& dir, const SimConfig& cfg, const SimResults& results,
                          const AggregateReport& rep) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream out(fs::path(dir) / "replicates.csv");
    if (!out) throw InputError("cannot write replicates.csv");
    out << "index,seed,s,sum_p,e_hat,kappa,sigma2_m,tau_iid,fitted,newton_iters,degenerate\n";
    for (const auto& r : results.replicates) {
      out << r.index << "," << r.seed << "," << r.s << "," << detail::fmt17(r.sum_p) << ","
          << detail::fmt17(r.e_hat) << "," << detail::fmt17(r.theta_used.kappa) << ","
          << detail::fmt17(r.theta_used.sigma2_m) << "," << detail::fmt17(r.theta_used.tau_iid)
          << "," << (r.fitted ? 1 : 0) << "," << r.newton_iters << "," << (r.degenerate ? 1 : 0)
          << "\n";
    }
  }
  {
    std::ofstream out(fs::path(dir) / "p_fields.csv");
    if (!out) throw InputError("cannot write p_fields.csv");
    for (const auto& field : results.p_fields) {
      for (std::size_t i = 0; i < field.size(); ++i)
        out << detail::fmt17(field[i]) << (i + 1 < field.size() ? "," : "\n");
    }
  }
  {
    std::ofstream out(fs::path(dir) / "report.json");
    if (!out) throw InputError("cannot write report.json");
    out << report_to_json(cfg, rep).dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "qq_points.csv");
    if (!out) throw InputError("cannot write qq_points.csv");
    out << "theoretical,sample\n";
    if (rep.has_normality) {
      std::vector<double> z = rep.normality.standardized;
      std::sort(z.begin(), z.end());
      const int n = static_cast<int>(z.size());
      for (int i = 0; i < n; ++i) {
        const double q = normal_quantile((i + 1 - 0.375) / (n + 0.25));
        out << detail::fmt17(q) << "," << detail::fmt17(z[i]) << "\n";
      }
    }
  }
  {
    std::ofstream out(fs::path(dir) / "block_stats.csv");
    if (!out) throw InputError("cannot write block_stats.csv");
    out << "square,clipped,degenerate,sigma2,r3,var_sb\n";
    if (rep.has_block) {
      const BlockPartition part = block_partition(cfg.n1, cfg.n2, cfg.phi, cfg.rho_star);
      for (int k = 0; k < part.n_sq; ++k) {
        out << k << "," << (part.clipped[k] ? 1 : 0) << "," << (rep.block.degenerate[k] ? 1 : 0)
            << "," << detail::fmt17(rep.block.sigma2_k[k]) << ","
            << detail::fmt17(rep.block.r3_k[k]) << "," << detail::fmt17(rep.block.var_sb_k[k])
            << "\n";
      }
    }
  }
}

/// Reads back the per-replicate table written by write_outputs.
inline SimResults load_outputs(const std::string& dir) {
  namespace fs = std::filesystem;
  SimResults out;
  {
    std::ifstream in(fs::path(dir) / "replicates.csv");
    if (!in) throw InputError("cannot open replicates.csv in " + dir);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ReplicateResult r;
      std::istringstream ls(line);
      std::string cell;
      auto next = [&]() {
        if (!std::getline(ls, cell, ',')) throw InputError("replicates.csv: short row");
        return cell;
      };
      r.index = std::stoi(next());
      r.seed = std::stoull(next());
      r.s = std::stoll(next());
      r.sum_p = std::stod(next());
      r.e_hat = std::stod(next());
      r.theta_used.kappa = std::stod(next());
      r.theta_used.sigma2_m = std::stod(next());
      r.theta_used.tau_iid = std::stod(next());
      r.fitted = std::stoi(next()) != 0;
      r.newton_iters = std::stoi(next());
      r.degenerate = std::stoi(next()) != 0;
      out.replicates.push_back(r);
    }
  }
  {
    std::ifstream in(fs::path(dir) / "p_fields.csv");
    if (!in) throw InputError("cannot open p_fields.csv in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> field;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) field.push_back(std::stod(cell));
      out.p_fields.push_back(std::move(field));
    }
  }
  return out;
}

namespace detail {

template <typename T>
inline T require_field(const json& j, const std::string& key) {
  if (!j.contains(key)) throw InputError("config: missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config: field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  const std::string mode = detail::require_field<std::string>(j, "mode");
  if (mode == "generative")
    cfg.mode = SimMode::generative;
  else if (mode == "pipeline")
    cfg.mode = SimMode::pipeline;
  else
    throw InputError("config: mode must be 'generative' or 'pipeline'");
  cfg.n1 = detail::require_field<int>(j, "n1");
  cfg.n2 = detail::require_field<int>(j, "n2");
  cfg.replicates = detail::require_field<int>(j, "replicates");
  cfg.base_seed = detail::require_field<std::uint64_t>(j, "base_seed");
  if (cfg.replicates < 1) throw InputError("config: replicates must be >= 1");

  if (j.contains("theta")) {
    const json& t = j.at("theta");
    cfg.theta.kappa = detail::require_field<double>(t, "kappa");
    cfg.theta.sigma2_m = detail::require_field<double>(t, "sigma2_m");
    cfg.theta.tau_iid = detail::require_field<double>(t, "tau_iid");
  } else if (cfg.mode == SimMode::generative) {
    throw InputError("config: missing field 'theta'");
  }
  if (j.contains("fit")) {
    const std::string fit = j.at("fit").get<std::string>();
    if (fit == "eb")
      cfg.fit_theta = true;
    else if (fit == "fixed")
      cfg.fit_theta = false;
    else
      throw InputError("config: fit must be 'fixed' or 'eb'");
  } else {
    cfg.fit_theta = cfg.mode == SimMode::pipeline;
  }
  if (cfg.mode == SimMode::pipeline && !cfg.fit_theta && !j.contains("theta"))
    throw InputError("config: missing field 'theta'");

  cfg.mu_true = j.value("mu_true", -2.0);
  if (j.contains("priors")) {
    const json& p = j.at("priors");
    cfg.priors.log_tau_iid.a = p.value("tau_iid_a", 1.0);
    cfg.priors.log_tau_iid.b = p.value("tau_iid_b", 5e-5);
    cfg.priors.log_inv_sigma2.a = p.value("inv_sigma2_a", 1.0);
    cfg.priors.log_inv_sigma2.b = p.value("inv_sigma2_b", 5e-5);
    cfg.priors.log_range.a = p.value("range_a", 1.0);
    cfg.priors.log_range.b = p.value("range_b", 1e-2);
    cfg.priors.mu_precision = p.value("mu_precision", 1e-6);
  }
  if (j.contains("phantom")) {
    const json& ph = j.at("phantom");
    cfg.phantom.n1 = cfg.n1;
    cfg.phantom.n2 = cfg.n2;
    cfg.phantom.noise_sigma = detail::require_field<double>(ph, "noise_sigma");
    for (const json& e : detail::require_field<json>(ph, "ellipses")) {
      Ellipse el;
      el.center_row = detail::require_field<double>(e, "center_row");
      el.center_col = detail::require_field<double>(e, "center_col");
      el.semi_a = detail::require_field<double>(e, "semi_a");
      el.semi_b = detail::require_field<double>(e, "semi_b");
      el.rotation = e.value("rotation", 0.0);
      el.intensity = detail::require_field<double>(e, "intensity");
      cfg.phantom.ellipses.push_back(el);
    }
    cfg.phantom_from_config = true;
  }
  if (j.contains("threshold")) cfg.threshold_override = j.at("threshold").get<double>();
  if (j.contains("sigma_band")) cfg.sigma_band = sigma_band_from_string(j.at("sigma_band"));
  cfg.phi = j.value("phi", 3);
  cfg.rho_star = j.value("rho_star", 2);
  cfg.workers = j.value("workers", 1);
  cfg.marginal_samples = j.value("marginal_samples", 200);
  cfg.gh_order = j.value("gh_order", 20);
  cfg.out_dir = j.value("out_dir", std::string());
  return cfg;
}

inline SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(std::string("config: invalid JSON: ") + e.what());
  }
  return sim_config_from_json(j);
}

}  // namespace sbhm
