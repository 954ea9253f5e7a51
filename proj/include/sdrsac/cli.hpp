#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdrsac/errors.hpp"
#include "sdrsac/geometry.hpp"
#include "sdrsac/icp.hpp"
#include "sdrsac/io.hpp"
#include "sdrsac/sampler.hpp"

namespace sdrsac {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

namespace cli {

/// Raised for unreadable or inconsistent input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline PointCloud load_input(const std::string& path) {
  if (path == "builtin") return builtin_shape(40000);
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
  return load_cloud(path);
}

inline void write_report(std::ostream& out, const RunReport& r, const std::string& format) {
  if (format == "json") {
    out << to_json(r).dump(2) << '\n';
  } else {
    out << text_table_header() << text_table_row(r);
  }
}

struct RegisterOptions {
  std::string source, target, method = "sdrsac", report = "json", truth;
  double epsilon = 0.01;
  std::optional<double> gamma;
  std::size_t nsample = 16, m = 4, max_iter = 10000, inner_iters = 4;
  double ps = 0.99;
  std::uint64_t seed = 0;
  int sdp_max_iter = sampler_sdp_settings().max_iter;
  double trim = 0.7;
  bool timing = false;

  SdrsacConfig config() const {
    SdrsacConfig c;
    c.n_sample = nsample;
    c.m = m;
    c.epsilon = epsilon;
    c.gamma = gamma;
    c.max_iter = max_iter;
    c.inner_iters = inner_iters;
    c.p_s = ps;
    c.seed = seed;
    c.sdp.max_iter = sdp_max_iter;
    return c;
  }
};

inline void add_common(CLI::App* app, RegisterOptions& o) {
  app->add_option("--source", o.source, "Source cloud (.ply, .xyz, .txt)")->required();
  app->add_option("--target", o.target, "Target cloud (.ply, .xyz, .txt)")->required();
  app->add_option("--epsilon", o.epsilon, "Inlier threshold")->check(CLI::PositiveNumber);
  app->add_option("--gamma", o.gamma, "Segment-length tolerance (default 2*epsilon)")->check(CLI::PositiveNumber);
  app->add_option("--nsample", o.nsample, "Points per sample");
  app->add_option("--m", o.m, "Correspondences kept per sample");
  app->add_option("--max-iter", o.max_iter, "Hypothesis budget");
  app->add_option("--ps", o.ps, "Success probability of the stopping rule");
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--sdp-max-iter", o.sdp_max_iter, "Relaxation iterations per hypothesis");
  app->add_option("--report", o.report, "Report format")->check(CLI::IsMember({"json", "text"}));
  app->add_option("--truth", o.truth, "Ground-truth transform file, adds error fields");
  app->add_flag("--timing", o.timing, "Include wall time in the report");
}

inline nlohmann::ordered_json config_echo(const RegisterOptions& o, const std::string& method) {
  nlohmann::ordered_json c;
  c["method"] = method;
  c["epsilon"] = o.epsilon;
  c["gamma"] = o.gamma.value_or(2.0 * o.epsilon);
  c["nsample"] = o.nsample;
  c["m"] = o.m;
  c["max_iter"] = o.max_iter;
  c["inner_iters"] = o.inner_iters;
  c["ps"] = o.ps;
  c["seed"] = o.seed;
  c["sdp_max_iter"] = o.sdp_max_iter;
  if (method == "tricp") c["trim"] = o.trim;
  return c;
}

inline RunReport finish_report(const RegisterOptions& o, const std::string& method, const RigidTransform& t,
                               std::size_t consensus, std::size_t iterations, double seconds) {
  RunReport r;
  r.method = method;
  r.transform = t;
  r.consensus = consensus;
  r.iterations = iterations;
  if (o.timing) r.wall_time_s = seconds;
  r.config = config_echo(o, method);
  if (!o.truth.empty()) {
    if (!std::filesystem::exists(o.truth)) throw DataError("no such file: " + o.truth);
    attach_truth(r, load_transform(o.truth));
  }
  return r;
}

/// Identity rotation with the centroids aligned.
inline RigidTransform centroid_alignment(const PointCloud& s, const PointCloud& d) {
  return RigidTransform(Mat3::Identity(), d.centroid() - s.centroid());
}

inline int run_register(const RegisterOptions& o, std::ostream& out) {
  const PointCloud s = load_input(o.source);
  const PointCloud d = load_input(o.target).with_index();
  if (o.method == "sdrsac") {
    SdrsacConfig cfg = o.config();
    cfg.validate();
    const RegistrationResult r = sdrsac(s, d, cfg);
    write_report(out, finish_report(o, o.method, r.transform, r.consensus.count, r.iterations_used, r.wall_time),
                 o.report);
    return kExitOk;
  }
  IcpConfig ic;
  ic.trim_ratio = o.method == "tricp" ? o.trim : 1.0;
  ic.validate();
  const auto start = std::chrono::steady_clock::now();
  const IcpResult r = icp_refine(s, d, centroid_alignment(s, d), ic);
  const std::size_t consensus = consensus_score(s, d, r.transform, o.epsilon).count;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_report(out, finish_report(o, o.method, r.transform, consensus, static_cast<std::size_t>(r.iterations), seconds),
               o.report);
  return kExitOk;
}

struct CorrOptions {
  RegisterOptions base;
  std::string correspondences;
  std::size_t ransac_iters = 0;
  double budget_seconds = 0.0;
};

inline int run_register_corr(const CorrOptions& o, std::ostream& out) {
  const PointCloud s = load_input(o.base.source);
  const PointCloud d = load_input(o.base.target).with_index();
  if (!std::filesystem::exists(o.correspondences)) throw DataError("no such file: " + o.correspondences);
  const CorrespondenceSet putative = load_correspondences(o.correspondences);
  for (const auto& c : putative.pairs) {
    if (c.source >= s.size() || c.target >= d.size()) {
      throw DataError("correspondence (" + std::to_string(c.source) + ", " + std::to_string(c.target) +
                      ") is out of range");
    }
  }
  RegistrationResult r;
  nlohmann::ordered_json extra;
  if (o.base.method == "csdrsac") {
    SdrsacConfig cfg = o.base.config();
    cfg.validate();
    r = csdrsac(s, d, putative, cfg);
  } else {
    Budget budget = IterationBudget{o.ransac_iters};
    if (o.budget_seconds > 0.0) {
      budget = TimeBudget{o.budget_seconds};
      extra["budget_seconds"] = o.budget_seconds;
    } else if (o.ransac_iters == 0) {
      budget = IterationBudget{o.base.max_iter};
    }
    if (const auto* it = std::get_if<IterationBudget>(&budget)) extra["budget_iterations"] = it->iterations;
    r = ransac_baseline(s, d, putative, o.base.epsilon, budget, o.base.seed, o.base.ps, true);
  }
  RunReport report = finish_report(o.base, o.base.method, r.transform, r.consensus.count, r.iterations_used,
                                   r.wall_time);
  for (auto& [k, v] : extra.items()) report.config[k] = v;
  write_report(out, report, o.base.report);
  return kExitOk;
}

struct SynthOptions {
  std::string input = "builtin", out_source, out_target, out_truth, out_correspondences;
  std::size_t n = 2000;
  double outlier_rate = 0.0, noise_sigma = 0.0, rewire = 0.0;
  std::uint64_t seed = 0;
};

inline int run_synth(const SynthOptions& o, std::ostream& out) {
  SyntheticSpec spec{load_input(o.input), o.n, o.outlier_rate, o.noise_sigma, o.seed};
  const SyntheticPair pair = synth_generate(spec);
  save_cloud(o.out_source, pair.source);
  save_cloud(o.out_target, pair.target);
  save_transform(o.out_truth, pair.truth);
  if (!o.out_correspondences.empty()) {
    save_correspondences(o.out_correspondences, synth_putative(pair, o.rewire, o.seed));
  }
  nlohmann::ordered_json j;
  j["source_points"] = pair.source.size();
  j["target_points"] = pair.target.size();
  j["true_inlier_count"] = pair.true_inlier_count;
  out << j.dump(2) << '\n';
  return kExitOk;
}

struct BenchOptions {
  std::string input = "builtin", report = "json";
  std::vector<double> outlier_rates{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::string> methods{"sdrsac", "tricp"};
  std::size_t n = 2000, seeds = 5;
  double noise_sigma = 0.01, epsilon = 0.01, trim = 0.7;
  std::uint64_t seed = 0;
  bool timing = false;
};

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

/// TrICP baseline: random rotation about the source centroid, centroids aligned.
inline RigidTransform random_initialization(const PointCloud& s, const PointCloud& d, std::uint64_t seed) {
  RandomStream rng(seed, {0x696e6974ULL});
  const Mat3 r = rng.rotation();
  return RigidTransform(r, d.centroid() - r * s.centroid());
}

inline int run_bench(const BenchOptions& o, std::ostream& out) {
  const PointCloud base = load_input(o.input);
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  std::ostringstream rows;
  for (double rate : o.outlier_rates) {
    std::vector<std::vector<double>> consensus(o.methods.size());
    std::size_t inliers = 0;
    for (std::size_t k = 0; k < o.seeds; ++k) {
      const std::uint64_t seed = o.seed + k;
      const SyntheticPair pair = synth_generate({base, o.n, rate, o.noise_sigma, seed});
      const PointCloud target = pair.target.with_index();
      inliers = pair.true_inlier_count;
      for (std::size_t mi = 0; mi < o.methods.size(); ++mi) {
        const std::string& method = o.methods[mi];
        RunReport r;
        r.method = method;
        nlohmann::ordered_json cfg;
        cfg["outlier_rate"] = rate;
        cfg["noise_sigma"] = o.noise_sigma;
        cfg["n"] = o.n;
        cfg["seed"] = seed;
        cfg["epsilon"] = o.epsilon;
        double seconds = 0.0;
        if (method == "sdrsac") {
          SdrsacConfig c;
          c.epsilon = o.epsilon;
          c.seed = seed;
          const RegistrationResult res = sdrsac(pair.source, target, c);
          r.transform = res.transform;
          r.consensus = res.consensus.count;
          r.iterations = res.iterations_used;
          seconds = res.wall_time;
        } else {
          IcpConfig ic;
          ic.trim_ratio = method == "tricp" ? o.trim : 1.0;
          if (method == "tricp") cfg["trim"] = o.trim;
          const auto start = std::chrono::steady_clock::now();
          const IcpResult res = icp_refine(pair.source, target, random_initialization(pair.source, target, seed), ic);
          seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          r.transform = res.transform;
          r.consensus = consensus_score(pair.source, target, res.transform, o.epsilon).count;
          r.iterations = static_cast<std::size_t>(res.iterations);
        }
        if (o.timing) r.wall_time_s = seconds;
        r.config = cfg;
        r.true_inlier_count = pair.true_inlier_count;
        attach_truth(r, pair.truth);
        consensus[mi].push_back(static_cast<double>(r.consensus));
        cells.push_back(to_json(r));
        rows << text_table_row(r);
      }
    }
    for (std::size_t mi = 0; mi < o.methods.size(); ++mi) {
      nlohmann::ordered_json s;
      s["outlier_rate"] = rate;
      s["method"] = o.methods[mi];
      s["median_consensus"] = median_of(consensus[mi]);
      s["true_inlier_count"] = inliers;
      summary.push_back(s);
    }
  }
  if (o.report == "json") {
    nlohmann::ordered_json doc;
    doc["cells"] = cells;
    doc["summary"] = summary;
    out << doc.dump(2) << '\n';
    return kExitOk;
  }
  out << text_table_header() << rows.str() << '\n';
  out << std::left << std::setw(14) << "outlier_rate" << std::setw(10) << "method" << std::right << std::setw(18)
      << "median #Corrs" << std::setw(14) << "inliers" << '\n';
  for (const auto& s : summary) {
    out << std::left << std::setw(14) << s["outlier_rate"].get<double>() << std::setw(10)
        << s["method"].get<std::string>() << std::right << std::setw(18) << s["median_consensus"].get<double>()
        << std::setw(14) << s["true_inlier_count"].get<std::size_t>() << '\n';
  }
  return kExitOk;
}

}  // namespace cli

/// Entry point of the command-line tool. Reports go to `out`, diagnostics to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Robust point-cloud registration by sampling and semidefinite relaxation"};
  app.require_subcommand(1);

  cli::RegisterOptions reg;
  auto* reg_cmd = app.add_subcommand("register", "Register two clouds without correspondences");
  cli::add_common(reg_cmd, reg);
  reg_cmd->add_option("--method", reg.method, "Method")->check(CLI::IsMember({"sdrsac", "icp", "tricp"}));
  reg_cmd->add_option("--inner-iters", reg.inner_iters, "Target samples per source sample");
  reg_cmd->add_option("--trim", reg.trim, "Kept fraction for tricp")->check(CLI::Range(0.0, 1.0));

  cli::CorrOptions corr;
  corr.base.method = "csdrsac";
  auto* corr_cmd = app.add_subcommand("register-corr", "Register two clouds from putative correspondences");
  cli::add_common(corr_cmd, corr.base);
  corr_cmd->add_option("--correspondences", corr.correspondences, "File of 'i j' index pairs")->required();
  corr_cmd->add_option("--method", corr.base.method, "Method")->check(CLI::IsMember({"csdrsac", "ransac"}));
  corr_cmd->add_option("--ransac-iters", corr.ransac_iters, "RANSAC iteration budget (default: --max-iter)");
  corr_cmd->add_option("--budget-seconds", corr.budget_seconds, "RANSAC wall-time budget")
      ->check(CLI::NonNegativeNumber);

  cli::SynthOptions syn;
  auto* syn_cmd = app.add_subcommand("synth", "Generate a synthetic registration pair");
  syn_cmd->add_option("--input", syn.input, "Base cloud, or 'builtin'");
  syn_cmd->add_option("--n", syn.n, "Source points");
  syn_cmd->add_option("--outlier-rate", syn.outlier_rate, "Fraction of target points removed")
      ->check(CLI::Range(0.0, 1.0));
  syn_cmd->add_option("--noise-sigma", syn.noise_sigma, "Per-axis noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  syn_cmd->add_option("--seed", syn.seed, "Random seed");
  syn_cmd->add_option("--out-source", syn.out_source, "Output source cloud")->required();
  syn_cmd->add_option("--out-target", syn.out_target, "Output target cloud")->required();
  syn_cmd->add_option("--out-truth", syn.out_truth, "Output ground-truth transform")->required();
  syn_cmd->add_option("--out-correspondences", syn.out_correspondences, "Output putative correspondences");
  syn_cmd->add_option("--rewire", syn.rewire, "Fraction of putative pairs rewired to wrong targets")
      ->check(CLI::Range(0.0, 1.0));

  cli::BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Sweep outlier rates on synthetic pairs");
  bench_cmd->add_option("--input", bench.input, "Base cloud, or 'builtin'");
  bench_cmd->add_option("--outlier-rates", bench.outlier_rates, "Outlier rates")->delimiter(',');
  bench_cmd->add_option("--methods", bench.methods, "Methods")
      ->delimiter(',')
      ->check(CLI::IsMember({"sdrsac", "icp", "tricp"}));
  bench_cmd->add_option("--n", bench.n, "Source points");
  bench_cmd->add_option("--seeds", bench.seeds, "Runs per outlier rate");
  bench_cmd->add_option("--seed", bench.seed, "First seed");
  bench_cmd->add_option("--noise-sigma", bench.noise_sigma, "Per-axis noise standard deviation")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--epsilon", bench.epsilon, "Inlier threshold")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--trim", bench.trim, "Kept fraction for tricp")->check(CLI::Range(0.0, 1.0));
  bench_cmd->add_option("--report", bench.report, "Report format")->check(CLI::IsMember({"json", "text"}));
  bench_cmd->add_flag("--timing", bench.timing, "Include wall times in the reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (reg_cmd->parsed()) return cli::run_register(reg, out);
    if (corr_cmd->parsed()) return cli::run_register_corr(corr, out);
    if (syn_cmd->parsed()) return cli::run_synth(syn, out);
    return cli::run_bench(bench, out);
  } catch (const cli::DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const UnsupportedFormat& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DegenerateConfiguration& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace sdrsac
