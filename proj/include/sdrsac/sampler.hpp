#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "sdrsac/errors.hpp"
#include "sdrsac/geometry.hpp"
#include "sdrsac/icp.hpp"
#include "sdrsac/matching.hpp"
#include "sdrsac/random.hpp"
#include "sdrsac/sdp.hpp"

namespace sdrsac {

/// Relaxation settings used per hypothesis: default tolerance, but a small
/// iteration cap so that one hypothesis costs a bounded amount of work.
inline SdpSettings sampler_sdp_settings() {
  SdpSettings s;
  s.max_iter = 50;
  return s;
}

struct SdrsacConfig {
  std::size_t n_sample = 16;
  std::size_t m = 4;
  double epsilon = 0.01;
  /// Segment-length tolerance of the affinity; unset means 2 * epsilon.
  std::optional<double> gamma;
  /// Hypothesis budget, counted in SDRMatching calls.
  std::size_t max_iter = 10000;
  std::size_t inner_iters = 4;
  double p_s = 0.99;
  std::uint64_t seed = 0;
  SdpSettings sdp = sampler_sdp_settings();
  /// When set, a relaxation that stops at its iteration cap is still rounded;
  /// otherwise such a hypothesis fails and scores 0.
  bool round_unconverged = true;
  IcpConfig icp;
  /// ICP iterations spent on the best hypothesis once sampling stops; 0 skips it.
  int polish_iterations = 200;

  double gamma_value() const { return gamma.value_or(2.0 * epsilon); }

  void validate() const {
    detail::require(m >= 3 && m <= n_sample && n_sample <= 20, "SdrsacConfig: need 3 <= m <= n_sample <= 20");
    detail::require(p_s > 0.0 && p_s < 1.0, "SdrsacConfig: p_s must be in (0, 1)");
    detail::require(epsilon > 0.0 && std::isfinite(epsilon), "SdrsacConfig: epsilon must be positive");
    detail::require(gamma_value() > 0.0 && std::isfinite(gamma_value()), "SdrsacConfig: gamma must be positive");
    detail::require(inner_iters >= 1, "SdrsacConfig: inner_iters must be >= 1");
    detail::require(polish_iterations >= 0, "SdrsacConfig: polish_iterations must be >= 0");
    icp.validate();
  }
};

struct TraceEntry {
  std::size_t iteration = 0;  // 0-based hypothesis index
  std::size_t score = 0;
  /// SDP objective minus the objective of the rounded matching; NaN when the hypothesis failed.
  double sdp_gap = std::numeric_limits<double>::quiet_NaN();
  /// Solver status of the hypothesis; unset for methods without a relaxation.
  std::optional<SdpStatus> sdp_status;
};

struct RegistrationResult {
  RigidTransform transform;
  ConsensusResult consensus;
  std::size_t iterations_used = 0;
  double wall_time = 0.0;
  double p_i_final = 0.0;
  std::vector<TraceEntry> trace;
};

/// Hypothesis count after which an all-inlier m-subset has been drawn with
/// probability about p_s: the integer part of log(1 - p_s) / log(1 - p_i^m),
/// at least 1. p_i >= 1 gives 1.
inline std::size_t stopping_iterations(double p_i, double p_s, std::size_t m) {
  detail::require(p_i > 0.0 && std::isfinite(p_i), "stopping_iterations: p_i must be positive");
  detail::require(p_s > 0.0 && p_s < 1.0, "stopping_iterations: p_s must be in (0, 1)");
  detail::require(m >= 3, "stopping_iterations: m must be >= 3");
  if (p_i >= 1.0) return 1;
  const double denom = std::log1p(-std::pow(p_i, static_cast<double>(m)));
  if (denom == 0.0) return std::numeric_limits<std::size_t>::max();
  const double t = std::log1p(-p_s) / denom;
  if (!(t < 1e18)) return std::numeric_limits<std::size_t>::max();
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(t + 1e-9)));
}

struct SdrMatchResult {
  /// The m rounded pairs, as indices into the two samples.
  CorrespondenceSet matching;
  RigidTransform transform;
  ConsensusResult consensus;
  bool failed = false;
  double sdp_gap = std::numeric_limits<double>::quiet_NaN();
  SdpStatus sdp_status = SdpStatus::max_iterations;
  int sdp_iterations = 0;
};

/// One hypothesis: relax and round the matching between the two samples,
/// fit a rigid motion to the m kept pairs, refine it by ICP on the full
/// clouds and score it. Failures return identity with an empty consensus.
inline SdrMatchResult sdr_matching(const PointCloud& s, const PointCloud& d, const PointCloud& s_sub,
                                   const PointCloud& d_sub, const SdrsacConfig& cfg) {
  detail::require(s_sub.size() == cfg.n_sample && d_sub.size() == cfg.n_sample,
                  "sdr_matching: samples must have n_sample points");
  const PointCloud target = d.has_index() ? d : d.with_index();

  SdrMatchResult out;
  out.failed = true;
  const AffinityMatrix a = build_affinity(s_sub, d_sub, cfg.gamma_value());
  const SdpProblem problem = assemble_problem(a, cfg.m);
  const SdpSolution sol = solve_sdp(problem, cfg.sdp);
  out.sdp_status = sol.status;
  out.sdp_iterations = sol.iterations;
  if (sol.status == SdpStatus::infeasible) return out;
  if (sol.status == SdpStatus::max_iterations && !cfg.round_unconverged) return out;

  const CorrespondenceSet full = project_assignment(sol.x);
  out.matching = select_top_m(full, sol.x, cfg.m);
  out.sdp_gap = sol.objective - matching_objective(a, out.matching);

  std::vector<Vec3> from, to;
  for (const auto& c : out.matching.pairs) {
    from.push_back(s_sub[c.source]);
    to.push_back(d_sub[c.target]);
  }
  RigidTransform estimate;
  try {
    estimate = estimate_rigid(from, to);
  } catch (const DegenerateConfiguration&) {
    return out;
  }
  const IcpResult refined = icp_refine(s, target, estimate, cfg.icp);
  out.transform = refined.transform;
  out.consensus = consensus_score(s, target, out.transform, cfg.epsilon);
  out.failed = false;
  return out;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Stream tags keep the S and D draws of one hypothesis independent.
constexpr std::uint64_t kSourceStream = 1;
constexpr std::uint64_t kTargetStream = 2;
constexpr std::uint64_t kMinimalStream = 3;

/// Longer ICP run from the winning pose. Kept only if the consensus does not drop.
inline void polish(const PointCloud& s, const PointCloud& target, const SdrsacConfig& cfg, RegistrationResult& out) {
  if (cfg.polish_iterations == 0 || out.consensus.count == 0) return;
  IcpConfig ic = cfg.icp;
  ic.max_iterations = cfg.polish_iterations;
  ic.convergence_tol = std::min(ic.convergence_tol, 1e-12);
  const IcpResult refined = icp_refine(s, target, out.transform, ic);
  ConsensusResult c = consensus_score(s, target, refined.transform, cfg.epsilon);
  if (c.count >= out.consensus.count) {
    out.consensus = std::move(c);
    out.transform = refined.transform;
  }
}

}  // namespace detail

/// Randomized registration without correspondences. Each outer round draws
/// one source sample and inner_iters target samples; the inlier-rate
/// estimate and the stopping bound are refreshed after every round.
inline RegistrationResult sdrsac(const PointCloud& s, const PointCloud& d, const SdrsacConfig& cfg) {
  cfg.validate();
  detail::require(s.size() >= cfg.n_sample && d.size() >= cfg.n_sample, "sdrsac: clouds smaller than n_sample");
  const auto start = std::chrono::steady_clock::now();
  const PointCloud target = d.has_index() ? d : d.with_index();

  RegistrationResult out;
  const double floor_p = static_cast<double>(cfg.m) / static_cast<double>(cfg.n_sample);
  out.p_i_final = floor_p;
  std::size_t iter = 0;
  for (std::uint64_t outer = 0; iter < cfg.max_iter; ++outer) {
    RandomStream pick_s(cfg.seed, {detail::kSourceStream, outer});
    const PointCloud s_sub = s.subset(pick_s.sample_indices(s.size(), cfg.n_sample));
    // The last round is cut short so that no more than max_iter hypotheses run.
    const std::size_t round = std::min(cfg.inner_iters, cfg.max_iter - iter);
    for (std::size_t inner = 0; inner < round; ++inner) {
      RandomStream pick_d(cfg.seed, {detail::kTargetStream, outer, inner});
      const PointCloud d_sub = target.subset(pick_d.sample_indices(target.size(), cfg.n_sample));
      const SdrMatchResult h = sdr_matching(s, target, s_sub, d_sub, cfg);
      out.trace.push_back({iter + inner, h.consensus.count, h.sdp_gap, h.sdp_status});
      if (!h.failed && h.consensus.count > out.consensus.count) {
        out.consensus = h.consensus;
        out.transform = h.transform;
      }
    }
    iter += round;
    out.p_i_final = std::max(static_cast<double>(out.consensus.count) / static_cast<double>(s.size()), floor_p);
    if (iter >= stopping_iterations(out.p_i_final, cfg.p_s, cfg.m)) break;
  }
  detail::polish(s, target, cfg, out);
  out.iterations_used = iter;
  out.wall_time = detail::seconds_since(start);
  return out;
}

namespace detail {

/// Putative pairs restricted to one pair per source index (first occurrence wins).
inline std::vector<Correspondence> unique_sources(const CorrespondenceSet& putative, std::size_t s_size,
                                                  std::size_t d_size) {
  std::vector<char> used(s_size, 0);
  std::vector<Correspondence> out;
  for (const auto& c : putative.pairs) {
    require(c.source < s_size && c.target < d_size, "putative correspondence index out of range");
    if (used[c.source]) continue;
    used[c.source] = 1;
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Registration from putative correspondences: the target sample is the set
/// of putative partners of the source sample, so no inner loop is needed.
inline RegistrationResult csdrsac(const PointCloud& s, const PointCloud& d, const CorrespondenceSet& putative,
                                  const SdrsacConfig& cfg) {
  cfg.validate();
  const auto pairs = detail::unique_sources(putative, s.size(), d.size());
  detail::require(pairs.size() >= cfg.n_sample, "csdrsac: fewer putative sources than n_sample");
  const auto start = std::chrono::steady_clock::now();
  const PointCloud target = d.has_index() ? d : d.with_index();

  RegistrationResult out;
  const double floor_p = static_cast<double>(cfg.m) / static_cast<double>(cfg.n_sample);
  out.p_i_final = floor_p;
  std::size_t iter = 0;
  while (iter < cfg.max_iter) {
    RandomStream pick(cfg.seed, {detail::kSourceStream, iter});
    std::vector<std::size_t> src_idx, dst_idx;
    for (std::size_t k : pick.sample_indices(pairs.size(), cfg.n_sample)) {
      src_idx.push_back(pairs[k].source);
      dst_idx.push_back(pairs[k].target);
    }
    const SdrMatchResult h = sdr_matching(s, target, s.subset(src_idx), target.subset(dst_idx), cfg);
    out.trace.push_back({iter, h.consensus.count, h.sdp_gap, h.sdp_status});
    if (!h.failed && h.consensus.count > out.consensus.count) {
      out.consensus = h.consensus;
      out.transform = h.transform;
    }
    ++iter;
    out.p_i_final = std::max(static_cast<double>(out.consensus.count) / static_cast<double>(pairs.size()), floor_p);
    if (iter >= stopping_iterations(std::min(out.p_i_final, 1.0), cfg.p_s, cfg.m)) break;
  }
  detail::polish(s, target, cfg, out);
  out.iterations_used = iter;
  out.wall_time = detail::seconds_since(start);
  return out;
}

struct IterationBudget {
  std::size_t iterations;
};
struct TimeBudget {
  double seconds;
};
using Budget = std::variant<IterationBudget, TimeBudget>;

/// Plain 3-point RANSAC over putative pairs. Stops at the budget or, when
/// `adaptive` is set, once the usual bound for the best inlier ratio is met.
inline RegistrationResult ransac_baseline(const PointCloud& s, const PointCloud& d, const CorrespondenceSet& putative,
                                          double eps, Budget budget, std::uint64_t seed, double p_s = 0.99,
                                          bool adaptive = true) {
  detail::require(putative.size() >= 3, "ransac_baseline: need at least 3 putative pairs");
  detail::require(eps > 0.0, "ransac_baseline: eps must be positive");
  detail::require(p_s > 0.0 && p_s < 1.0, "ransac_baseline: p_s must be in (0, 1)");
  for (const auto& c : putative.pairs) {
    detail::require(c.source < s.size() && c.target < d.size(), "ransac_baseline: putative index out of range");
  }
  const auto start = std::chrono::steady_clock::now();
  const PointCloud target = d.has_index() ? d : d.with_index();
  const auto* iterations = std::get_if<IterationBudget>(&budget);
  const auto* seconds = std::get_if<TimeBudget>(&budget);

  RegistrationResult out;
  std::size_t iter = 0;
  auto exhausted = [&] {
    if (iterations) return iter >= iterations->iterations;
    return detail::seconds_since(start) >= seconds->seconds;
  };
  while (!exhausted()) {
    RandomStream pick(seed, {detail::kMinimalStream, iter});
    const auto idx = pick.sample_indices(putative.size(), 3);
    ++iter;
    std::vector<Vec3> from, to;
    for (std::size_t k : idx) {
      from.push_back(s[putative.pairs[k].source]);
      to.push_back(target[putative.pairs[k].target]);
    }
    RigidTransform t;
    try {
      t = estimate_rigid(from, to);
    } catch (const DegenerateConfiguration&) {
      out.trace.push_back({iter - 1, 0, std::numeric_limits<double>::quiet_NaN(), std::nullopt});
      continue;
    }
    const ConsensusResult c = consensus_score(s, target, t, eps);
    out.trace.push_back({iter - 1, c.count, std::numeric_limits<double>::quiet_NaN(), std::nullopt});
    if (c.count > out.consensus.count) {
      out.consensus = c;
      out.transform = t;
    }
    out.p_i_final = static_cast<double>(out.consensus.count) / static_cast<double>(putative.size());
    if (adaptive && out.p_i_final > 0.0 && iter >= stopping_iterations(std::min(out.p_i_final, 1.0), p_s, 3)) break;
  }
  out.iterations_used = iter;
  out.wall_time = detail::seconds_since(start);
  return out;
}

}  // namespace sdrsac
