#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"
#include "subgrad/dynamics.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/setvalued.hpp"
#include "subgrad/trajectory.hpp"

namespace subgrad {

// ------------------------------------------------------------ criticality

/// residual = dist(0, conv of estimated E[D(w, xi)]), the weak criticality
/// measure a sampled first-order method can actually certify. The Clarke
/// residual of the closed-form risk, when known, is reported alongside: the
/// two differ exactly at artificial critical points.
struct CriticalityReport {
  ParamVector w;
  double residual = 0;
  double se_budget = 0;
  std::optional<double> clarke_residual;
};

inline CriticalityReport criticality_residual(const Problem& problem,
                                              const ParamVector& w,
                                              std::size_t n_samples,
                                              const std::vector<SelectionPolicy>& policies,
                                              RngSpec rng) {
  require(n_samples >= 100, ErrorCode::InvalidSpec,
          "criticality estimate needs n_samples >= 100");
  SetEstimate est = estimate_aumann(problem, w, n_samples, policies, rng);
  MinNormResult mn = min_norm_point(est);
  CriticalityReport rep;
  rep.w = w;
  rep.residual = mn.norm;
  rep.se_budget = est.meta().exact
                      ? 0.0
                      : 4.0 * est.meta().max_sample_norm /
                            std::sqrt(double(est.meta().n_samples));
  if (problem.closed_form())
    rep.clarke_residual = problem.closed_form()->clarke_dist0(w);
  return rep;
}

// ------------------------------------------------------------ occupation

/// Step-size-weighted visit masses around candidate accumulation points,
/// reported at checkpoints k/2, 3k/4, k so the trend toward the limsup in
/// the essential-accumulation definition is visible. The positive-limsup
/// property is asymptotic and undecidable from finite data; a mass >= 0.05
/// persisting across checkpoints is the documented surrogate.
struct OccupationReport {
  std::vector<ParamVector> centers;
  std::vector<double> radii;
  // masses[center][radius] at checkpoints {k/2, 3k/4, k}
  std::vector<std::vector<std::array<double, 3>>> masses;
  static constexpr double kPersistentMass = 0.05;
};

/// Exact alpha-mass of the ball B(center, r) among records with k < k_limit.
inline ExactSum occupation_alpha_mass(const Trajectory& traj, const ParamVector& center,
                                      double radius, std::uint64_t k_limit) {
  ExactSum num;
  for (const auto& rec : traj.records()) {
    if (rec.k >= k_limit) break;
    double d2 = 0;
    for (std::size_t c = 0; c < center.size(); ++c) {
      double d = rec.w[c] - center[c];
      d2 += d * d;
    }
    if (d2 <= radius * radius) num.add(rec.alpha);
  }
  return num;
}

inline ExactSum occupation_total_alpha(const Trajectory& traj, std::uint64_t k_limit) {
  ExactSum den;
  for (const auto& rec : traj.records()) {
    if (rec.k >= k_limit) break;
    den.add(rec.alpha);
  }
  return den;
}

inline OccupationReport occupation_measure(const Trajectory& traj,
                                           std::vector<double> radii,
                                           std::size_t max_centers = 4) {
  require(!traj.records().empty(), ErrorCode::InvalidSpec, "empty trajectory");
  require(!radii.empty(), ErrorCode::InvalidSpec, "need at least one radius");
  std::sort(radii.begin(), radii.end());

  const auto& recs = traj.records();
  std::uint64_t final_k = recs.back().k + 1;

  // late phase = last half of the alpha clock
  std::vector<double> tau(recs.size());
  double clock = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    tau[i] = clock;
    clock += recs[i].alpha;
  }
  std::size_t late_begin = 0;
  while (late_begin < recs.size() && tau[late_begin] < clock / 2) ++late_begin;
  if (late_begin == recs.size()) late_begin = recs.size() - 1;

  // candidate centers: an even subsample of the late phase
  std::vector<std::size_t> candidates;
  std::size_t late_n = recs.size() - late_begin;
  std::size_t stride = std::max<std::size_t>(1, late_n / 256);
  for (std::size_t i = late_begin; i < recs.size(); i += stride) candidates.push_back(i);

  double r_cluster = radii.front();
  double late_total = 0;
  for (std::size_t i = late_begin; i < recs.size(); ++i) late_total += recs[i].alpha;

  // greedy cover by alpha-mass
  std::vector<ParamVector> centers;
  std::vector<char> taken(candidates.size(), 0);
  while (centers.size() < max_centers) {
    double best_mass = 0;
    std::size_t best = candidates.size();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (taken[ci]) continue;
      const ParamVector& c = recs[candidates[ci]].w;
      double mass = 0;
      for (std::size_t i = late_begin; i < recs.size(); ++i) {
        double d2 = 0;
        for (std::size_t k = 0; k < c.size(); ++k) {
          double d = recs[i].w[k] - c[k];
          d2 += d * d;
        }
        if (d2 <= r_cluster * r_cluster) mass += recs[i].alpha;
      }
      if (mass > best_mass) {
        best_mass = mass;
        best = ci;
      }
    }
    if (best == candidates.size() || best_mass < 0.02 * late_total) break;
    const ParamVector& chosen = recs[candidates[best]].w;
    centers.push_back(chosen);
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (taken[ci]) continue;
      double d2 = 0;
      for (std::size_t k = 0; k < chosen.size(); ++k) {
        double d = recs[candidates[ci]].w[k] - chosen[k];
        d2 += d * d;
      }
      if (d2 <= 4.0 * r_cluster * r_cluster) taken[ci] = 1;
    }
  }

  OccupationReport rep;
  rep.centers = std::move(centers);
  rep.radii = radii;
  std::array<std::uint64_t, 3> checkpoints = {final_k / 2, 3 * (final_k / 4), final_k};
  for (const auto& c : rep.centers) {
    std::vector<std::array<double, 3>> per_radius;
    for (double r : radii) {
      std::array<double, 3> m{};
      for (int j = 0; j < 3; ++j) {
        ExactSum num = occupation_alpha_mass(traj, c, r, checkpoints[j]);
        ExactSum den = occupation_total_alpha(traj, checkpoints[j]);
        m[j] = den.value() > 0 ? num.value() / den.value() : 0.0;
      }
      per_radius.push_back(m);
    }
    rep.masses.push_back(std::move(per_radius));
  }
  return rep;
}

// ------------------------------------------------------------ chain rule

struct PiecewiseAffineCurve {
  std::vector<double> t;        // breakpoints, 0 = t_0 < ... < t_M = 1
  std::vector<ParamVector> pts;

  void validate() const {
    require(t.size() == pts.size() && t.size() >= 2, ErrorCode::InvalidSpec,
            "curve needs matching knots");
    require(t.front() == 0.0 && t.back() == 1.0, ErrorCode::InvalidSpec,
            "curve parametrized on [0,1]");
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
      require(t[i] < t[i + 1], ErrorCode::InvalidSpec, "curve knots must increase");
  }

  static PiecewiseAffineCurve segment(ParamVector a, ParamVector b) {
    return {{0.0, 1.0}, {std::move(a), std::move(b)}};
  }
};

struct ChainRuleReport {
  double lhs = 0;   // E f(gamma(1)) - E f(gamma(0))
  double rhs = 0;   // integral of <mean selection, curve velocity>
  double gap = 0;
  double se = 0;    // standard error of the per-sample gap (0 when exact)
  double tol = 0;
  bool pass = false;
};

/// Tests the chain-rule identity d/dt E f(gamma(t)) = <E v(gamma(t)), d
/// gamma/dt> in integrated form, with common random numbers on both sides and
/// composite trapezoid on a uniform grid per affine segment. Per sample the
/// identity is exact up to quadrature, so the Monte Carlo part of the budget
/// is the standard error of the per-sample quadrature gap.
inline ChainRuleReport validate_chain_rule(const Problem& problem,
                                           const PiecewiseAffineCurve& curve,
                                           std::size_t n_quad,
                                           std::size_t n_samples = 64,
                                           const SelectionPolicy& policy = {},
                                           RngSpec rng = {}, double tol_base = 1e-3) {
  curve.validate();
  require(n_quad >= 100, ErrorCode::InvalidSpec, "n_quad must be >= 100 per segment");

  // sample set with weights: exact atoms or equal-weight Monte Carlo
  std::vector<Vec> samples;
  std::vector<double> weights;
  if (problem.finite_atoms()) {
    for (auto& [s, w] : problem.sample_atoms()) {
      samples.push_back(std::move(s));
      weights.push_back(w);
    }
  } else {
    for (std::size_t i = 0; i < n_samples; ++i) {
      samples.push_back(problem.sample(rng, i));
      weights.push_back(1.0 / double(n_samples));
    }
  }

  // quadrature nodes and segment velocities, shared by all samples
  std::size_t p = problem.w_dim();
  std::vector<Vec> nodes;
  std::vector<Vec> velocity;     // per node, velocity of its segment
  std::vector<double> trap_w;    // trapezoid weight (dt or dt/2 at segment ends)
  for (std::size_t seg = 0; seg + 1 < curve.t.size(); ++seg) {
    double t0 = curve.t[seg], t1 = curve.t[seg + 1];
    double dt = (t1 - t0) / double(n_quad);
    Vec vel(p);
    for (std::size_t c = 0; c < p; ++c)
      vel[c] = (curve.pts[seg + 1][c] - curve.pts[seg][c]) / (t1 - t0);
    for (std::size_t j = 0; j <= n_quad; ++j) {
      double frac = double(j) / double(n_quad);
      Vec x(p);
      for (std::size_t c = 0; c < p; ++c)
        x[c] = curve.pts[seg][c] + frac * (curve.pts[seg + 1][c] - curve.pts[seg][c]);
      nodes.push_back(std::move(x));
      velocity.push_back(vel);
      trap_w.push_back(j == 0 || j == n_quad ? dt / 2 : dt);
    }
  }

  TapeWorkspace ws;
  Vec grad(p);
  std::vector<double> gaps(samples.size());
  std::vector<double> lhs_terms(samples.size()), rhs_terms(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double integral = 0;
    double f_start = 0, f_end = 0;
    for (std::size_t nidx = 0; nidx < nodes.size(); ++nidx) {
      double fval = problem.eval_backprop(nodes[nidx], samples[i], policy, ws, grad);
      integral += trap_w[nidx] * dot(grad, velocity[nidx]);
      if (nidx == 0) f_start = fval;
      if (nidx + 1 == nodes.size()) f_end = fval;
    }
    lhs_terms[i] = f_end - f_start;
    rhs_terms[i] = integral;
    gaps[i] = lhs_terms[i] - rhs_terms[i];
  }

  ChainRuleReport rep;
  double lhs = 0, rhs = 0, gap_mean = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    lhs += weights[i] * lhs_terms[i];
    rhs += weights[i] * rhs_terms[i];
    gap_mean += weights[i] * gaps[i];
  }
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.gap = std::abs(gap_mean);
  if (!problem.finite_atoms() && samples.size() > 1) {
    double var = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double d = gaps[i] - gap_mean;
      var += d * d;
    }
    rep.se = std::sqrt(var / (double(samples.size()) * double(samples.size() - 1)));
  }
  rep.tol = 4.0 * rep.se + tol_base;
  rep.pass = rep.gap <= rep.tol;
  return rep;
}

// ------------------------------------------------------------ interchange

struct InterchangeReport {
  double lhs = 0;  // <E backprop, q>
  double rhs = 0;  // directional fd of the estimated risk
  double se = 0;
  double tol = 0;
  bool pass = false;
};

/// Compares <E[v], q> against the central difference of the Monte Carlo risk
/// along q with common random numbers. Throws KinkSuspected when per-sample
/// one-sided slopes disagree: the caller is responsible for querying smooth
/// points, and this is the guard.
inline InterchangeReport interchange_check(const Problem& problem, const ParamVector& w,
                                           const ParamVector& q, std::size_t n_samples,
                                           const SelectionPolicy& policy = {},
                                           RngSpec rng = {}, double h = 0.0,
                                           double fd_allowance = 1e-4) {
  require(q.size() == problem.w_dim(), ErrorCode::DimensionMismatch, "q dimension");
  require(q.norm2() > 0, ErrorCode::ZeroDirection, "direction is zero");
  if (h == 0.0) h = 1e-5 * (1.0 + w.norm_inf());

  std::vector<Vec> samples;
  std::vector<double> weights;
  if (problem.finite_atoms()) {
    for (auto& [s, wt] : problem.sample_atoms()) {
      samples.push_back(std::move(s));
      weights.push_back(wt);
    }
  } else {
    for (std::size_t i = 0; i < n_samples; ++i) {
      samples.push_back(problem.sample(rng, i));
      weights.push_back(1.0 / double(n_samples));
    }
  }

  ParamVector wp = w, wm = w;
  for (std::size_t c = 0; c < w.size(); ++c) {
    wp.at_mut(c) += h * q[c];
    wm.at_mut(c) -= h * q[c];
  }

  TapeWorkspace ws;
  Vec grad(problem.w_dim());
  double lhs = 0, rhs = 0, kink_stat = 0, slope_scale = 0, se_acc = 0;
  std::vector<double> deltas(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double f0 = problem.eval_backprop(w.span(), samples[i], policy, ws, grad);
    double lhs_i = dot(grad, q.span());
    double fp = problem.eval(wp.span(), samples[i], ws);
    double fm = problem.eval(wm.span(), samples[i], ws);
    double rhs_i = (fp - fm) / (2.0 * h);
    double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    kink_stat += weights[i] * std::abs(fwd - bwd);
    slope_scale += weights[i] * std::abs(rhs_i);
    lhs += weights[i] * lhs_i;
    rhs += weights[i] * rhs_i;
    deltas[i] = lhs_i - rhs_i;
  }
  if (kink_stat > 1e-2 * (1.0 + slope_scale))
    fail(ErrorCode::KinkSuspected,
         "one-sided slopes disagree: w is too close to a nonsmooth set");

  double mean_delta = lhs - rhs;
  if (!problem.finite_atoms() && samples.size() > 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double d = deltas[i] - mean_delta;
      se_acc += d * d;
    }
    se_acc = std::sqrt(se_acc / (double(samples.size()) * double(samples.size() - 1)));
  }

  InterchangeReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.se = se_acc;
  rep.tol = 4.0 * se_acc + fd_allowance;
  rep.pass = std::abs(lhs - rhs) <= rep.tol;
  return rep;
}

// ------------------------------------------------------------ semismoothness

struct SemismoothnessReport {
  std::vector<double> residuals;
  double max_tail = 0;
  bool violated = false;
  std::size_t witness = 0;  // index of the violating residual, if any
};

/// First-order remainder (f(y_j) - f(x) - g_j (y_j - x)) / |y_j - x| along an
/// approach sequence with chosen oracle values g_j. A semismooth generalized
/// gradient forces the tail to 0; conservativity alone does not.
inline SemismoothnessReport semismoothness_residual(
    const std::function<double(double)>& f, double x, std::span<const double> y,
    std::span<const double> g, double tol = 1e-6) {
  require(y.size() == g.size() && !y.empty(), ErrorCode::InvalidSpec,
          "approach sequence mismatch");
  SemismoothnessReport rep;
  double fx = f(x);
  for (std::size_t j = 0; j < y.size(); ++j) {
    require(y[j] != x, ErrorCode::InvalidSpec, "approach point equals x");
    double dy = y[j] - x;
    rep.residuals.push_back((f(y[j]) - fx - g[j] * dy) / std::abs(dy));
  }
  std::size_t tail_begin = (3 * rep.residuals.size()) / 4;
  for (std::size_t j = tail_begin; j < rep.residuals.size(); ++j) {
    if (rep.residuals[j] > rep.max_tail) rep.max_tail = rep.residuals[j];
    if (rep.residuals[j] > tol && !rep.violated) {
      rep.violated = true;
      rep.witness = j;
    }
  }
  return rep;
}

// ------------------------------------------------------------ noise verdict

enum class NoiseVerdict { Pass, Fail, NotApplicable };

/// Verdict is gated on the schedule flags: without square summability or the
/// o(1/log k) rate the extinction statements say nothing, so the statistics
/// come back NotApplicable.
inline NoiseVerdict noise_extinction_check(const TailNoiseStats& stats,
                                           const ScheduleFlags& flags) {
  require(stats.n_steps >= 10000, ErrorCode::InsufficientData,
          "need at least 1e4 steps for tail statistics");
  if (flags.square_summable)
    return stats.cauchy_decreasing() ? NoiseVerdict::Pass : NoiseVerdict::Fail;
  if (flags.little_o_log)
    return stats.windowed_decreasing() ? NoiseVerdict::Pass : NoiseVerdict::Fail;
  return NoiseVerdict::NotApplicable;
}

}  // namespace subgrad
