#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/schedule.hpp"
#include "subgrad/setvalued.hpp"
#include "subgrad/trajectory.hpp"

namespace subgrad {

// ------------------------------------------------------------ SGD recursion

struct RunConfig {
  StepSchedule schedule = StepSchedule::constant(0.1);
  ParamVector w0;
  std::uint64_t n_iters = 1;
  SelectionPolicy policy;
  RngSpec rng;
  std::uint64_t record_every = 1;
  double divergence_norm = 1e8;

  void validate() const {
    require(n_iters >= 1, ErrorCode::InvalidSpec, "n_iters must be >= 1");
    require(record_every >= 1, ErrorCode::InvalidSpec, "record_every must be >= 1");
  }
};

/// Runs w_{k+1} = w_k - alpha_k v(w_k, xi_k) and streams each step to the
/// callback before the update is applied. Returns the final iterate; sets
/// *diverged when the guard ||w|| > divergence_norm stops the run early.
/// A diverged run is a result, not a crash: boundedness is an assumption.
template <typename Step>
ParamVector run_sgd_streaming(const Problem& problem, const RunConfig& cfg,
                              Step&& on_step, bool* diverged = nullptr) {
  cfg.validate();
  require(cfg.w0.size() == problem.w_dim(), ErrorCode::DimensionMismatch,
          "w0 dimension");
  TapeWorkspace ws;
  ParamVector w = cfg.w0;
  Vec grad(problem.w_dim());
  if (diverged) *diverged = false;
  for (std::uint64_t k = 0; k < cfg.n_iters; ++k) {
    Vec s = problem.sample(cfg.rng, k);
    double loss = problem.eval_backprop(w.span(), s, cfg.policy, ws, grad);
    double alpha = cfg.schedule.alpha(k);
    ParamVector v{grad};
    on_step(k, w, alpha, v, loss);
    w.axpy_sub(alpha, v);
    if (w.norm2() > cfg.divergence_norm) {
      if (diverged) *diverged = true;
      break;
    }
  }
  return w;
}

inline Trajectory run_sgd(const Problem& problem, const RunConfig& cfg) {
  cfg.validate();
  Trajectory traj(problem.w_dim(), cfg.record_every);
  std::uint64_t steps_done = 0;
  bool diverged = false;
  ParamVector final_w = run_sgd_streaming(
      problem, cfg,
      [&](std::uint64_t k, const ParamVector& w, double alpha, const ParamVector& v,
          double loss) {
        steps_done = k + 1;
        if (k % cfg.record_every == 0)
          traj.append({k, w, alpha, k, v, loss});
      },
      &diverged);
  traj.finish(std::move(final_w), steps_done,
              diverged ? RunStatus::Diverged : RunStatus::Completed);
  return traj;
}

// ------------------------------------------------------------ noise split

/// Per-record split v_k = a_k + u_k with a_k = E[v(w_k, xi) | w_k]: the mean
/// field and the centered noise, plus the partial sums S_m = sum alpha_k u_k
/// whose extinction the step-size conditions guarantee.
struct NoiseDecomposition {
  std::vector<Vec> a;
  std::vector<Vec> u;
  std::vector<Vec> partial_sums;
};

inline Vec mean_field(const Problem& problem, const ParamVector& w,
                      const SelectionPolicy& policy, std::size_t n_mc, RngSpec rng) {
  TapeWorkspace ws;
  std::size_t p = problem.w_dim();
  Vec grad(p);
  if (problem.finite_atoms()) {
    Vec mean(p, 0.0);
    for (const auto& [s, weight] : problem.sample_atoms()) {
      problem.eval_backprop(w.span(), s, policy, ws, grad);
      for (std::size_t c = 0; c < p; ++c) mean[c] += weight * grad[c];
    }
    return mean;
  }
  std::vector<Vec> grads(n_mc, Vec(p));
  for (std::size_t i = 0; i < n_mc; ++i)
    problem.eval_backprop(w.span(), problem.sample(rng, i), policy, ws, grads[i]);
  Vec col(n_mc), mean(p);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t i = 0; i < n_mc; ++i) col[i] = grads[i][c];
    mean[c] = pairwise_mean(col);
  }
  return mean;
}

inline NoiseDecomposition noise_decomposition(const Trajectory& traj,
                                              const Problem& problem,
                                              std::size_t n_mc,
                                              const SelectionPolicy& policy,
                                              RngSpec rng) {
  NoiseDecomposition out;
  std::size_t p = problem.w_dim();
  Vec running(p, 0.0);
  for (std::size_t r = 0; r < traj.records().size(); ++r) {
    const auto& rec = traj.records()[r];
    Vec a = mean_field(problem, rec.w, policy, n_mc, rng.substream(r));
    Vec u(p);
    for (std::size_t c = 0; c < p; ++c) u[c] = rec.v[c] - a[c];
    for (std::size_t c = 0; c < p; ++c) running[c] += rec.alpha * u[c];
    out.a.push_back(std::move(a));
    out.u.push_back(std::move(u));
    out.partial_sums.push_back(running);
  }
  return out;
}

// --------------------------------------------------- tail noise statistics

/// Tail statistics of S_m = sum_{i<=m} alpha_i u_i at checkpoints K/4, K/2,
/// 3K/4: the Cauchy deviation sup_{m in [k,K]} ||S_m - S_k|| and its
/// time-windowed variant restricted to sum_{i in [k,m]} alpha_i <= T.
/// Computed streaming so K = 1e6 costs no trajectory storage.
struct TailNoiseStats {
  std::array<double, 3> cauchy{};
  std::array<double, 3> windowed{};
  std::uint64_t n_steps = 0;

  bool cauchy_decreasing() const {
    return cauchy[0] > cauchy[1] && cauchy[1] > cauchy[2];
  }
  bool windowed_decreasing() const {
    return windowed[0] > windowed[1] && windowed[1] > windowed[2];
  }
};

/// Same statistics from a stored decomposition (needs an unthinned
/// trajectory, whose partial sums the decomposition already carries).
inline TailNoiseStats tail_stats_from(const NoiseDecomposition& dec,
                                      const Trajectory& traj, double window_T = 1.0) {
  require(traj.stride() == 1, ErrorCode::InvalidSpec,
          "tail statistics need an unthinned trajectory");
  require(dec.partial_sums.size() == traj.records().size(), ErrorCode::InvalidSpec,
          "decomposition does not match the trajectory");
  TailNoiseStats stats;
  std::size_t n = dec.partial_sums.size();
  stats.n_steps = n;
  std::array<std::size_t, 3> marks = {n / 4, n / 2, 3 * (n / 4)};
  for (int m = 0; m < 3; ++m) {
    if (marks[m] == 0 || marks[m] > n) continue;
    const Vec& snap = dec.partial_sums[marks[m] - 1];
    double window_alpha = 0;
    for (std::size_t i = marks[m]; i < n; ++i) {
      double dev2 = 0;
      for (std::size_t c = 0; c < snap.size(); ++c) {
        double d = dec.partial_sums[i][c] - snap[c];
        dev2 += d * d;
      }
      double dev = std::sqrt(dev2);
      stats.cauchy[m] = std::max(stats.cauchy[m], dev);
      if (window_alpha <= window_T) {
        window_alpha += traj.records()[i].alpha;
        stats.windowed[m] = std::max(stats.windowed[m], dev);
      }
    }
  }
  return stats;
}

inline TailNoiseStats tail_noise_stats(const Problem& problem, const RunConfig& cfg,
                                       std::size_t n_mc, double window_T = 1.0) {
  TailNoiseStats stats;
  stats.n_steps = cfg.n_iters;
  std::size_t p = problem.w_dim();
  std::array<std::uint64_t, 3> marks = {cfg.n_iters / 4, cfg.n_iters / 2,
                                        3 * (cfg.n_iters / 4)};
  Vec s_running(p, 0.0);
  std::array<Vec, 3> snapshots;
  std::array<double, 3> window_alpha{};
  std::array<bool, 3> active{};

  run_sgd_streaming(problem, cfg,
                    [&](std::uint64_t k, const ParamVector& w, double alpha,
                        const ParamVector& v, double) {
                      Vec a = mean_field(problem, w, cfg.policy, n_mc,
                                         cfg.rng.substream(0xa0000000ULL + k));
                      for (std::size_t c = 0; c < p; ++c)
                        s_running[c] += alpha * (v[c] - a[c]);
                      for (int m = 0; m < 3; ++m) {
                        if (k + 1 == marks[m]) {
                          snapshots[m] = s_running;
                          active[m] = true;
                        } else if (active[m]) {
                          double dev2 = 0;
                          for (std::size_t c = 0; c < p; ++c) {
                            double d = s_running[c] - snapshots[m][c];
                            dev2 += d * d;
                          }
                          double dev = std::sqrt(dev2);
                          stats.cauchy[m] = std::max(stats.cauchy[m], dev);
                          if (window_alpha[m] <= window_T) {
                            window_alpha[m] += alpha;
                            stats.windowed[m] = std::max(stats.windowed[m], dev);
                          }
                        }
                      }
                    });
  return stats;
}

// ------------------------------------------------------------ Euler flow

enum class FlowField { MinNormSelection, PolicyAverage };

struct FlowConfig {
  ParamVector w0;
  double horizon = 1.0;
  double euler_dt = 1e-2;
  FlowField field = FlowField::MinNormSelection;
  std::vector<SelectionPolicy> policies = {SelectionPolicy{}};
  std::size_t n_samples = 512;    // per-step set estimate
  std::size_t risk_samples = 2000;  // common-random-number risk track
  RngSpec rng;
  double divergence_norm = 1e8;

  void validate() const {
    require(euler_dt > 0, ErrorCode::InvalidSpec, "euler_dt must be > 0");
    require(horizon >= euler_dt, ErrorCode::InvalidSpec, "horizon < euler_dt");
    require(!policies.empty(), ErrorCode::InvalidSpec, "need at least one policy");
  }
};

struct FlowPath {
  std::vector<double> t;
  std::vector<ParamVector> w;
  std::vector<ParamVector> field;  // applied descent direction per step
  std::vector<double> risk;
  std::vector<double> risk_se;
  RunStatus status = RunStatus::Completed;

  void to_csv(std::ostream& os) const {
    std::size_t p = w.empty() ? 0 : w.front().size();
    os << "t,k,alpha,sample_index,loss_sample";
    for (std::size_t i = 0; i < p; ++i) os << ",w_" << i;
    for (std::size_t i = 0; i < p; ++i) os << ",v_" << i;
    os << "\n";
    for (std::size_t j = 0; j < w.size(); ++j) {
      detail::print_g17(os, t[j]);
      os << "," << j << ",";
      detail::print_g17(os, j + 1 < t.size() ? t[j + 1] - t[j] : 0.0);
      os << "," << j << ",";
      detail::print_g17(os, risk[j]);
      for (std::size_t i = 0; i < p; ++i) {
        os << ",";
        detail::print_g17(os, this->w[j][i]);
      }
      const ParamVector* f = j < field.size() ? &field[j] : nullptr;
      for (std::size_t i = 0; i < p; ++i) {
        os << ",";
        detail::print_g17(os, f ? (*f)[i] : 0.0);
      }
      os << "\n";
    }
  }
};

/// Explicit Euler on w' in -E[D(w, xi)]: the step direction is the min-norm
/// element of the estimated set (the lazy selection, which makes the descent
/// property sharp) or the averaged selection of the first policy.
inline FlowPath run_flow(const Problem& problem, const FlowConfig& cfg) {
  cfg.validate();
  require(cfg.w0.size() == problem.w_dim(), ErrorCode::DimensionMismatch,
          "w0 dimension");
  FlowPath path;
  std::size_t steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.euler_dt));
  RngSpec risk_rng = cfg.rng.substream(0xf10c0000ULL);

  auto risk_at = [&](const ParamVector& w, double* se) {
    return problem.risk_estimate(w, cfg.risk_samples, risk_rng, se);
  };

  ParamVector w = cfg.w0;
  double se = 0;
  double j_prev = risk_at(w, &se);
  path.t.push_back(0.0);
  path.w.push_back(w);
  path.risk.push_back(j_prev);
  path.risk_se.push_back(se);

  int consecutive_increases = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    SetEstimate est = estimate_aumann(problem, w, cfg.n_samples, cfg.policies,
                                      cfg.rng.substream(1 + step));
    ParamVector g = cfg.field == FlowField::MinNormSelection
                        ? min_norm_point(est).point
                        : ParamVector(est.points().front());
    path.field.push_back(g);
    w.axpy_sub(cfg.euler_dt, g);
    double j_now = risk_at(w, &se);
    path.t.push_back(double(step + 1) * cfg.euler_dt);
    path.w.push_back(w);
    path.risk.push_back(j_now);
    path.risk_se.push_back(se);

    double budget = 10.0 * se + 4e-16 * (1.0 + std::abs(j_prev));
    consecutive_increases = j_now > j_prev + budget ? consecutive_increases + 1 : 0;
    if (consecutive_increases >= 3)
      fail(ErrorCode::StepTooLarge,
           "risk keeps increasing beyond 10x its standard error: euler_dt too coarse");
    j_prev = j_now;
    if (w.norm2() > cfg.divergence_norm) {
      path.status = RunStatus::Diverged;
      break;
    }
  }
  return path;
}

// ------------------------------------------------------- affine interpolation

/// Piecewise-affine path through the iterates on the algorithmic clock
/// tau_k = sum_{i<k} alpha_i, the time scale on which the recursion tracks
/// the flow.
class AffineInterpolation {
 public:
  AffineInterpolation(std::vector<double> tau, std::vector<ParamVector> w)
      : tau_(std::move(tau)), w_(std::move(w)) {
    require(tau_.size() == w_.size() && !tau_.empty(), ErrorCode::InvalidSpec,
            "interpolation knots mismatch");
  }

  double total_time() const { return tau_.back(); }
  const std::vector<double>& knots() const { return tau_; }

  ParamVector at(double t) const {
    if (t <= tau_.front()) return w_.front();
    if (t >= tau_.back()) return w_.back();
    auto it = std::upper_bound(tau_.begin(), tau_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - tau_.begin());
    std::size_t lo = hi - 1;
    if (t == tau_[lo]) return w_[lo];
    double theta = (t - tau_[lo]) / (tau_[hi] - tau_[lo]);
    ParamVector out = w_[lo];
    for (std::size_t c = 0; c < out.size(); ++c)
      out.at_mut(c) += theta * (w_[hi][c] - out[c]);
    return out;
  }

 private:
  std::vector<double> tau_;
  std::vector<ParamVector> w_;
};

inline AffineInterpolation affine_interpolation(const Trajectory& traj) {
  require(!traj.records().empty(), ErrorCode::InvalidSpec, "empty trajectory");
  require(traj.stride() == 1, ErrorCode::InvalidSpec,
          "interpolation needs an unthinned trajectory");
  std::vector<double> tau;
  std::vector<ParamVector> w;
  double clock = 0;
  for (const auto& rec : traj.records()) {
    tau.push_back(clock);
    w.push_back(rec.w);
    clock += rec.alpha;
  }
  if (traj.records().back().k + 1 == traj.n_steps()) {
    tau.push_back(clock);
    w.push_back(traj.final_w());
  }
  return AffineInterpolation(std::move(tau), std::move(w));
}

}  // namespace subgrad
