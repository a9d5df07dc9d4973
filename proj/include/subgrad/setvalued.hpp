#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/rng.hpp"
#include "subgrad/trajectory.hpp"

namespace subgrad {

// ------------------------------------------------------------ SetEstimate

struct SetMeta {
  std::size_t n_samples = 0;
  std::size_t n_selections = 0;
  ParamVector w;
  double max_sample_norm = 0;  // largest single-sample oracle output seen
  bool exact = false;          // finite atoms enumerated exhaustively
};

/// Finite point cloud of realized averaged selections; queries are against
/// the convex hull of the stored points.
class SetEstimate {
 public:
  SetEstimate(std::vector<Vec> points, SetMeta meta)
      : points_(std::move(points)), meta_(std::move(meta)) {
    require(!points_.empty(), ErrorCode::InvalidSpec, "empty set estimate");
    dim_ = points_.front().size();
    for (const auto& p : points_)
      require(p.size() == dim_, ErrorCode::DimensionMismatch, "ragged point cloud");
  }

  const std::vector<Vec>& points() const { return points_; }
  std::size_t dim() const { return dim_; }
  const SetMeta& meta() const { return meta_; }

  void to_csv(std::ostream& os) const {
    for (const auto& p : points_) {
      for (std::size_t i = 0; i < dim_; ++i) {
        if (i) os << ",";
        detail::print_g17(os, p[i]);
      }
      os << "\n";
    }
  }

 private:
  std::vector<Vec> points_;
  std::size_t dim_ = 0;
  SetMeta meta_;
};

inline double support_function(const SetEstimate& set, const ParamVector& q) {
  require(q.size() == set.dim(), ErrorCode::DimensionMismatch, "direction dimension");
  require(q.norm2() > 0, ErrorCode::ZeroDirection, "support direction is zero");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& v : set.points()) best = std::max(best, dot(v, q.span()));
  return best;
}

// ------------------------------------------------------------ min-norm point

struct MinNormResult {
  ParamVector point;
  double norm = 0;
  std::vector<double> weights;  // convex weights over the stored points
};

namespace detail {

// Gaussian elimination with partial pivoting; a is n x n row-major.
inline bool solve_linear(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    double d = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / d;
      if (f == 0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i * n + c] * b[c];
    b[i] = acc / a[i * n + i];
  }
  return true;
}

// Affine minimizer of ||sum mu_i s_i|| subject to sum mu_i = 1 over the
// corral; solved through the KKT system bordered with the simplex constraint.
inline bool affine_minimizer(const std::vector<Vec>& pts,
                             const std::vector<std::size_t>& corral,
                             std::vector<double>& mu) {
  std::size_t k = corral.size();
  std::size_t n = k + 1;
  std::vector<double> a(n * n, 0.0), b(n, 0.0);
  b[0] = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    a[0 * n + (i + 1)] = 1.0;
    a[(i + 1) * n + 0] = 1.0;
    for (std::size_t j = 0; j < k; ++j)
      a[(i + 1) * n + (j + 1)] = dot(pts[corral[i]], pts[corral[j]]);
  }
  if (!solve_linear(a, b, n)) return false;
  mu.assign(b.begin() + 1, b.end());
  return true;
}

}  // namespace detail

/// Wolfe's nearest-point-in-polytope method on the raw cloud. Finite
/// termination with a checkable optimality certificate:
/// <x*, v - x*> >= -1e-9 for every stored v.
inline MinNormResult min_norm_point(const SetEstimate& set) {
  const auto& pts = set.points();
  std::size_t m = pts.size();
  std::size_t p = set.dim();

  double scale2 = 1.0;
  std::size_t start = 0;
  double best_n2 = dot(pts[0], pts[0]);
  for (std::size_t j = 0; j < m; ++j) {
    double n2 = dot(pts[j], pts[j]);
    scale2 = std::max(scale2, n2);
    if (n2 < best_n2) {
      best_n2 = n2;
      start = j;
    }
  }
  const double stop_tol = 1e-12 * scale2;
  const double zero_weight = 1e-12;

  std::vector<std::size_t> corral{start};
  std::vector<double> lambda{1.0};
  Vec x = pts[start];

  auto rebuild_x = [&] {
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t i = 0; i < corral.size(); ++i)
      for (std::size_t c = 0; c < p; ++c) x[c] += lambda[i] * pts[corral[i]][c];
  };

  std::size_t max_major = 16 * m + 64;
  for (std::size_t major = 0; major < max_major; ++major) {
    // most improving vertex
    std::size_t jstar = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      double v = dot(x, pts[j]);
      if (v < best) {
        best = v;
        jstar = j;
      }
    }
    if (dot(x, x) - best <= stop_tol) break;
    bool in_corral = false;
    for (std::size_t idx : corral) in_corral |= idx == jstar;
    if (in_corral) break;

    corral.push_back(jstar);
    lambda.push_back(0.0);

    for (std::size_t minor = 0; minor < 2 * m + 16; ++minor) {
      std::vector<double> mu;
      if (!detail::affine_minimizer(pts, corral, mu)) {
        // degenerate corral: drop the smallest-weight member other than the
        // newly added vertex, which is the one that still improves
        std::size_t drop = 0;
        for (std::size_t i = 1; i + 1 < lambda.size(); ++i)
          if (lambda[i] < lambda[drop]) drop = i;
        corral.erase(corral.begin() + static_cast<std::ptrdiff_t>(drop));
        lambda.erase(lambda.begin() + static_cast<std::ptrdiff_t>(drop));
        continue;
      }
      bool interior = true;
      for (double w : mu) interior &= w > zero_weight;
      if (interior) {
        lambda = std::move(mu);
        break;
      }
      // step from lambda toward mu until the first weight hits zero
      double theta = 1.0;
      for (std::size_t i = 0; i < mu.size(); ++i)
        if (mu[i] <= zero_weight && lambda[i] > mu[i])
          theta = std::min(theta, lambda[i] / (lambda[i] - mu[i]));
      for (std::size_t i = 0; i < mu.size(); ++i)
        lambda[i] = (1.0 - theta) * lambda[i] + theta * mu[i];
      for (std::size_t i = corral.size(); i-- > 0;) {
        if (lambda[i] <= zero_weight) {
          corral.erase(corral.begin() + static_cast<std::ptrdiff_t>(i));
          lambda.erase(lambda.begin() + static_cast<std::ptrdiff_t>(i));
        }
      }
    }
    rebuild_x();
  }

  MinNormResult res;
  res.weights.assign(m, 0.0);
  for (std::size_t i = 0; i < corral.size(); ++i) res.weights[corral[i]] = lambda[i];
  res.point = ParamVector(std::move(x));
  res.norm = res.point.norm2();
  return res;
}

inline bool min_norm_certificate_ok(const SetEstimate& set, const ParamVector& x,
                                    double tol = 1e-9) {
  for (const auto& v : set.points()) {
    double lhs = 0;
    for (std::size_t c = 0; c < set.dim(); ++c) lhs += x[c] * (v[c] - x[c]);
    if (lhs < -tol) return false;
  }
  return true;
}

// ------------------------------------------------------------ Aumann estimate

struct AumannOptions {
  std::size_t exhaustive_cap = 4096;  // max policy assignments to enumerate
  std::size_t n_policy_mixes = 8;     // randomized per-sample mixes (MC mode)
};

/// Approximates the set-valued expectation E[D(w, xi)] by averaged oracle
/// selections. On finite-atom distributions with few policies this is exact:
/// every assignment of a policy to an atom is enumerated, and the hull of the
/// resulting points is the full achievable set.
inline SetEstimate estimate_aumann(const Problem& problem, const ParamVector& w,
                                   std::size_t n_samples,
                                   const std::vector<SelectionPolicy>& policies,
                                   RngSpec rng, const AumannOptions& opt = {}) {
  require(n_samples >= 1, ErrorCode::InvalidSpec, "n_samples must be >= 1");
  require(!policies.empty(), ErrorCode::InvalidSpec, "need at least one policy");
  require(w.size() == problem.w_dim(), ErrorCode::DimensionMismatch, "w dimension");

  std::size_t p = problem.w_dim();
  TapeWorkspace ws;
  SetMeta meta;
  meta.w = w;

  if (problem.finite_atoms()) {
    auto atoms = problem.sample_atoms();
    std::size_t n_atoms = atoms.size();
    double combos = std::pow(double(policies.size()), double(n_atoms));
    if (combos <= double(opt.exhaustive_cap)) {
      // per-atom oracle outputs for each policy
      std::vector<std::vector<Vec>> per_atom(n_atoms);
      for (std::size_t a = 0; a < n_atoms; ++a) {
        per_atom[a].resize(policies.size());
        for (std::size_t q = 0; q < policies.size(); ++q) {
          Vec grad(p);
          problem.eval_backprop(w.span(), atoms[a].first, policies[q], ws, grad);
          meta.max_sample_norm = std::max(meta.max_sample_norm, norm2(grad));
          per_atom[a][q] = std::move(grad);
        }
      }
      std::vector<Vec> points;
      std::vector<std::size_t> assign(n_atoms, 0);
      for (;;) {
        Vec pt(p, 0.0);
        for (std::size_t a = 0; a < n_atoms; ++a)
          for (std::size_t c = 0; c < p; ++c)
            pt[c] += atoms[a].second * per_atom[a][assign[a]][c];
        points.push_back(std::move(pt));
        std::size_t d = 0;
        while (d < n_atoms && ++assign[d] == policies.size()) assign[d++] = 0;
        if (d == n_atoms) break;
      }
      meta.n_samples = n_atoms;
      meta.n_selections = points.size();
      meta.exact = true;
      return SetEstimate(std::move(points), std::move(meta));
    }
  }

  // Monte Carlo: common random numbers across policies, pairwise-tree
  // reduction per coordinate so results do not depend on evaluation order.
  std::vector<Vec> samples(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) samples[i] = problem.sample(rng, i);

  std::vector<Vec> points;
  Vec col(n_samples);
  std::vector<Vec> grads(n_samples, Vec(p));
  auto average_assignment = [&](auto&& policy_of_sample) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      problem.eval_backprop(w.span(), samples[i], policy_of_sample(i), ws, grads[i]);
      meta.max_sample_norm = std::max(meta.max_sample_norm, norm2(grads[i]));
    }
    Vec pt(p);
    for (std::size_t c = 0; c < p; ++c) {
      for (std::size_t i = 0; i < n_samples; ++i) col[i] = grads[i][c];
      pt[c] = pairwise_mean(col);
    }
    points.push_back(std::move(pt));
  };

  for (const auto& policy : policies)
    average_assignment([&](std::size_t) -> const SelectionPolicy& { return policy; });

  if (policies.size() > 1) {
    for (std::size_t mix = 0; mix < opt.n_policy_mixes; ++mix) {
      SampleRng pick(rng.substream(0x6d69780000ULL + mix), 0);
      Vec choice(n_samples);
      for (std::size_t i = 0; i < n_samples; ++i)
        choice[i] = double(pick.next_u64() % policies.size());
      average_assignment([&](std::size_t i) -> const SelectionPolicy& {
        return policies[static_cast<std::size_t>(choice[i])];
      });
    }
  }

  meta.n_samples = n_samples;
  meta.n_selections = points.size();
  return SetEstimate(std::move(points), std::move(meta));
}

}  // namespace subgrad
