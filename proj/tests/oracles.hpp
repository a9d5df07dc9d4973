// Test-only oracles, kept independent of the library's implementation paths:
// the min-norm checks never call Wolfe machinery, quadrature checks never call
// the diagnostics validator.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "subgrad/core.hpp"

namespace oracles {

using subgrad::Vec;

inline double cloud_norm2(const std::vector<Vec>& pts, const std::vector<double>& lambda) {
  std::size_t p = pts.front().size();
  double n2 = 0;
  for (std::size_t c = 0; c < p; ++c) {
    double x = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) x += lambda[i] * pts[i][c];
    n2 += x * x;
  }
  return n2;
}

inline Vec combine(const std::vector<Vec>& pts, const std::vector<double>& lambda) {
  std::size_t p = pts.front().size();
  Vec x(p, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t c = 0; c < p; ++c) x[c] += lambda[i] * pts[i][c];
  return x;
}

/// Exact projection of the origin on conv(points) by exhaustive face
/// enumeration: the minimizer lies in the convex hull of an affinely
/// independent subset (size <= p+1) and is the affine minimizer of that
/// subset. Every subset is tried; convex-feasible candidates compete.
inline Vec min_norm_exhaustive(const std::vector<Vec>& pts) {
  std::size_t m = pts.size();
  std::size_t p = pts.front().size();
  std::size_t max_size = std::min(m, p + 1);

  Vec best;
  double best_n2 = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> subset;
  std::function<void(std::size_t)> recurse = [&](std::size_t from) {
    if (!subset.empty() && subset.size() <= max_size) {
      std::size_t k = subset.size();
      // solve [0 e^T; e G] [nu; lambda] = [1; 0] with G = Gram matrix
      std::size_t n = k + 1;
      std::vector<double> a(n * n, 0.0), b(n, 0.0);
      b[0] = 1.0;
      for (std::size_t i = 0; i < k; ++i) {
        a[0 * n + i + 1] = 1.0;
        a[(i + 1) * n + 0] = 1.0;
        for (std::size_t j = 0; j < k; ++j) {
          double g = 0;
          for (std::size_t c = 0; c < p; ++c) g += pts[subset[i]][c] * pts[subset[j]][c];
          a[(i + 1) * n + j + 1] = g;
        }
      }
      // Gaussian elimination with partial pivoting
      bool ok = true;
      for (std::size_t col = 0; col < n && ok; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
          if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-13) {
          ok = false;
          break;
        }
        if (piv != col) {
          for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
          std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
          double f = a[r * n + col] / a[col * n + col];
          for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
          b[r] -= f * b[col];
        }
      }
      if (ok) {
        for (std::size_t i = n; i-- > 0;) {
          double acc = b[i];
          for (std::size_t c = i + 1; c < n; ++c) acc -= a[i * n + c] * b[c];
          b[i] = acc / a[i * n + i];
        }
        std::vector<double> lambda(b.begin() + 1, b.end());
        bool feasible = true;
        for (double l : lambda) feasible &= l >= -1e-12;
        if (feasible) {
          std::vector<double> full(m, 0.0);
          for (std::size_t i = 0; i < k; ++i) full[subset[i]] = lambda[i];
          double n2 = cloud_norm2(pts, full);
          if (n2 < best_n2) {
            best_n2 = n2;
            best = combine(pts, full);
          }
        }
      }
    }
    if (subset.size() >= max_size) return;
    for (std::size_t i = from; i < m; ++i) {
      subset.push_back(i);
      recurse(i + 1);
      subset.pop_back();
    }
  };
  recurse(0);
  return best;
}

/// Brute-force simplex-grid projection with multiscale refinement: evaluate
/// ||sum lambda_i p_i|| on a weight lattice, zoom on the best cell, repeat.
/// Finishing with long plain projected-gradient descent (sorting-based simplex
/// projection) removes any zoom bias; both stages are Wolfe-free.
inline Vec min_norm_grid(const std::vector<Vec>& pts, int lattice = 6, int levels = 24,
                         std::size_t pg_iters = 200000) {
  std::size_t m = pts.size();
  std::vector<double> center(m, 1.0 / double(m));
  double radius = 1.0;

  std::vector<double> best_lambda = center;
  double best_n2 = cloud_norm2(pts, best_lambda);

  std::vector<int> counts(m, 0);
  for (int level = 0; level < levels; ++level) {
    // lattice over {lambda : lambda_i = center_i + radius*(c_i/lattice - mean)}
    // realized by enumerating compositions of `lattice` into m cells
    std::function<void(std::size_t, int)> enumerate = [&](std::size_t i, int rem) {
      if (i + 1 == m) {
        counts[i] = rem;
        std::vector<double> lambda(m);
        double total = 0;
        for (std::size_t j = 0; j < m; ++j) {
          lambda[j] = std::max(0.0, center[j] + radius * (double(counts[j]) / lattice -
                                                          1.0 / double(m)));
          total += lambda[j];
        }
        if (total <= 0) return;
        for (double& l : lambda) l /= total;
        double n2 = cloud_norm2(pts, lambda);
        if (n2 < best_n2) {
          best_n2 = n2;
          best_lambda = lambda;
        }
        return;
      }
      for (int c = 0; c <= rem; ++c) {
        counts[i] = c;
        enumerate(i + 1, rem - c);
      }
    };
    enumerate(0, lattice);
    center = best_lambda;
    radius *= 0.5;
  }

  // projected gradient polish: grad_i = 2 <x, p_i>, exact simplex projection
  std::size_t p = pts.front().size();
  double lip = 0;
  for (const auto& v : pts) {
    double n2 = 0;
    for (double c : v) n2 += c * c;
    lip += n2;
  }
  double step = 1.0 / (2.0 * lip + 1e-12);
  std::vector<double> lambda = best_lambda, grad(m), sorted(m);
  for (std::size_t it = 0; it < pg_iters; ++it) {
    Vec x = combine(pts, lambda);
    for (std::size_t i = 0; i < m; ++i) {
      double g = 0;
      for (std::size_t c = 0; c < p; ++c) g += x[c] * pts[i][c];
      grad[i] = 2.0 * g;
    }
    for (std::size_t i = 0; i < m; ++i) lambda[i] -= step * grad[i];
    // Euclidean projection onto the simplex (sort-based)
    sorted = lambda;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cum = 0, theta = 0;
    int rho = -1;
    for (std::size_t i = 0; i < m; ++i) {
      cum += sorted[i];
      double t = (cum - 1.0) / double(i + 1);
      if (sorted[i] - t > 0) {
        rho = int(i);
        theta = t;
      }
    }
    (void)rho;
    for (std::size_t i = 0; i < m; ++i) lambda[i] = std::max(0.0, lambda[i] - theta);
  }
  return combine(pts, lambda);
}

}  // namespace oracles
