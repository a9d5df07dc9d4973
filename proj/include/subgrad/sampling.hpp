#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"
#include "subgrad/rng.hpp"

namespace subgrad {

enum class DistKind { DiscreteAtoms, UniformBox, TruncatedGaussian, ProductMixture };

struct DrawStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepts = 0;
};

/// Sampling distributions with bounded support. Unbounded supports are out of
/// scope: the growth and compactness conditions the dynamics rely on assume
/// them away.
class DistributionSpec {
 public:
  static DistributionSpec discrete_atoms(std::vector<Vec> points,
                                         std::vector<double> weights) {
    require(!points.empty(), ErrorCode::InvalidSpec, "no atoms");
    require(points.size() == weights.size(), ErrorCode::InvalidSpec,
            "atoms/weights size mismatch");
    check_weights(weights);
    DistributionSpec d;
    d.kind_ = DistKind::DiscreteAtoms;
    d.dim_ = points.front().size();
    for (const auto& p : points)
      require(p.size() == d.dim_, ErrorCode::InvalidSpec, "ragged atom dims");
    d.atom_points_ = std::move(points);
    d.atom_weights_ = std::move(weights);
    d.compute_radius();
    return d;
  }

  static DistributionSpec rademacher() {
    return discrete_atoms({{-1.0}, {1.0}}, {0.5, 0.5});
  }

  static DistributionSpec uniform_box(Vec lo, Vec hi) {
    require(!lo.empty() && lo.size() == hi.size(), ErrorCode::InvalidSpec,
            "box bounds mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(lo[i] <= hi[i], ErrorCode::InvalidSpec, "box lo > hi");
    DistributionSpec d;
    d.kind_ = DistKind::UniformBox;
    d.dim_ = lo.size();
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    d.compute_radius();
    return d;
  }

  static DistributionSpec truncated_gaussian(double mean, double sd, Vec lo, Vec hi) {
    require(sd > 0, ErrorCode::InvalidSpec, "sd <= 0");
    require(!lo.empty() && lo.size() == hi.size(), ErrorCode::InvalidSpec,
            "box bounds mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(lo[i] < hi[i], ErrorCode::InvalidSpec, "box lo >= hi");
    DistributionSpec d;
    d.kind_ = DistKind::TruncatedGaussian;
    d.dim_ = lo.size();
    d.mean_ = mean;
    d.sd_ = sd;
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    d.compute_radius();
    return d;
  }

  /// Discrete label concatenated with a label-conditional continuous draw.
  static DistributionSpec product_mixture(std::vector<Vec> labels,
                                          std::vector<double> weights,
                                          std::vector<DistributionSpec> conditionals) {
    require(!labels.empty() && labels.size() == weights.size() &&
                labels.size() == conditionals.size(),
            ErrorCode::InvalidSpec, "mixture arity mismatch");
    check_weights(weights);
    DistributionSpec d;
    d.kind_ = DistKind::ProductMixture;
    std::size_t label_dim = labels.front().size();
    std::size_t cond_dim = conditionals.front().dim();
    for (const auto& l : labels)
      require(l.size() == label_dim, ErrorCode::InvalidSpec, "ragged label dims");
    for (const auto& c : conditionals)
      require(c.dim() == cond_dim, ErrorCode::InvalidSpec, "ragged conditional dims");
    d.dim_ = label_dim + cond_dim;
    d.atom_points_ = std::move(labels);
    d.atom_weights_ = std::move(weights);
    d.conditionals_ = std::move(conditionals);
    d.compute_radius();
    return d;
  }

  DistKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double support_radius() const { return support_radius_; }

  bool finite_atoms() const { return kind_ == DistKind::DiscreteAtoms; }
  const std::vector<Vec>& atom_points() const { return atom_points_; }
  const std::vector<double>& atom_weights() const { return atom_weights_; }

  Vec draw(SampleRng& rng, DrawStats* stats = nullptr) const {
    switch (kind_) {
      case DistKind::DiscreteAtoms:
        return atom_points_[pick_atom(rng)];
      case DistKind::UniformBox: {
        Vec x(dim_);
        for (std::size_t i = 0; i < dim_; ++i) x[i] = rng.uniform(lo_[i], hi_[i]);
        return x;
      }
      case DistKind::TruncatedGaussian: {
        Vec x(dim_);
        for (std::size_t i = 0; i < dim_; ++i)
          x[i] = draw_truncated(rng, lo_[i], hi_[i], stats);
        return x;
      }
      case DistKind::ProductMixture: {
        std::size_t a = pick_atom(rng);
        Vec x = atom_points_[a];
        Vec cont = conditionals_[a].draw(rng, stats);
        x.insert(x.end(), cont.begin(), cont.end());
        return x;
      }
    }
    fail(ErrorCode::InvalidSpec, "unreachable");
  }

 private:
  static void check_weights(const std::vector<double>& w) {
    double sum = 0;
    for (double x : w) {
      require(x >= 0, ErrorCode::InvalidSpec, "negative weight");
      sum += x;
    }
    require(std::abs(sum - 1.0) <= 1e-12, ErrorCode::InvalidSpec,
            "weights must sum to 1");
  }

  std::size_t pick_atom(SampleRng& rng) const {
    double u = rng.next_double();
    double acc = 0;
    for (std::size_t i = 0; i + 1 < atom_weights_.size(); ++i) {
      acc += atom_weights_[i];
      if (u < acc) return i;
    }
    return atom_weights_.size() - 1;
  }

  double draw_truncated(SampleRng& rng, double lo, double hi, DrawStats* stats) const {
    for (std::uint64_t tries = 0; tries < 10000000; ++tries) {
      double x = mean_ + sd_ * rng.gaussian();
      if (stats) ++stats->proposals;
      if (x >= lo && x <= hi) {
        if (stats) ++stats->accepts;
        return x;
      }
    }
    fail(ErrorCode::InvalidSpec, "truncation box has negligible mass");
  }

  void compute_radius() {
    double r2 = 0;
    auto box_r2 = [&] {
      double s = 0;
      for (std::size_t i = 0; i < lo_.size(); ++i)
        s += std::max(lo_[i] * lo_[i], hi_[i] * hi_[i]);
      return s;
    };
    switch (kind_) {
      case DistKind::DiscreteAtoms:
        for (const auto& p : atom_points_) {
          double s = dot(p, p);
          r2 = std::max(r2, s);
        }
        break;
      case DistKind::UniformBox:
      case DistKind::TruncatedGaussian:
        r2 = box_r2();
        break;
      case DistKind::ProductMixture: {
        double lab = 0;
        for (const auto& p : atom_points_) lab = std::max(lab, dot(p, p));
        double cond = 0;
        for (const auto& c : conditionals_) {
          double r = c.support_radius();
          cond = std::max(cond, r * r);
        }
        r2 = lab + cond;
        break;
      }
    }
    support_radius_ = std::sqrt(r2);
  }

  DistKind kind_ = DistKind::DiscreteAtoms;
  std::size_t dim_ = 0;
  double support_radius_ = 0;
  std::vector<Vec> atom_points_;
  std::vector<double> atom_weights_;
  Vec lo_, hi_;
  double mean_ = 0, sd_ = 1;
  std::vector<DistributionSpec> conditionals_;
};

/// I.i.d. stream addressable by sample index: sample k is a pure function of
/// (rng spec, k), so a stream can be replayed or cloned from any position.
class SampleStream {
 public:
  SampleStream(DistributionSpec dist, RngSpec rng)
      : dist_(std::move(dist)), rng_(rng) {}

  Vec at(std::uint64_t k, DrawStats* stats = nullptr) const {
    SampleRng r(rng_, k);
    return dist_.draw(r, stats);
  }

  const DistributionSpec& dist() const { return dist_; }
  RngSpec rng() const { return rng_; }

 private:
  DistributionSpec dist_;
  RngSpec rng_;
};

}  // namespace subgrad
