#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace subgrad {

// ---------------------------------------------------------------- errors

enum class ErrorCode {
  NonPositiveStep,
  ContradictoryFlags,
  DimensionMismatch,
  NonFiniteValue,
  InvalidSpec,
  ZeroDirection,
  KinkSuspected,
  InsufficientData,
  StepTooLarge,
  ConfigError,
  SelfCheckFailed,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

// ---------------------------------------------------------------- ParamVector

/// Point in R^p. Entries are checked finite on construction and after every
/// arithmetic operation exposed here.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : v_(dim, fill) {
    check_finite();
  }
  ParamVector(std::initializer_list<double> xs) : v_(xs) { check_finite(); }
  explicit ParamVector(std::vector<double> xs) : v_(std::move(xs)) {
    check_finite();
  }

  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  double& at_mut(std::size_t i) { return v_[i]; }

  const std::vector<double>& coords() const { return v_; }
  std::vector<double>& coords_mut() { return v_; }
  const double* data() const { return v_.data(); }
  std::span<const double> span() const { return {v_.data(), v_.size()}; }

  void check_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) fail(ErrorCode::NonFiniteValue, "non-finite coordinate");
  }

  ParamVector& operator+=(const ParamVector& o) {
    match(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    check_finite();
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    match(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    check_finite();
    return *this;
  }
  ParamVector& operator*=(double a) {
    for (double& x : v_) x *= a;
    check_finite();
    return *this;
  }

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(double a, ParamVector x) { return x *= a; }

  /// this <- this - a*g, the recursion update. Kept as a single call so the
  /// stored trajectory is bitwise re-computable.
  void axpy_sub(double a, const ParamVector& g) {
    match(g);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= a * g.v_[i];
    check_finite();
  }

  double dot(const ParamVector& o) const {
    match(o);
    double s = 0;
    for (std::size_t i = 0; i < v_.size(); ++i) s += v_[i] * o.v_[i];
    return s;
  }
  double norm2() const { return std::sqrt(dot(*this)); }
  double norm_inf() const {
    double m = 0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  bool operator==(const ParamVector& o) const { return v_ == o.v_; }

 private:
  void match(const ParamVector& o) const {
    require(v_.size() == o.v_.size(), ErrorCode::DimensionMismatch,
            "ParamVector dimension mismatch");
  }
  std::vector<double> v_;
};

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------- RngSpec

/// Identifies a reproducible random stream. Identical (seed, stream_id) gives
/// an identical sample stream across runs and thread layouts; streams are
/// split per trajectory / per replication by bumping stream_id.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  RngSpec substream(std::uint64_t offset) const {
    return {seed, stream_id + offset};
  }
  bool operator==(const RngSpec&) const = default;
};

// ---------------------------------------------------------------- summation

/// Pairwise tree reduction. Used wherever a sum must not depend on chunking
/// or thread layout, and it is more accurate than left-to-right anyway.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0;
    for (double x : xs) s += x;
    return s;
  }
  std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// Exact accumulation of doubles as a nonoverlapping expansion
/// (Shewchuk-style grow-expansion). Sum and comparisons are exact; value()
/// rounds once at the end.
class ExactSum {
 public:
  void add(double x) {
    std::size_t keep = 0;
    for (double p : parts_) {
      double hi = x + p;
      double virt = hi - x;
      double err = (x - (hi - virt)) + (p - virt);
      if (err != 0.0) parts_[keep++] = err;
      x = hi;
    }
    parts_.resize(keep);
    if (x != 0.0) parts_.push_back(x);
  }

  void add_sum(const ExactSum& o) {
    for (double p : o.parts_) add(p);
  }

  void add_negated(const ExactSum& o) {
    for (double p : o.parts_) add(-p);
  }

  double value() const {
    double s = 0;  // parts are ordered by increasing magnitude
    for (double p : parts_) s += p;
    return s;
  }

  /// Exact sign of the accumulated value: the largest-magnitude component of
  /// a nonoverlapping expansion decides.
  int sign() const {
    if (parts_.empty()) return 0;
    double head = parts_.back();
    return head > 0 ? 1 : (head < 0 ? -1 : 0);
  }

  /// Exact comparison of accumulated sums.
  int compare(const ExactSum& o) const {
    ExactSum d = *this;
    d.add_negated(o);
    return d.sign();
  }

 private:
  std::vector<double> parts_;
};

}  // namespace subgrad
