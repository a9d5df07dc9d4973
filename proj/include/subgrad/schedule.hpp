#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"

namespace subgrad {

enum class ScheduleFamily { PowerLaw, Constant, Custom };

struct ScheduleFlags {
  bool sum_divergent = false;
  bool square_summable = false;
  bool little_o_log = false;
  bool operator==(const ScheduleFlags&) const = default;
};

/// Step-size sequence alpha_k > 0, lazily generated. Flags classify the
/// analytic summability properties the convergence statements depend on.
class StepSchedule {
 public:
  static StepSchedule power_law(double a, double gamma) {
    require(a > 0, ErrorCode::NonPositiveStep, "power-law scale must be > 0");
    StepSchedule s;
    s.family_ = ScheduleFamily::PowerLaw;
    s.a_ = a;
    s.gamma_ = gamma;
    s.flags_.sum_divergent = gamma <= 1.0;
    s.flags_.square_summable = gamma > 0.5;
    s.flags_.little_o_log = gamma > 0.0;
    return s;
  }

  static StepSchedule constant(double a) {
    require(a > 0, ErrorCode::NonPositiveStep, "constant step must be > 0");
    StepSchedule s;
    s.family_ = ScheduleFamily::Constant;
    s.a_ = a;
    s.flags_ = {true, false, false};
    return s;
  }

  /// Declared flags are trusted once they survive a finite falsification
  /// check; the properties are asymptotic, so this is necessarily
  /// best-effort.
  static StepSchedule custom(std::vector<double> terms, ScheduleFlags declared,
                             double divergence_bound = 1e6) {
    StepSchedule s;
    s.family_ = ScheduleFamily::Custom;
    s.custom_ = std::move(terms);
    s.flags_ = declared;
    double sum = 0, sum_sq = 0;
    std::size_t checked = 0;
    for (double a : s.custom_) {
      require(a > 0, ErrorCode::NonPositiveStep, "custom schedule term <= 0");
      sum += a;
      sum_sq += a * a;
      if (++checked >= kSpotCheckLimit) break;
    }
    if (declared.square_summable && sum_sq > divergence_bound)
      fail(ErrorCode::ContradictoryFlags,
           "declared square_summable but partial sum of squares exceeds bound");
    if (!declared.sum_divergent && sum > divergence_bound)
      fail(ErrorCode::ContradictoryFlags,
           "declared convergent sum but partial sum exceeds bound");
    return s;
  }

  double alpha(std::uint64_t k) const {
    switch (family_) {
      case ScheduleFamily::PowerLaw: {
        double a = a_ / std::pow(static_cast<double>(k) + 1.0, gamma_);
        require(a > 0, ErrorCode::NonPositiveStep, "generated step <= 0");
        return a;
      }
      case ScheduleFamily::Constant:
        return a_;
      case ScheduleFamily::Custom:
        require(k < custom_.size(), ErrorCode::InvalidSpec,
                "custom schedule exhausted at k=" + std::to_string(k));
        return custom_[k];
    }
    fail(ErrorCode::InvalidSpec, "unreachable");
  }

  const ScheduleFlags& flags() const { return flags_; }
  ScheduleFamily family() const { return family_; }

 private:
  static constexpr std::size_t kSpotCheckLimit = 1000000;

  ScheduleFamily family_ = ScheduleFamily::Constant;
  double a_ = 1.0;
  double gamma_ = 0.0;
  std::vector<double> custom_;
  ScheduleFlags flags_;
};

inline StepSchedule classify_schedule(ScheduleFamily family, double a,
                                      double gamma = 0.0) {
  switch (family) {
    case ScheduleFamily::PowerLaw:
      return StepSchedule::power_law(a, gamma);
    case ScheduleFamily::Constant:
      return StepSchedule::constant(a);
    case ScheduleFamily::Custom:
      fail(ErrorCode::InvalidSpec, "custom schedules take an explicit term list");
  }
  fail(ErrorCode::InvalidSpec, "unreachable");
}

}  // namespace subgrad
