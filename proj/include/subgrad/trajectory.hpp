#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "subgrad/core.hpp"

namespace subgrad {

namespace detail {

// 17 significant digits round-trip any double exactly.
inline void print_g17(std::ostream& os, double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  os << buf;
}

}  // namespace detail

enum class RunStatus { Completed, Diverged };

struct TrajectoryRecord {
  std::uint64_t k = 0;
  ParamVector w;
  double alpha = 0;
  std::uint64_t sample_index = 0;
  ParamVector v;       // the applied selection
  double loss_sample = 0;
};

/// Ordered iterate records of the recursion w_{k+1} = w_k - alpha_k v_k.
/// With stride 1 the update is bitwise re-computable from consecutive
/// records; larger strides only thin what is stored.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::size_t dim, std::uint64_t stride)
      : dim_(dim), stride_(stride == 0 ? 1 : stride) {}

  void append(TrajectoryRecord rec) {
    require(rec.w.size() == dim_ && rec.v.size() == dim_,
            ErrorCode::DimensionMismatch, "trajectory record dimension");
    std::uint64_t expected = records_.empty() ? 0 : records_.back().k + stride_;
    require(rec.k == expected, ErrorCode::InvalidSpec,
            "trajectory records must be contiguous in k");
    records_.push_back(std::move(rec));
  }

  void finish(ParamVector final_w, std::uint64_t n_steps, RunStatus status) {
    final_w_ = std::move(final_w);
    n_steps_ = n_steps;
    status_ = status;
  }

  std::size_t dim() const { return dim_; }
  std::uint64_t stride() const { return stride_; }
  const std::vector<TrajectoryRecord>& records() const { return records_; }
  const ParamVector& final_w() const { return final_w_; }
  std::uint64_t n_steps() const { return n_steps_; }
  RunStatus status() const { return status_; }

  /// Checks the exact-recomputation invariant on every stored consecutive
  /// pair (stride-1 trajectories only): w_{k+1} + alpha_k v_k - w_k == 0
  /// bitwise.
  bool recursion_exact() const {
    if (stride_ != 1) return false;
    for (std::size_t i = 0; i + 1 < records_.size(); ++i) {
      ParamVector next = records_[i].w;
      next.axpy_sub(records_[i].alpha, records_[i].v);
      if (!(next == records_[i + 1].w)) return false;
    }
    if (!records_.empty() && records_.back().k + 1 == n_steps_) {
      ParamVector next = records_.back().w;
      next.axpy_sub(records_.back().alpha, records_.back().v);
      if (!(next == final_w_)) return false;
    }
    return true;
  }

  void to_csv(std::ostream& os) const {
    os << "k,alpha,sample_index,loss_sample";
    for (std::size_t i = 0; i < dim_; ++i) os << ",w_" << i;
    for (std::size_t i = 0; i < dim_; ++i) os << ",v_" << i;
    os << "\n";
    for (const auto& r : records_) {
      os << r.k << ",";
      detail::print_g17(os, r.alpha);
      os << "," << r.sample_index << ",";
      detail::print_g17(os, r.loss_sample);
      for (std::size_t i = 0; i < dim_; ++i) {
        os << ",";
        detail::print_g17(os, r.w[i]);
      }
      for (std::size_t i = 0; i < dim_; ++i) {
        os << ",";
        detail::print_g17(os, r.v[i]);
      }
      os << "\n";
    }
  }

  static Trajectory from_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorCode::InvalidSpec,
            "empty trajectory csv");
    std::size_t cols = 1;
    for (char c : line) cols += c == ',';
    require(cols >= 6 && (cols - 4) % 2 == 0, ErrorCode::InvalidSpec,
            "bad trajectory csv header");
    std::size_t dim = (cols - 4) / 2;
    Trajectory t(dim, 1);
    bool first = true;
    std::uint64_t prev_k = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string field;
      auto next_field = [&]() {
        require(static_cast<bool>(std::getline(ss, field, ',')),
                ErrorCode::InvalidSpec, "short trajectory csv row");
        return field;
      };
      TrajectoryRecord r;
      r.k = std::stoull(next_field());
      r.alpha = std::stod(next_field());
      r.sample_index = std::stoull(next_field());
      r.loss_sample = std::stod(next_field());
      Vec w(dim), v(dim);
      for (std::size_t i = 0; i < dim; ++i) w[i] = std::stod(next_field());
      for (std::size_t i = 0; i < dim; ++i) v[i] = std::stod(next_field());
      r.w = ParamVector(std::move(w));
      r.v = ParamVector(std::move(v));
      if (!first) t.stride_ = r.k - prev_k;
      prev_k = r.k;
      first = false;
      if (t.records_.empty()) {
        require(r.k == 0, ErrorCode::InvalidSpec, "trajectory must start at k=0");
        t.records_.push_back(std::move(r));
      } else {
        t.append(std::move(r));
      }
    }
    if (!t.records_.empty()) {
      t.final_w_ = t.records_.back().w;
      t.n_steps_ = t.records_.back().k;
    }
    return t;
  }

 private:
  std::size_t dim_ = 0;
  std::uint64_t stride_ = 1;
  std::vector<TrajectoryRecord> records_;
  ParamVector final_w_;
  std::uint64_t n_steps_ = 0;
  RunStatus status_ = RunStatus::Completed;
};

}  // namespace subgrad
