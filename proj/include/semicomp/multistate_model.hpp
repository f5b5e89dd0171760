#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semicomp/core_model.hpp"

namespace semicomp {

enum class TransitionKind { confounder, intermediate, terminal };

inline constexpr std::array<TransitionKind, 3> kAllKinds = {
    TransitionKind::confounder, TransitionKind::intermediate, TransitionKind::terminal};

std::string_view to_string(TransitionKind kind) noexcept;

// Number of time-varying state columns appended after the p baseline
// covariates: confounder (n1), intermediate (l), terminal (l, n1).
std::size_t state_columns(TransitionKind kind) noexcept;
std::vector<std::string> term_names(TransitionKind kind, const std::vector<std::string>& covariates);

// Right-continuous non-decreasing step function, zero before the first jump.
class StepFunction {
 public:
  StepFunction() = default;
  // jumps[i] is added at times[i]; times strictly increasing.
  StepFunction(std::vector<double> times, std::span<const double> jumps);

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  double operator()(double t) const;
  double jump_at(double t) const;  // 0 when t is not a jump time

 private:
  std::vector<double> times_;
  std::vector<double> cumulative_;
};

// Proportional-hazards transition: baseline(t) * exp(beta . (x, state)).
struct TransitionModel {
  TransitionKind kind = TransitionKind::terminal;
  Eigen::VectorXd beta;  // p covariate coefficients then state coefficients
  StepFunction baseline;

  // Linear predictor for covariates x and state indicators; `confounder` is
  // l and `intermediate` is n1. Unused state arguments are ignored.
  double linear_predictor(std::span<const double> x, int confounder, int intermediate) const;
};

struct ArmModel {
  TransitionModel confounder{TransitionKind::confounder, {}, {}};
  TransitionModel intermediate{TransitionKind::intermediate, {}, {}};
  TransitionModel terminal{TransitionKind::terminal, {}, {}};
  double alpha = 0.0;  // frailty loading, multiplies b inside every hazard

  const TransitionModel& operator[](TransitionKind kind) const;
  TransitionModel& operator[](TransitionKind kind);
};

struct MultistateModel {
  std::array<ArmModel, 2> arms;
  std::size_t p = 0;
  bool frailty = false;
  TieOrder tie_order = TieOrder::confounder_first;
};

}  // namespace semicomp
