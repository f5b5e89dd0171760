#include "semicomp/multistate_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace semicomp {

std::string_view to_string(TransitionKind kind) noexcept {
  switch (kind) {
    case TransitionKind::confounder: return "confounder";
    case TransitionKind::intermediate: return "intermediate";
    case TransitionKind::terminal: return "terminal";
  }
  return "unknown";
}

std::size_t state_columns(TransitionKind kind) noexcept {
  return kind == TransitionKind::terminal ? 2 : 1;
}

std::vector<std::string> term_names(TransitionKind kind, const std::vector<std::string>& covariates) {
  std::vector<std::string> names = covariates;
  switch (kind) {
    case TransitionKind::confounder: names.emplace_back("n1"); break;
    case TransitionKind::intermediate: names.emplace_back("l"); break;
    case TransitionKind::terminal:
      names.emplace_back("l");
      names.emplace_back("n1");
      break;
  }
  return names;
}

StepFunction::StepFunction(std::vector<double> times, std::span<const double> jumps)
    : times_(std::move(times)), cumulative_(times_.size()) {
  if (jumps.size() != times_.size()) throw std::invalid_argument("StepFunction: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (i > 0 && !(times_[i] > times_[i - 1])) {
      throw std::invalid_argument("StepFunction: times must be strictly increasing");
    }
    acc += jumps[i];
    cumulative_[i] = acc;
  }
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0.0;
  return cumulative_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double StepFunction::jump_at(double t) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.end() || *it != t) return 0.0;
  const auto i = static_cast<std::size_t>(it - times_.begin());
  return i == 0 ? cumulative_[0] : cumulative_[i] - cumulative_[i - 1];
}

double TransitionModel::linear_predictor(std::span<const double> x, int confounder,
                                         int intermediate) const {
  const std::size_t p = x.size();
  double eta = 0.0;
  for (std::size_t j = 0; j < p; ++j) eta += beta[static_cast<Eigen::Index>(j)] * x[j];
  const auto s = static_cast<Eigen::Index>(p);
  switch (kind) {
    case TransitionKind::confounder: eta += beta[s] * intermediate; break;
    case TransitionKind::intermediate: eta += beta[s] * confounder; break;
    case TransitionKind::terminal:
      eta += beta[s] * confounder + beta[s + 1] * intermediate;
      break;
  }
  return eta;
}

const TransitionModel& ArmModel::operator[](TransitionKind kind) const {
  switch (kind) {
    case TransitionKind::confounder: return confounder;
    case TransitionKind::intermediate: return intermediate;
    case TransitionKind::terminal: break;
  }
  return terminal;
}

TransitionModel& ArmModel::operator[](TransitionKind kind) {
  return const_cast<TransitionModel&>(std::as_const(*this)[kind]);
}

}  // namespace semicomp
