#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "semicomp/core_model.hpp"
#include "semicomp/multistate_model.hpp"
#include "semicomp/risk_design.hpp"

namespace semicomp {

struct FitOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-9;  // on the profile log-likelihood
  double score_tolerance = 1e-6;     // sup-norm of the score
  int max_halvings = 30;
  double divergence_bound = 30.0;    // |beta|_inf beyond this with a live score is separation
  // A converged |beta_j| times the observed range of column j beyond this draws a warning.
  double extreme_effect = 12.0;
  bool state_terms = true;           // false fixes the l / n1 coefficients at zero
};

// Thrown when Newton-Raphson does not converge; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_beta, double gradient_norm)
      : Error(ErrorCategory::convergence, what),
        last_beta_(std::move(last_beta)),
        gradient_norm_(gradient_norm) {}
  const Eigen::VectorXd& last_beta() const { return last_beta_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  Eigen::VectorXd last_beta_;
  double gradient_norm_;
};

struct TransitionModelFit {
  int arm = 0;
  TransitionModel model;
  std::vector<std::string> terms;
  std::vector<bool> fixed;            // coefficients held at zero
  double loglik = 0.0;                // profile log-likelihood at the optimum
  std::vector<double> loglik_trace;   // one entry per accepted iterate, starting at beta = 0
  int iterations = 0;
  double score_norm = 0.0;
  std::vector<std::string> warnings;

  TransitionKind kind() const { return model.kind; }
  const Eigen::VectorXd& beta() const { return model.beta; }
  const StepFunction& baseline() const { return model.baseline; }
};

struct MultistateFit {
  std::array<std::array<TransitionModelFit, 3>, 2> components;  // [arm][kind]
  std::optional<std::array<double, 2>> alpha;                   // frailty loadings
  std::size_t p = 0;
  TieOrder tie_order = TieOrder::confounder_first;

  const TransitionModelFit& at(int arm, TransitionKind kind) const {
    return components[static_cast<std::size_t>(arm)][static_cast<std::size_t>(kind)];
  }
  TransitionModelFit& at(int arm, TransitionKind kind) {
    return components[static_cast<std::size_t>(arm)][static_cast<std::size_t>(kind)];
  }
  MultistateModel model() const;
  std::vector<std::string> warnings() const;
};

struct PartialLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

PartialLikelihood partial_loglik(const Dataset& data, int arm, TransitionKind kind,
                                 const Eigen::VectorXd& beta);

TransitionModelFit fit_transition(const Dataset& data, int arm, TransitionKind kind,
                                  const FitOptions& options = {});

// Fit on a prebuilt design; `multipliers` scales each subject's risk-set
// contribution (all ones when empty).
TransitionModelFit fit_transition(const RiskDesign& design, const std::vector<std::string>& covariates,
                                  const FitOptions& options = {},
                                  std::span<const double> multipliers = {});

// Baseline step function from Breslow jumps at the design's event times.
StepFunction breslow_baseline(const RiskDesign& design, const ProfileEvaluation& evaluation);

// Six independent fits, one per (arm, transition).
MultistateFit fit_multistate(const Dataset& data, const FitOptions& options = {},
                             Execution execution = Execution::parallel);

}  // namespace semicomp
