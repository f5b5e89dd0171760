#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "semicomp/core_model.hpp"
#include "semicomp/cox_npmle.hpp"
#include "semicomp/quadrature.hpp"

namespace semicomp {

// Shared N(0, 1) frailty b entering every hazard of arm z as exp(alpha_z b).
struct FrailtySpec {
  std::size_t node_count = 20;
  std::array<double, 2> alpha_init = {0.1, 0.1};
  // Hold alpha at these values instead of estimating it; zero is allowed.
  std::optional<std::array<double, 2>> fixed_alpha;
  double loglik_tolerance = 1e-7;
  double parameter_tolerance = 1e-5;
  int max_iterations = 500;
  int max_halvings = 20;
  // SQUAREM extrapolation between EM steps; the observed-data
  // log-likelihood still never decreases between accepted iterates.
  bool accelerate = true;
  double max_extrapolation = 64.0;
  FitOptions cox;  // starting no-frailty fit

  void validate() const;
};

// A subject's complete-data log-likelihood as a function of b is
//   event_term + events * alpha * b - exp(alpha * b) * exposure,
// where exposure sums baseline jumps times exp(linear predictor) over the
// subject's risk periods in all three transitions.
struct SubjectTerms {
  double event_term = 0.0;
  int events = 0;
  double exposure = 0.0;

  double loglik(double alpha, double b) const;
};

// Evaluated directly from the fitted step functions for one subject.
double subject_complete_loglik(const SubjectRecord& subject, const MultistateFit& fit, double b);

// All subjects at once through the risk designs.
std::vector<SubjectTerms> subject_terms(const Dataset& data, const MultistateFit& fit);

struct PosteriorWeights {
  Eigen::MatrixXd weights;        // subjects x nodes, rows sum to one
  std::vector<double> mean_exp;   // E[exp(alpha_z b) | data]
  std::vector<double> mean_b;     // E[b | data]
  double observed_loglik = 0.0;
};

PosteriorWeights e_step(const Dataset& data, const MultistateFit& fit, const NormalQuadrature& nodes,
                        Execution execution = Execution::parallel);
PosteriorWeights e_step(const Dataset& data, const MultistateFit& fit, const FrailtySpec& spec,
                        Execution execution = Execution::parallel);

double observed_loglik(const Dataset& data, const MultistateFit& fit, const NormalQuadrature& nodes);

// One Newton step on the expected complete-data profile log-likelihood per
// arm (coefficients of the three transitions and log alpha jointly), then
// frailty-weighted Breslow baselines. Step-halving keeps the observed-data
// log-likelihood from decreasing.
MultistateFit m_step(const Dataset& data, const PosteriorWeights& weights, const MultistateFit& fit,
                     const FrailtySpec& spec);

struct EmTraceRow {
  int iteration = 0;
  double loglik = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
};

struct FrailtyFit {
  MultistateFit fit;
  std::vector<EmTraceRow> trace;
  double loglik = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

class EmConvergenceError : public ConvergenceError {
 public:
  EmConvergenceError(const std::string& what, std::vector<EmTraceRow> trace)
      : ConvergenceError(what, Eigen::Vector2d(trace.back().alpha0, trace.back().alpha1), 0.0),
        trace_(std::move(trace)) {}
  const std::vector<EmTraceRow>& trace() const { return trace_; }

 private:
  std::vector<EmTraceRow> trace_;
};

// EM from the no-frailty fit. `iterations` counts EM steps (E-step plus
// M-step), including those spent on extrapolation; the trace has one row per
// accepted iterate. Throws EmConvergenceError, carrying the
// trace, when the step budget runs out.
FrailtyFit fit_frailty(const Dataset& data, const FrailtySpec& spec = {},
                       Execution execution = Execution::parallel);

}  // namespace semicomp
