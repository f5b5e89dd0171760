#include "semicomp/cox_npmle.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

namespace semicomp {

namespace {

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return out;
}

std::string label(int arm, TransitionKind kind) {
  std::ostringstream os;
  os << "arm " << arm << ", " << to_string(kind) << " transition";
  return os.str();
}

}  // namespace

MultistateModel MultistateFit::model() const {
  MultistateModel m;
  m.p = p;
  m.tie_order = tie_order;
  m.frailty = alpha.has_value();
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) m.arms[static_cast<std::size_t>(z)][kind] = at(z, kind).model;
    if (alpha) m.arms[static_cast<std::size_t>(z)].alpha = (*alpha)[static_cast<std::size_t>(z)];
  }
  return m;
}

std::vector<std::string> MultistateFit::warnings() const {
  std::vector<std::string> out;
  for (const auto& arm : components) {
    for (const auto& fit : arm) {
      for (const auto& w : fit.warnings) out.push_back(label(fit.arm, fit.kind()) + ": " + w);
    }
  }
  return out;
}

PartialLikelihood partial_loglik(const Dataset& data, int arm, TransitionKind kind,
                                 const Eigen::VectorXd& beta) {
  RiskDesign design(data, arm, kind);
  if (design.event_total() == 0) {
    throw Error(ErrorCategory::schema, label(arm, kind) + " has no events");
  }
  if (static_cast<std::size_t>(beta.size()) != design.columns()) {
    throw Error(ErrorCategory::config, label(arm, kind) + ": expected " + std::to_string(design.columns()) +
                                           " coefficients, got " + std::to_string(beta.size()));
  }
  ProfileEvaluation ev = evaluate_profile(design, beta);
  return {ev.loglik, std::move(ev.score), std::move(ev.hessian)};
}

StepFunction breslow_baseline(const RiskDesign& design, const ProfileEvaluation& evaluation) {
  const std::vector<double> jumps = breslow_jumps(design, evaluation);
  return StepFunction(design.event_times(), jumps);
}

TransitionModelFit fit_transition(const RiskDesign& design, const std::vector<std::string>& covariates,
                                  const FitOptions& options, std::span<const double> multipliers) {
  const TransitionKind kind = design.kind();
  const std::size_t p = covariates.size();
  const auto cols = static_cast<Eigen::Index>(design.columns());

  TransitionModelFit fit;
  fit.arm = design.arm();
  fit.model.kind = kind;
  fit.model.beta = Eigen::VectorXd::Zero(cols);
  fit.terms = term_names(kind, covariates);
  fit.fixed.assign(static_cast<std::size_t>(cols), false);

  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    const bool state = uj >= p;
    if (design.constant_columns()[uj] || (state && !options.state_terms)) {
      fit.fixed[uj] = true;
      if (design.constant_columns()[uj] && design.event_total() > 0) {
        fit.warnings.push_back("term '" + fit.terms[uj] + "' does not vary; coefficient fixed at 0");
      }
    } else {
      free.push_back(j);
    }
  }

  if (design.event_total() == 0) {
    fit.warnings.push_back("no observed events; baseline hazard is identically zero");
    return fit;
  }

  const SubjectMultipliers mult{multipliers, {}, {}};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cols);
  ProfileEvaluation ev = evaluate_profile(design, beta, mult);
  fit.loglik_trace.push_back(ev.loglik);

  std::vector<double> spread(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index j : free)
    spread[static_cast<std::size_t>(j)] = design.rows().col(j).maxCoeff() - design.rows().col(j).minCoeff();

  auto sup_score = [&](const ProfileEvaluation& e) {
    return free.empty() ? 0.0 : gather(e.score, free).cwiseAbs().maxCoeff();
  };

  bool converged = sup_score(ev) < options.score_tolerance;
  int iter = 0;
  while (!converged && iter < options.max_iterations) {
    ++iter;
    const Eigen::VectorXd g = gather(ev.score, free);
    const Eigen::MatrixXd info = -gather(ev.hessian, free);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 0.0).any()) {
      throw ConvergenceError(label(fit.arm, kind) + ": information matrix is singular", beta,
                             g.cwiseAbs().maxCoeff());
    }
    const Eigen::VectorXd direction = ldlt.solve(g);
    if (g.dot(direction) <= 1e-14 * std::max(std::abs(ev.loglik), 1.0) &&
        sup_score(ev) < 10.0 * options.score_tolerance) {
      converged = true;  // Newton decrement at roundoff level
      break;
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    ProfileEvaluation next;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      candidate = beta;
      for (std::size_t i = 0; i < free.size(); ++i) candidate[free[i]] += step * direction[static_cast<Eigen::Index>(i)];
      next = evaluate_profile(design, candidate, mult);
      if (std::isfinite(next.loglik) && next.loglik >= ev.loglik) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent direction left at working precision.
      if (sup_score(ev) < 1e3 * options.score_tolerance) {
        converged = true;
        break;
      }
      throw ConvergenceError(label(fit.arm, kind) + ": step halving failed", beta, sup_score(ev));
    }
    const double change = std::abs(next.loglik - ev.loglik) / std::max(std::abs(ev.loglik), 1.0);
    beta = candidate;
    ev = std::move(next);
    fit.loglik_trace.push_back(ev.loglik);
    if (beta.cwiseAbs().maxCoeff() > options.divergence_bound) {
      throw ConvergenceError(label(fit.arm, kind) + ": coefficients diverge (possible separation)",
                             beta, sup_score(ev));
    }
    converged = sup_score(ev) < options.score_tolerance && change < options.relative_tolerance;
  }
  if (!converged) {
    std::ostringstream os;
    os << label(fit.arm, kind) << ": no convergence after " << options.max_iterations << " iterations";
    throw ConvergenceError(os.str(), beta, sup_score(ev));
  }

  for (Eigen::Index j : free) {
    if (std::abs(beta[j]) * spread[static_cast<std::size_t>(j)] > options.extreme_effect) {
      fit.warnings.push_back("term '" + fit.terms[static_cast<std::size_t>(j)] +
                             "' has an extreme coefficient (possible separation)");
    }
  }

  fit.model.beta = beta;
  fit.model.baseline = breslow_baseline(design, ev);
  fit.loglik = ev.loglik;
  fit.iterations = iter;
  fit.score_norm = sup_score(ev);
  return fit;
}

TransitionModelFit fit_transition(const Dataset& data, int arm, TransitionKind kind,
                                  const FitOptions& options) {
  RiskDesign design(data, arm, kind);
  return fit_transition(design, data.covariate_names(), options);
}

MultistateFit fit_multistate(const Dataset& data, const FitOptions& options, Execution execution) {
  for (int z = 0; z < 2; ++z) {
    if (data.arm_size(z) == 0) {
      throw Error(ErrorCategory::schema, "arm " + std::to_string(z) + " has no subjects");
    }
  }
  MultistateFit out;
  out.p = data.covariate_count();
  out.tie_order = data.tie_order();

  std::exception_ptr failure[6];
#pragma omp parallel for schedule(dynamic) if (execution == Execution::parallel)
  for (int task = 0; task < 6; ++task) {
    const int z = task / 3;
    const TransitionKind kind = kAllKinds[static_cast<std::size_t>(task % 3)];
    try {
      out.at(z, kind) = fit_transition(data, z, kind, options);
    } catch (...) {
      failure[task] = std::current_exception();
    }
  }
  for (auto& f : failure) {
    if (f) std::rethrow_exception(f);
  }

  std::array<double, 2> follow_up{0.0, 0.0}, last_event{0.0, 0.0};
  for (const auto& r : data.subjects()) {
    auto& f = follow_up[static_cast<std::size_t>(r.z)];
    f = std::max(f, r.t2);
  }
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      const StepFunction& base = out.at(z, kind).baseline();
      if (!base.empty()) last_event[static_cast<std::size_t>(z)] = std::max(last_event[static_cast<std::size_t>(z)], base.times().back());
    }
  }
  for (int z = 0; z < 2; ++z) {
    const double other = last_event[static_cast<std::size_t>(1 - z)];
    if (follow_up[static_cast<std::size_t>(z)] < other) {
      std::ostringstream os;
      os << "risk set empties at t = " << follow_up[static_cast<std::size_t>(z)] << ", before arm " << 1 - z
         << "'s last event at t = " << other << "; hazards are flat beyond";
      out.at(z, TransitionKind::terminal).warnings.push_back(os.str());
    }
  }
  return out;
}

}  // namespace semicomp
