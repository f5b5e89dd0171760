#include "semicomp/frailty_em.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace semicomp {

void FrailtySpec::validate() const {
  if (node_count < 5) throw Error(ErrorCategory::config, "frailty quadrature needs at least 5 nodes");
  if (!fixed_alpha) {
    for (double a : alpha_init) {
      if (!(a > 0.0)) throw Error(ErrorCategory::config, "initial frailty loadings must be positive");
    }
  } else {
    for (double a : *fixed_alpha) {
      if (a < 0.0) throw Error(ErrorCategory::config, "fixed frailty loadings must be non-negative");
    }
  }
}

double SubjectTerms::loglik(double alpha, double b) const {
  return event_term + events * alpha * b - std::exp(alpha * b) * exposure;
}

namespace {

double alpha_of(const MultistateFit& fit, int z) {
  if (!fit.alpha) throw Error(ErrorCategory::config, "fit carries no frailty loadings");
  return (*fit.alpha)[static_cast<std::size_t>(z)];
}

struct Workspace {
  explicit Workspace(const Dataset& data) {
    for (int z = 0; z < 2; ++z) {
      for (TransitionKind kind : kAllKinds) {
        designs[z][static_cast<std::size_t>(kind)] = std::make_unique<RiskDesign>(data, z, kind);
      }
    }
  }
  const RiskDesign& design(int z, TransitionKind kind) const { return *designs[z][static_cast<std::size_t>(kind)]; }
  std::unique_ptr<RiskDesign> designs[2][3];
};

// Adds one arm's contributions to `terms` (indexed by dataset position).
void accumulate_terms(const Workspace& ws, const MultistateFit& fit, int z, std::vector<SubjectTerms>& terms) {
  for (TransitionKind kind : kAllKinds) {
    const RiskDesign& design = ws.design(z, kind);
    const TransitionModel& model = fit.at(z, kind).model;
    const auto& tau = design.event_times();
    std::vector<double> jumps(tau.size()), cum(tau.size() + 1, 0.0);
    for (std::size_t k = 0; k < tau.size(); ++k) {
      jumps[k] = model.baseline.jump_at(tau[k]);
      cum[k + 1] = cum[k] + jumps[k];
    }
    const Eigen::VectorXd eta = design.rows() * model.beta;
    const auto& segments = design.segments();
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s];
      terms[seg.subject].exposure += std::exp(eta[static_cast<Eigen::Index>(s)]) * (cum[seg.last + 1] - cum[seg.first]);
    }
    for (std::size_t s : design.event_segments()) {
      const auto& seg = segments[s];
      terms[seg.subject].event_term += std::log(jumps[seg.last]) + eta[static_cast<Eigen::Index>(s)];
      terms[seg.subject].events += 1;
    }
  }
}

double log_marginal(const SubjectTerms& t, double alpha, const NormalQuadrature& q, double* log_terms) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < q.size(); ++j) {
    log_terms[j] = std::log(q.weights[j]) + t.events * alpha * q.nodes[j] - std::exp(alpha * q.nodes[j]) * t.exposure;
    top = std::max(top, log_terms[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) sum += std::exp(log_terms[j] - top);
  return t.event_term + top + std::log(sum);
}

double arm_observed_loglik(const Dataset& data, const Workspace& ws, const MultistateFit& fit, int z,
                           const NormalQuadrature& q) {
  std::vector<SubjectTerms> terms(data.size());
  accumulate_terms(ws, fit, z, terms);
  const double alpha = fit.alpha ? (*fit.alpha)[static_cast<std::size_t>(z)] : 0.0;
  std::vector<double> scratch(q.size());
  double total = 0.0;
  for (std::size_t i : data.arm(z)) total += log_marginal(terms[i], alpha, q, scratch.data());
  return total;
}

PosteriorWeights e_step_impl(const Dataset& data, const Workspace& ws, const MultistateFit& fit,
                             const NormalQuadrature& q, Execution execution) {
  std::vector<SubjectTerms> terms(data.size());
  for (int z = 0; z < 2; ++z) accumulate_terms(ws, fit, z, terms);

  const auto n = static_cast<Eigen::Index>(data.size());
  const auto m = static_cast<Eigen::Index>(q.size());
  PosteriorWeights out;
  out.weights.resize(n, m);
  out.mean_exp.assign(data.size(), 0.0);
  out.mean_b.assign(data.size(), 0.0);
  std::vector<double> contribution(data.size(), 0.0);
  bool degenerate = false;

#pragma omp parallel for schedule(static) if (execution == Execution::parallel) reduction(|| : degenerate)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double alpha = alpha_of(fit, data[ui].z);
    std::vector<double> lt(q.size());
    const double lm = log_marginal(terms[ui], alpha, q, lt.data());
    contribution[ui] = lm;
    const double shift = lm - terms[ui].event_term;
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double w = std::exp(lt[static_cast<std::size_t>(j)] - shift);
      out.weights(i, j) = w;
      total += w;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      degenerate = true;
      continue;
    }
    out.weights.row(i) /= total;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double b = q.nodes[static_cast<std::size_t>(j)];
      out.mean_exp[ui] += out.weights(i, j) * std::exp(alpha * b);
      out.mean_b[ui] += out.weights(i, j) * b;
    }
  }
  if (degenerate) throw Error(ErrorCategory::convergence, "E-step: posterior weights vanished for a subject");
  for (double c : contribution) out.observed_loglik += c;
  return out;
}

// Posterior moments of exp(alpha b) and its first two derivatives in alpha.
struct Moments {
  std::vector<double> m0, m1, m2;
};

Moments moments(const Dataset& data, const PosteriorWeights& w, const NormalQuadrature& q, int z, double alpha) {
  Moments out{std::vector<double>(data.size(), 0.0), std::vector<double>(data.size(), 0.0),
              std::vector<double>(data.size(), 0.0)};
  for (std::size_t i : data.arm(z)) {
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double b = q.nodes[j];
      const double v = w.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * std::exp(alpha * b);
      out.m0[i] += v;
      out.m1[i] += v * b;
      out.m2[i] += v * b * b;
    }
  }
  return out;
}

std::vector<Eigen::Index> free_columns(const TransitionModelFit& f) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < f.fixed.size(); ++j) {
    if (!f.fixed[j]) idx.push_back(static_cast<Eigen::Index>(j));
  }
  return idx;
}

void m_step_arm(const Dataset& data, const Workspace& ws, const PosteriorWeights& w, const NormalQuadrature& q,
                const FrailtySpec& spec, int z, MultistateFit& fit) {
  const bool estimate_alpha = !spec.fixed_alpha;
  const double alpha = (*fit.alpha)[static_cast<std::size_t>(z)];

  std::array<std::vector<Eigen::Index>, 3> free;
  Eigen::Index dim = 0;
  for (TransitionKind kind : kAllKinds) {
    const auto k = static_cast<std::size_t>(kind);
    if (ws.design(z, kind).event_total() > 0) free[k] = free_columns(fit.at(z, kind));
    dim += static_cast<Eigen::Index>(free[k].size());
  }
  const Eigen::Index tau_index = dim;
  if (estimate_alpha) ++dim;

  double event_b = 0.0;  // sum_i D_i E[b]
  {
    std::vector<SubjectTerms> terms(data.size());
    accumulate_terms(ws, fit, z, terms);
    for (std::size_t i : data.arm(z)) event_b += terms[i].events * w.mean_b[i];
  }

  const Moments mo = moments(data, w, q, z, alpha);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
  double g_alpha = event_b, h_alpha = 0.0;
  Eigen::Index offset = 0;
  for (TransitionKind kind : kAllKinds) {
    const auto k = static_cast<std::size_t>(kind);
    const RiskDesign& design = ws.design(z, kind);
    if (design.event_total() == 0) continue;
    const ProfileEvaluation ev =
        evaluate_profile(design, fit.at(z, kind).model.beta, {mo.m0, mo.m1, mo.m2});
    const auto& idx = free[k];
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const auto ia = offset + static_cast<Eigen::Index>(a);
      grad[ia] = ev.score[idx[a]];
      for (std::size_t b = 0; b < idx.size(); ++b) hess(ia, offset + static_cast<Eigen::Index>(b)) = ev.hessian(idx[a], idx[b]);
      if (estimate_alpha) hess(ia, tau_index) = hess(tau_index, ia) = alpha * ev.hessian_beta_alpha[idx[a]];
    }
    g_alpha += ev.score_alpha;
    h_alpha += ev.hessian_alpha;
    offset += static_cast<Eigen::Index>(idx.size());
  }
  if (estimate_alpha) {
    grad[tau_index] = alpha * g_alpha;
    hess(tau_index, tau_index) = alpha * alpha * h_alpha + alpha * g_alpha;
  }

  Eigen::VectorXd direction = Eigen::VectorXd::Zero(dim);
  const bool stationary = dim == 0 || grad.cwiseAbs().maxCoeff() < spec.cox.score_tolerance;
  if (!stationary) {
    Eigen::MatrixXd info = -hess;
    double shift = 0.0;
    const double scale = std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info + shift * Eigen::MatrixXd::Identity(dim, dim));
      if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
        direction = ldlt.solve(grad);
        break;
      }
      shift = shift == 0.0 ? 1e-8 * scale : shift * 10.0;
    }
  }

  const double before = arm_observed_loglik(data, ws, fit, z, q);
  auto candidate_fit = [&](double step) {
    MultistateFit next = fit;
    const double new_alpha = estimate_alpha ? alpha * std::exp(step * direction[tau_index]) : alpha;
    (*next.alpha)[static_cast<std::size_t>(z)] = new_alpha;
    const Moments nm = moments(data, w, q, z, new_alpha);
    Eigen::Index off = 0;
    for (TransitionKind kind : kAllKinds) {
      const auto k = static_cast<std::size_t>(kind);
      const RiskDesign& design = ws.design(z, kind);
      if (design.event_total() == 0) continue;
      TransitionModel& model = next.at(z, kind).model;
      for (std::size_t a = 0; a < free[k].size(); ++a) model.beta[free[k][a]] += step * direction[off + static_cast<Eigen::Index>(a)];
      off += static_cast<Eigen::Index>(free[k].size());
      const ProfileEvaluation ev = evaluate_profile(design, model.beta, {nm.m0, {}, {}});
      model.baseline = breslow_baseline(design, ev);
      next.at(z, kind).loglik = ev.loglik;
    }
    return next;
  };

  double step = stationary ? 0.0 : 1.0;
  for (int h = 0; h <= spec.max_halvings + 1; ++h) {
    if (h == spec.max_halvings + 1) step = 0.0;  // Breslow refresh only
    MultistateFit next = candidate_fit(step);
    const double after = arm_observed_loglik(data, ws, next, z, q);
    if (std::isfinite(after) && after >= before - 1e-10 * std::abs(before)) {
      fit = std::move(next);
      return;
    }
    if (step == 0.0) break;
    step *= 0.5;
  }
  std::ostringstream os;
  os << "M-step for arm " << z << " could not avoid decreasing the observed log-likelihood";
  throw ConvergenceError(os.str(), Eigen::VectorXd::Constant(1, alpha), grad.cwiseAbs().maxCoeff());
}

void collinearity_warnings(const Dataset& data, std::vector<std::string>& warnings) {
  const std::size_t p = data.covariate_count();
  if (p == 0) return;
  for (int z = 0; z < 2; ++z) {
    const auto members = data.arm(z);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(members.size()), static_cast<Eigen::Index>(p + 1));
    for (std::size_t r = 0; r < members.size(); ++r) {
      X(static_cast<Eigen::Index>(r), 0) = 1.0;
      for (std::size_t j = 0; j < p; ++j) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j + 1)) = data[members[r]].x[j];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
      warnings.push_back("arm " + std::to_string(z) +
                         ": covariates are collinear (or constant); frailty loading may be poorly identified");
    }
  }
}

}  // namespace

double subject_complete_loglik(const SubjectRecord& s, const MultistateFit& fit, double b) {
  const double alpha = fit.alpha ? (*fit.alpha)[static_cast<std::size_t>(s.z)] : 0.0;
  double event_term = 0.0, exposure = 0.0;
  int events = 0;
  for (TransitionKind kind : kAllKinds) {
    const TransitionModel& model = fit.at(s.z, kind).model;
    const StepFunction& base = model.baseline;
    double previous = 0.0;
    for (std::size_t k = 0; k < base.size(); ++k) {
      const double t = base.times()[k];
      const double jump = base.cumulative()[k] - previous;
      previous = base.cumulative()[k];
      const CovariateRow cr = risk_design(s, t, kind, fit.tie_order);
      if (cr.at_risk) exposure += jump * std::exp(model.beta.dot(cr.row));
    }
    std::optional<double> event;
    if (kind == TransitionKind::confounder) event = s.l_time;
    if (kind == TransitionKind::intermediate && s.delta1) event = s.t1;
    if (kind == TransitionKind::terminal && s.delta2) event = s.t2;
    if (event) {
      const CovariateRow cr = risk_design(s, *event, kind, fit.tie_order);
      event_term += std::log(base.jump_at(*event)) + model.beta.dot(cr.row);
      ++events;
    }
  }
  return event_term + events * alpha * b - std::exp(alpha * b) * exposure;
}

std::vector<SubjectTerms> subject_terms(const Dataset& data, const MultistateFit& fit) {
  Workspace ws(data);
  std::vector<SubjectTerms> terms(data.size());
  for (int z = 0; z < 2; ++z) accumulate_terms(ws, fit, z, terms);
  return terms;
}

PosteriorWeights e_step(const Dataset& data, const MultistateFit& fit, const NormalQuadrature& nodes,
                        Execution execution) {
  Workspace ws(data);
  return e_step_impl(data, ws, fit, nodes, execution);
}

PosteriorWeights e_step(const Dataset& data, const MultistateFit& fit, const FrailtySpec& spec,
                        Execution execution) {
  spec.validate();
  return e_step(data, fit, gauss_hermite(spec.node_count), execution);
}

double observed_loglik(const Dataset& data, const MultistateFit& fit, const NormalQuadrature& nodes) {
  Workspace ws(data);
  return arm_observed_loglik(data, ws, fit, 0, nodes) + arm_observed_loglik(data, ws, fit, 1, nodes);
}

MultistateFit m_step(const Dataset& data, const PosteriorWeights& weights, const MultistateFit& fit,
                     const FrailtySpec& spec) {
  spec.validate();
  if (!fit.alpha) throw Error(ErrorCategory::config, "m_step needs a fit with frailty loadings");
  Workspace ws(data);
  const NormalQuadrature q = gauss_hermite(spec.node_count);
  if (weights.weights.cols() != static_cast<Eigen::Index>(q.size())) {
    throw Error(ErrorCategory::config, "posterior weights do not match the quadrature size");
  }
  MultistateFit next = fit;
  for (int z = 0; z < 2; ++z) m_step_arm(data, ws, weights, q, spec, z, next);
  return next;
}

namespace {

// Free parameters of a frailty fit as one vector: log alpha (when
// estimated), coefficients, and log baseline jumps.
std::vector<double> pack(const MultistateFit& f, bool with_alpha) {
  std::vector<double> v;
  if (with_alpha) {
    for (double a : *f.alpha) v.push_back(std::log(a));
  }
  for (const auto& arm : f.components) {
    for (const auto& c : arm) {
      v.insert(v.end(), c.model.beta.data(), c.model.beta.data() + c.model.beta.size());
      double previous = 0.0;
      for (double cum : c.model.baseline.cumulative()) {
        v.push_back(std::log(cum - previous));
        previous = cum;
      }
    }
  }
  return v;
}

MultistateFit unpack(const std::vector<double>& v, const MultistateFit& shape, bool with_alpha) {
  MultistateFit f = shape;
  std::size_t i = 0;
  if (with_alpha) {
    for (double& a : *f.alpha) a = std::exp(v[i++]);
  }
  for (auto& arm : f.components) {
    for (auto& c : arm) {
      for (Eigen::Index j = 0; j < c.model.beta.size(); ++j) c.model.beta[j] = v[i++];
      std::vector<double> jumps(c.model.baseline.size());
      for (double& d : jumps) d = std::exp(v[i++]);
      c.model.baseline = StepFunction(c.model.baseline.times(), jumps);
    }
  }
  return f;
}

double max_change(const MultistateFit& a, const MultistateFit& b) {
  double change = 0.0;
  for (std::size_t z = 0; z < 2; ++z) change = std::max(change, std::abs((*a.alpha)[z] - (*b.alpha)[z]));
  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t k = 0; k < 3; ++k) {
      const Eigen::VectorXd& x = a.components[z][k].model.beta;
      const Eigen::VectorXd& y = b.components[z][k].model.beta;
      if (x.size() > 0) change = std::max(change, (x - y).cwiseAbs().maxCoeff());
    }
  }
  return change;
}

}  // namespace

FrailtyFit fit_frailty(const Dataset& data, const FrailtySpec& spec, Execution execution) {
  spec.validate();
  FrailtyFit out;
  out.fit = fit_multistate(data, spec.cox, execution);
  out.fit.alpha = spec.fixed_alpha ? *spec.fixed_alpha : spec.alpha_init;
  collinearity_warnings(data, out.warnings);

  const Workspace ws(data);
  const NormalQuadrature q = gauss_hermite(spec.node_count);
  const bool with_alpha = !spec.fixed_alpha;
  auto loglik_of = [&](const MultistateFit& f) {
    return arm_observed_loglik(data, ws, f, 0, q) + arm_observed_loglik(data, ws, f, 1, q);
  };
  int steps = 0;
  auto em_step = [&](MultistateFit f) {
    ++steps;
    const PosteriorWeights w = e_step_impl(data, ws, f, q, execution);
    for (int z = 0; z < 2; ++z) m_step_arm(data, ws, w, q, spec, z, f);
    return f;
  };

  double loglik = loglik_of(out.fit);
  out.trace.push_back({0, loglik, (*out.fit.alpha)[0], (*out.fit.alpha)[1]});
  int accepted = 0;
  double step_max = spec.max_extrapolation;

  while (steps < spec.max_iterations) {
    MultistateFit next = em_step(out.fit);
    double next_loglik;
    if (spec.accelerate && steps + 2 <= spec.max_iterations) {
      MultistateFit second = em_step(next);
      next_loglik = loglik_of(second);
      // Squared extrapolation over two EM steps; a further EM step from the
      // extrapolated point is kept when it beats the plain second step.
      const std::vector<double> t0 = pack(out.fit, with_alpha), t1 = pack(next, with_alpha),
                                t2 = pack(second, with_alpha);
      double rr = 0.0, vv = 0.0;
      std::vector<double> r(t0.size()), v(t0.size());
      for (std::size_t i = 0; i < t0.size(); ++i) {
        r[i] = t1[i] - t0[i];
        v[i] = t2[i] - 2.0 * t1[i] + t0[i];
        rr += r[i] * r[i];
        vv += v[i] * v[i];
      }
      next = std::move(second);
      if (vv > 0.0 && rr > 0.0) {
        double a = std::max(-std::sqrt(rr / vv), -step_max);
        for (int attempt = 0; attempt < 4 && a < -1.0 && steps < spec.max_iterations; ++attempt) {
          std::vector<double> t(t0.size());
          for (std::size_t i = 0; i < t0.size(); ++i) t[i] = t0[i] - 2.0 * a * r[i] + a * a * v[i];
          try {
            MultistateFit jumped = em_step(unpack(t, out.fit, with_alpha));
            const double ll = loglik_of(jumped);
            if (std::isfinite(ll) && ll >= next_loglik) {
              next = std::move(jumped);
              next_loglik = ll;
              if (a == -step_max) step_max *= 4.0;
              break;
            }
          } catch (const Error&) {
          }
          a = 0.5 * (a - 1.0);
        }
      }
    } else {
      next_loglik = loglik_of(next);
    }

    const double delta = next_loglik - loglik;
    if (delta < 0.0) {
      if (-delta < spec.loglik_tolerance) {
        out.iterations = steps;
        out.loglik = loglik;
        return out;
      }
      std::ostringstream os;
      os << "frailty EM step decreased the log-likelihood by " << -delta;
      throw EmConvergenceError(os.str(), std::move(out.trace));
    }
    const double change = max_change(next, out.fit);
    out.fit = std::move(next);
    loglik = next_loglik;
    out.trace.push_back({++accepted, loglik, (*out.fit.alpha)[0], (*out.fit.alpha)[1]});
    out.iterations = steps;
    if (std::abs(delta) < spec.loglik_tolerance && change < spec.parameter_tolerance) {
      out.loglik = loglik;
      return out;
    }
  }
  std::ostringstream os;
  os << "frailty EM did not converge in " << spec.max_iterations << " iterations (loglik " << loglik
     << ", alpha " << (*out.fit.alpha)[0] << ", " << (*out.fit.alpha)[1] << ")";
  throw EmConvergenceError(os.str(), std::move(out.trace));
}

}  // namespace semicomp
