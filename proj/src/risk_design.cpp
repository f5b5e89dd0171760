#include "semicomp/risk_design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace semicomp {

namespace {

double end_of_risk(const SubjectRecord& s, TransitionKind kind) {
  switch (kind) {
    case TransitionKind::confounder: return s.l_time ? std::min(*s.l_time, s.t2) : s.t2;
    case TransitionKind::intermediate: return s.t1;
    case TransitionKind::terminal: break;
  }
  return s.t2;
}

std::optional<double> event_time(const SubjectRecord& s, TransitionKind kind) {
  switch (kind) {
    case TransitionKind::confounder: return s.l_time;
    case TransitionKind::intermediate: return s.delta1 ? std::optional<double>(s.t1) : std::nullopt;
    case TransitionKind::terminal: break;
  }
  return s.delta2 ? std::optional<double>(s.t2) : std::nullopt;
}

}  // namespace

CovariateRow risk_design(const SubjectRecord& s, double t, TransitionKind kind, TieOrder tie_order) {
  const std::size_t p = s.x.size();
  CovariateRow out;
  out.row.resize(static_cast<Eigen::Index>(p + state_columns(kind)));
  for (std::size_t j = 0; j < p; ++j) out.row[static_cast<Eigen::Index>(j)] = s.x[j];
  const auto k = static_cast<Eigen::Index>(p);
  const bool confounder_first = tie_order == TieOrder::confounder_first;
  const CountingPath l = s.confounder();
  const CountingPath n1 = s.intermediate();

  switch (kind) {
    case TransitionKind::confounder:
      out.at_risk = t <= s.t2 && l.value_before(t) == 0;
      out.row[k] = confounder_first ? n1.value_before(t) : n1.value_at(t);
      break;
    case TransitionKind::intermediate:
      out.at_risk = t <= s.t1;
      out.row[k] = confounder_first ? l.value_at(t) : l.value_before(t);
      break;
    case TransitionKind::terminal:
      out.at_risk = t <= s.t2;
      out.row[k] = l.value_at(t);
      out.row[k + 1] = n1.value_at(t);
      break;
  }
  return out;
}

RiskDesign::RiskDesign(const Dataset& data, int arm, TransitionKind kind) : kind_(kind), arm_(arm) {
  const auto members = data.arm(arm);
  const std::size_t cols = data.covariate_count() + state_columns(kind);

  std::vector<double> all_events;
  for (std::size_t i : members) {
    if (auto e = event_time(data[i], kind)) all_events.push_back(*e);
  }
  std::sort(all_events.begin(), all_events.end());
  for (double e : all_events) {
    if (event_times_.empty() || event_times_.back() != e) {
      event_times_.push_back(e);
      event_counts_.push_back(1.0);
    } else {
      event_counts_.back() += 1.0;
    }
  }

  std::vector<Eigen::VectorXd> rows;
  const auto& tau = event_times_;
  auto lower = [&](double v) { return static_cast<std::size_t>(std::lower_bound(tau.begin(), tau.end(), v) - tau.begin()); };
  auto upper = [&](double v) { return static_cast<std::size_t>(std::upper_bound(tau.begin(), tau.end(), v) - tau.begin()); };

  for (std::size_t i : members) {
    const SubjectRecord& s = data[i];
    const std::size_t stop = upper(end_of_risk(s, kind));
    if (stop == 0) continue;
    const std::size_t last = stop - 1;

    // Covariate rows only change at the confounder jump or the intermediate
    // event, on either side of the tied event time.
    std::set<std::size_t> starts{0};
    for (auto change : {s.l_time, s.delta1 ? std::optional<double>(s.t1) : std::nullopt}) {
      if (!change) continue;
      for (std::size_t c : {lower(*change), upper(*change)}) {
        if (c > 0 && c <= last) starts.insert(c);
      }
    }
    std::vector<std::size_t> bounds(starts.begin(), starts.end());
    bounds.push_back(last + 1);

    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      CovariateRow cr = risk_design(s, tau[bounds[b]], kind, data.tie_order());
      if (!segments_.empty() && segments_.back().subject == i && rows.back() == cr.row) {
        segments_.back().last = bounds[b + 1] - 1;
      } else {
        segments_.push_back({i, bounds[b], bounds[b + 1] - 1});
        rows.push_back(std::move(cr.row));
      }
    }
    if (auto e = event_time(s, kind)) {
      if (*e == tau[last]) events_.push_back(segments_.size() - 1);
    }
  }

  rows_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) rows_.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();

  constant_.assign(cols, true);
  for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
    for (Eigen::Index r = 1; r < rows_.rows(); ++r) {
      if (rows_(r, j) != rows_(0, j)) {
        constant_[static_cast<std::size_t>(j)] = false;
        break;
      }
    }
  }
}

ProfileEvaluation evaluate_profile(const RiskDesign& design, const Eigen::VectorXd& beta,
                                   const SubjectMultipliers& m) {
  const auto c = static_cast<Eigen::Index>(design.columns());
  const std::size_t n_times = design.event_times().size();
  const auto& segments = design.segments();
  const Eigen::MatrixXd& X = design.rows();
  const bool with_alpha = !m.m1.empty();

  ProfileEvaluation out;
  out.score = Eigen::VectorXd::Zero(c);
  out.hessian = Eigen::MatrixXd::Zero(c, c);
  out.hessian_beta_alpha = Eigen::VectorXd::Zero(c);
  out.risk_sums.assign(n_times, 0.0);
  if (n_times == 0 || segments.empty()) return out;

  const Eigen::VectorXd eta = X * beta;
  const double shift = eta.maxCoeff();

  // Difference arrays over event-time indices; a segment adds its weight at
  // `first` and removes it after `last`.
  const auto T = static_cast<Eigen::Index>(n_times + 1);
  std::vector<double> d0(n_times + 1, 0.0), da1, da2;
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(c, T);
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(c * c, T);
  Eigen::MatrixXd db1;
  if (with_alpha) {
    da1.assign(n_times + 1, 0.0);
    da2.assign(n_times + 1, 0.0);
    db1 = Eigen::MatrixXd::Zero(c, T);
  }

  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    const auto r = static_cast<Eigen::Index>(s);
    const double base = std::exp(eta[r] - shift);
    const double w = m.m0.empty() ? base : base * m.m0[seg.subject];
    const auto a = static_cast<Eigen::Index>(seg.first);
    const auto b = static_cast<Eigen::Index>(seg.last + 1);
    const auto xr = X.row(r).transpose();
    d0[seg.first] += w;
    d0[seg.last + 1] -= w;
    d1.col(a) += w * xr;
    d1.col(b) -= w * xr;
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k <= j; ++k) {
        const double v = w * xr[j] * xr[k];
        d2(j * c + k, a) += v;
        d2(j * c + k, b) -= v;
      }
    }
    if (with_alpha) {
      const double w1 = base * m.m1[seg.subject];
      const double w2 = base * m.m2[seg.subject];
      da1[seg.first] += w1;
      da1[seg.last + 1] -= w1;
      da2[seg.first] += w2;
      da2[seg.last + 1] -= w2;
      db1.col(a) += w1 * xr;
      db1.col(b) -= w1 * xr;
    }
  }

  for (std::size_t e : design.event_segments()) {
    out.loglik += eta[static_cast<Eigen::Index>(e)];
    out.score += X.row(static_cast<Eigen::Index>(e)).transpose();
  }

  double s0 = 0.0, a1 = 0.0, a2 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(c), b1 = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd s2 = Eigen::VectorXd::Zero(c * c);
  const auto& counts = design.event_counts();
  for (std::size_t t = 0; t < n_times; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    s0 += d0[t];
    s1 += d1.col(ti);
    s2 += d2.col(ti);
    const double d = counts[t];
    out.risk_sums[t] = s0 * std::exp(shift);
    out.loglik -= d * (std::log(s0) + shift);
    const Eigen::VectorXd mean = s1 / s0;
    out.score -= d * mean;
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index k = 0; k <= j; ++k) {
        out.hessian(j, k) -= d * (s2[j * c + k] / s0 - mean[j] * mean[k]);
      }
    }
    if (with_alpha) {
      a1 += da1[t];
      a2 += da2[t];
      b1 += db1.col(ti);
      const double ra = a1 / s0;
      out.score_alpha -= d * ra;
      out.hessian_alpha -= d * (a2 / s0 - ra * ra);
      out.hessian_beta_alpha -= d * (b1 / s0 - mean * ra);
    }
  }
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index k = 0; k < j; ++k) out.hessian(k, j) = out.hessian(j, k);
  }
  return out;
}

std::vector<double> breslow_jumps(const RiskDesign& design, const ProfileEvaluation& evaluation) {
  const auto& counts = design.event_counts();
  std::vector<double> jumps(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) jumps[t] = counts[t] / evaluation.risk_sums[t];
  return jumps;
}

}  // namespace semicomp
