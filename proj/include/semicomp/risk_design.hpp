#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

#include "semicomp/core_model.hpp"
#include "semicomp/multistate_model.hpp"

namespace semicomp {

struct CovariateRow {
  bool at_risk = false;
  Eigen::VectorXd row;  // (x, state columns)
};

// Covariate row and at-risk indicator of one subject for one transition at
// time t. Confounder: at risk while l(t-) = 0 and alive, row (x, n1(t-)).
// Intermediate: at risk while n1(t-) = 0 and alive, row (x, l(t)).
// Terminal: at risk while alive, row (x, l(t), n1(t)).
CovariateRow risk_design(const SubjectRecord& subject, double t, TransitionKind kind,
                         TieOrder tie_order = TieOrder::confounder_first);

// Counting-process design of one (arm, transition) pair, indexed by the
// distinct event times of that transition. Each subject contributes a few
// segments over which its covariate row is constant.
class RiskDesign {
 public:
  struct Segment {
    std::size_t subject;  // index into the dataset
    std::size_t first;    // first event-time index covered
    std::size_t last;     // last event-time index covered (inclusive)
  };

  RiskDesign(const Dataset& data, int arm, TransitionKind kind);

  TransitionKind kind() const { return kind_; }
  int arm() const { return arm_; }
  std::size_t columns() const { return static_cast<std::size_t>(rows_.cols()); }

  const std::vector<double>& event_times() const { return event_times_; }
  const std::vector<double>& event_counts() const { return event_counts_; }
  std::size_t event_total() const { return events_.size(); }

  const std::vector<Segment>& segments() const { return segments_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  // Segment index holding each observed event; the event sits at segment.last.
  const std::vector<std::size_t>& event_segments() const { return events_; }

  // Columns whose value never varies across segments carry no information.
  const std::vector<bool>& constant_columns() const { return constant_; }

 private:
  TransitionKind kind_;
  int arm_;
  std::vector<double> event_times_;
  std::vector<double> event_counts_;
  std::vector<Segment> segments_;
  Eigen::MatrixXd rows_;
  std::vector<std::size_t> events_;
  std::vector<bool> constant_;
};

// Per-subject multiplicative weights on the risk-set terms, and optionally
// their first two derivatives with respect to a frailty loading.
struct SubjectMultipliers {
  std::span<const double> m0;
  std::span<const double> m1;
  std::span<const double> m2;
};

// Breslow profile log-likelihood of a transition with its derivatives.
struct ProfileEvaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
  std::vector<double> risk_sums;  // S0 at each event time, unshifted

  // Filled only when m1/m2 multipliers are supplied.
  double score_alpha = 0.0;
  double hessian_alpha = 0.0;
  Eigen::VectorXd hessian_beta_alpha;
};

ProfileEvaluation evaluate_profile(const RiskDesign& design, const Eigen::VectorXd& beta,
                                   const SubjectMultipliers& multipliers = {});

// Baseline jumps d_k / S0_k at the design's event times.
std::vector<double> breslow_jumps(const RiskDesign& design, const ProfileEvaluation& evaluation);

}  // namespace semicomp
