#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semicomp/cif_engine.hpp"
#include "semicomp/core_model.hpp"
#include "semicomp/estimator.hpp"
#include "semicomp/multistate_model.hpp"

namespace semicomp {

// Hazard a + c t, c >= 0.
struct LinearHazard {
  double a = 0.0;
  double c = 0.0;

  double operator()(double t) const { return a + c * t; }
  double integral(double s, double t) const { return a * (t - s) + 0.5 * c * (t * t - s * s); }
  LinearHazard scaled(double m) const { return {a * m, c * m}; }
};

// Censoring hazard (scale (t - shift))^2 exp(gamma . x).
struct CensoringHazard {
  double scale = 0.0;
  double shift = 0.0;
  std::vector<double> gamma;

  double cumulative(double t, std::span<const double> x) const;
  // Time at which the cumulative hazard reaches e.
  double invert(double e, std::span<const double> x) const;
};

// Data-generating process with three binary covariates, a binary treatment
// assigned by a logistic propensity, and a subject-level normal effect U
// shared by the three event hazards.
struct DgpSpec {
  std::size_t n = 1000;
  double frailty_sd = 0.0;
  double horizon = 20.0;
  std::uint64_t seed = 1;

  // Treatment coefficient in the terminal baseline 0.01 + k z + 0.02 t.
  static constexpr double kTerminalTreatmentSlope = 0.01;

  std::array<std::array<LinearHazard, 3>, 2> baseline;  // [arm][kind]
  std::array<std::vector<double>, 3> beta;              // (x1, x2, x3, state columns) per kind
  std::array<CensoringHazard, 2> censoring;
  double propensity_intercept = -0.5;                   // logit P(Z = 1)
  std::vector<double> propensity_slope{-0.3, 0.4, 0.5};
  double covariate_probability = 0.5;

  bool censor = true;
  bool zero_covariates = false;
  std::optional<int> force_arm;

  // Setting 1 (frailty_sd 0) or 2 (frailty_sd 0.4).
  static DgpSpec setting(int which, std::size_t n = 1000, std::uint64_t seed = 1);

  // Both arms share the arm-0 event and censoring hazards.
  DgpSpec with_identical_arms() const;

  double propensity(std::span<const double> x) const;
  std::size_t covariate_count() const { return beta[0].size() - state_columns(TransitionKind::confounder); }
};

Dataset simulate_dataset(const DgpSpec& spec);

// The DGP as a MultistateModel with baselines on a uniform grid of `grid`
// points (exact integrals over each cell). A positive frailty_sd becomes a
// frailty with alpha_z = frailty_sd.
MultistateModel true_model(const DgpSpec& spec, std::size_t grid = 2000);

// The eight equiprobable covariate patterns.
CovariateDistribution dgp_covariates(const DgpSpec& spec);

struct TrueValueOptions {
  std::size_t grid = 2000;
  std::size_t frailty_nodes = 40;
  Execution execution = Execution::parallel;
};

EffectTable true_values(const DgpSpec& spec, std::span<const double> times, const TrueValueOptions& options = {});

// Direct simulation of the counterfactual world: G drawn from the arm-z1
// intermediate hazard (conditional) or from its confounder-marginalised
// version (marginal, estimated by Nelson-Aalen from a first-stage factual
// simulation), confounder and death under z2. Population results are
// stratified over the covariate patterns.
struct McOracleResult {
  std::vector<double> times;
  std::vector<double> cif;
  std::vector<double> se;
  std::size_t paths = 0;
};

struct McOracleOptions {
  std::size_t paths = 1'000'000;
  std::size_t first_stage_factor = 4;  // first-stage paths per second-stage path
  std::uint64_t seed = 7;
  std::optional<std::vector<double>> x;  // a single pattern instead of the population
  Execution execution = Execution::parallel;
};

McOracleResult mc_counterfactual_oracle(const DgpSpec& spec, int z1, int z2, DrawMode mode,
                                        std::span<const double> times, const McOracleOptions& options = {});

struct ReplicationOptions {
  std::size_t replications = 200;
  EstimatorOptions estimator;
  std::vector<double> times{2.0, 4.0, 6.0, 8.0, 10.0};
  TrueValueOptions truth;
  Execution execution = Execution::parallel;
};

struct ReplicationReport {
  EstimatorVariant variant = EstimatorVariant::npmle;
  int setting = 0;
  std::size_t replications = 0;  // requested
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
  std::vector<double> times;
  EffectTable truth;
  std::array<std::vector<double>, 6> mean_estimate;
  std::array<std::vector<double>, 6> bias;
  std::optional<std::array<std::vector<double>, 6>> sd;  // absent with fewer than two successes
  std::vector<std::array<double, 2>> alpha_estimates;     // frailty variant only

  std::size_t successes() const { return replications - failures; }
};

// `setting` is a label carried into the report; the data come from `spec`.
ReplicationReport replication_study(const DgpSpec& spec, int setting, const ReplicationOptions& options);

// Per-replication seed derived from (master, index).
std::uint64_t derived_seed(std::uint64_t master, std::uint64_t index);

// Synthetic transplant-registry-shaped data: 636 subjects (528 in arm 0,
// 108 in arm 1), follow-up in months up to 123, covariates age (decades,
// centred), male, kps90, ptcy_cni_mmf, nhl, marrow.
Dataset hct_like_dataset(std::uint64_t seed = 2024);

}  // namespace semicomp
