#include "semicomp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "event_sampler.hpp"

namespace semicomp {

double CensoringHazard::cumulative(double t, std::span<const double> x) const {
  double eta = 0.0;
  for (std::size_t j = 0; j < gamma.size() && j < x.size(); ++j) eta += gamma[j] * x[j];
  const double d = t - shift;
  return std::exp(eta) * scale * scale * (d * d * d + shift * shift * shift) / 3.0;
}

double CensoringHazard::invert(double e, std::span<const double> x) const {
  double eta = 0.0;
  for (std::size_t j = 0; j < gamma.size() && j < x.size(); ++j) eta += gamma[j] * x[j];
  if (scale == 0.0) return kNever;
  return shift + std::cbrt(3.0 * e / (scale * scale * std::exp(eta)) - shift * shift * shift);
}

DgpSpec DgpSpec::setting(int which, std::size_t n, std::uint64_t seed) {
  if (which != 1 && which != 2) throw Error(ErrorCategory::config, "simulation setting must be 1 or 2");
  DgpSpec s;
  s.n = n;
  s.seed = seed;
  s.frailty_sd = which == 2 ? 0.4 : 0.0;
  for (int z = 0; z < 2; ++z) {
    auto& arm = s.baseline[static_cast<std::size_t>(z)];
    arm[0] = {0.01, 0.04 - 0.02 * z};
    arm[1] = {0.02, 0.02 + 0.01 * z};
    arm[2] = {0.01 + kTerminalTreatmentSlope * z, 0.02};
  }
  s.beta[0] = {0.2, 0.2, -0.2, -0.2};
  s.beta[1] = {0.2, -0.2, -0.2, -0.3};
  s.beta[2] = {0.1, 0.1, 0.1, 0.0, 0.5};
  s.censoring[1] = {0.05, 5.0, {-0.1, 0.0, 0.0}};
  s.censoring[0] = {0.04, 6.0, {-0.1, -0.2, 0.0}};
  return s;
}

DgpSpec DgpSpec::with_identical_arms() const {
  DgpSpec s = *this;
  s.baseline[1] = s.baseline[0];
  s.censoring[1] = s.censoring[0];
  return s;
}

double DgpSpec::propensity(std::span<const double> x) const {
  double eta = propensity_intercept;
  for (std::size_t j = 0; j < propensity_slope.size() && j < x.size(); ++j) eta += propensity_slope[j] * x[j];
  return 1.0 / (1.0 + std::exp(-eta));
}

namespace {

ArmHazards arm_hazards(const DgpSpec& spec, int z, std::span<const double> x, double u) {
  ArmHazards h;
  const auto& base = spec.baseline[static_cast<std::size_t>(z)];
  const std::size_t p = x.size();
  auto eta = [&](const std::vector<double>& b) {
    double v = u;
    for (std::size_t j = 0; j < p; ++j) v += b[j] * x[j];
    return v;
  };
  const double ec = eta(spec.beta[0]), ei = eta(spec.beta[1]), et = eta(spec.beta[2]);
  for (int s = 0; s < 2; ++s) {
    h.confounder[s] = base[0].scaled(std::exp(ec + spec.beta[0][p] * s));
    h.intermediate[s] = base[1].scaled(std::exp(ei + spec.beta[1][p] * s));
  }
  for (int l = 0; l < 2; ++l) {
    for (int g = 0; g < 2; ++g) {
      h.terminal[l][g] = base[2].scaled(std::exp(et + spec.beta[2][p] * l + spec.beta[2][p + 1] * g));
    }
  }
  return h;
}

SubjectRecord record_from_path(const FactualPath& path, std::string id, int z, std::vector<double> x) {
  SubjectRecord r;
  r.id = std::move(id);
  r.z = z;
  r.x = std::move(x);
  r.l_time = path.l_time;
  r.t2 = path.exit;
  r.delta2 = path.died;
  if (path.g_time) {
    r.t1 = *path.g_time;
    r.delta1 = true;
  } else {
    r.t1 = r.t2;
  }
  return r;
}

}  // namespace

Dataset simulate_dataset(const DgpSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution cov(spec.covariate_probability);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t p = spec.covariate_count();

  std::vector<SubjectRecord> rows;
  rows.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::vector<double> x(p, 0.0);
    for (auto& v : x) v = cov(rng) ? 1.0 : 0.0;
    if (spec.zero_covariates) std::fill(x.begin(), x.end(), 0.0);
    const bool treated = unif(rng) < spec.propensity(x);
    const int z = spec.force_arm ? *spec.force_arm : (treated ? 1 : 0);
    const double u = spec.frailty_sd * normal(rng);
    const double cens = spec.censor ? spec.censoring[static_cast<std::size_t>(z)].invert(expo(rng), x) : kNever;
    const double end = std::min(spec.horizon, cens);
    const FactualPath path = simulate_factual(arm_hazards(spec, z, x, u), end, rng);
    rows.push_back(record_from_path(path, std::to_string(i + 1), z, std::move(x)));
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return build_dataset(std::move(rows), std::move(names));
}

MultistateModel true_model(const DgpSpec& spec, std::size_t grid) {
  if (grid == 0) throw Error(ErrorCategory::config, "true model grid must be positive");
  MultistateModel m;
  m.p = spec.covariate_count();
  m.frailty = spec.frailty_sd > 0.0;
  const TimeGrid g = uniform_grid(spec.horizon, grid);
  for (int z = 0; z < 2; ++z) {
    ArmModel& arm = m.arms[static_cast<std::size_t>(z)];
    arm.alpha = spec.frailty_sd;
    for (TransitionKind kind : kAllKinds) {
      const auto k = static_cast<std::size_t>(kind);
      const LinearHazard& h = spec.baseline[static_cast<std::size_t>(z)][k];
      std::vector<double> jumps(g.size());
      double previous = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        jumps[i] = h.integral(previous, g.times[i]);
        previous = g.times[i];
      }
      TransitionModel& tm = arm[kind];
      tm.beta = Eigen::Map<const Eigen::VectorXd>(spec.beta[k].data(), static_cast<Eigen::Index>(spec.beta[k].size()));
      tm.baseline = StepFunction(g.times, jumps);
    }
  }
  return m;
}

CovariateDistribution dgp_covariates(const DgpSpec& spec) {
  const std::size_t p = spec.covariate_count();
  if (spec.zero_covariates) return CovariateDistribution::single(std::vector<double>(p, 0.0));
  CovariateDistribution d;
  const std::size_t patterns = std::size_t{1} << p;
  for (std::size_t m = 0; m < patterns; ++m) {
    std::vector<double> x(p);
    double w = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
      x[j] = (m >> j) & 1U ? 1.0 : 0.0;
      w *= x[j] == 1.0 ? spec.covariate_probability : 1.0 - spec.covariate_probability;
    }
    d.rows.push_back(std::move(x));
    d.weights.push_back(w);
  }
  return d;
}

EffectTable true_values(const DgpSpec& spec, std::span<const double> times, const TrueValueOptions& options) {
  const MultistateModel model = true_model(spec, options.grid);
  return effect_analysis(model, dgp_covariates(spec), times, {options.frailty_nodes, options.execution}).effects;
}

std::uint64_t derived_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

ReplicationReport replication_study(const DgpSpec& spec, int setting, const ReplicationOptions& options) {
  if (options.replications == 0) throw Error(ErrorCategory::config, "replication count must be positive");
  const std::size_t B = options.replications;
  const std::size_t T = options.times.size();

  ReplicationReport report;
  report.variant = options.estimator.variant;
  report.setting = setting;
  report.replications = B;
  report.times = options.times;
  report.truth = true_values(spec, options.times, options.truth);

  std::vector<std::optional<EffectTable>> results(B);
  std::vector<std::optional<std::array<double, 2>>> alphas(B);
  std::vector<std::string> messages(B);

  auto run = [&](std::size_t r) {
    DgpSpec rep = spec;
    rep.seed = derived_seed(spec.seed, r);
    try {
      const Dataset data = simulate_dataset(rep);
      const MultistateFit fit = fit_estimator(data, options.estimator, Execution::serial);
      CifOptions cif = options.estimator.cif;
      cif.execution = Execution::serial;
      results[r] = effect_analysis(fit.model(), dgp_covariates(spec), options.times, cif).effects;
      if (fit.alpha) alphas[r] = *fit.alpha;
    } catch (const std::exception& e) {
      messages[r] = "replication " + std::to_string(r) + ": " + e.what();
    }
  };
#pragma omp parallel for schedule(dynamic) if (options.execution == Execution::parallel)
  for (std::size_t r = 0; r < B; ++r) run(r);

  std::array<std::vector<double>, 6> sum, sumsq;
  for (auto& v : sum) v.assign(T, 0.0);
  for (auto& v : sumsq) v.assign(T, 0.0);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < B; ++r) {
    if (!results[r]) {
      ++report.failures;
      report.failure_messages.push_back(messages[r]);
      continue;
    }
    ++ok;
    if (alphas[r]) report.alpha_estimates.push_back(*alphas[r]);
    for (std::size_t e = 0; e < 6; ++e) {
      for (std::size_t t = 0; t < T; ++t) {
        const double v = results[r]->estimates[e][t];
        sum[e][t] += v;
        sumsq[e][t] += v * v;
      }
    }
  }
  if (ok == 0) throw Error(ErrorCategory::convergence, "every replication failed");

  std::array<std::vector<double>, 6> sd;
  for (std::size_t e = 0; e < 6; ++e) {
    report.mean_estimate[e].resize(T);
    report.bias[e].resize(T);
    sd[e].resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double mean = sum[e][t] / static_cast<double>(ok);
      report.mean_estimate[e][t] = mean;
      report.bias[e][t] = mean - report.truth.estimates[e][t];
      if (ok > 1) {
        double ss = 0.0;
        for (std::size_t r = 0; r < B; ++r) {
          if (results[r]) ss += std::pow(results[r]->estimates[e][t] - mean, 2);
        }
        sd[e][t] = std::sqrt(ss / static_cast<double>(ok - 1));
      }
    }
  }
  if (ok > 1) report.sd = sd;
  return report;
}

Dataset hct_like_dataset(std::uint64_t seed) {
  constexpr std::size_t kArm0 = 528, kArm1 = 108;
  constexpr double kMaxFollowUp = 123.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  auto coin = [&](double p) { return unif(rng) < p ? 1.0 : 0.0; };

  // Per-month hazards; arm 1 has less GVHD and more relapse.
  const std::array<double, 2> gvhd{0.030, 0.018}, relapse{0.010, 0.016}, death{0.0045, 0.0050};
  const std::array<double, 2> alpha{0.5, 0.1};
  const std::vector<double> b_gvhd{0.05, 0.10, -0.10, -0.40, 0.0, -0.20};
  const std::vector<double> b_relapse{0.05, 0.10, -0.20, 0.20, 0.40, 0.0};
  const std::vector<double> b_death{0.25, 0.10, -0.35, 0.0, 0.10, 0.05};

  std::vector<SubjectRecord> rows;
  rows.reserve(kArm0 + kArm1);
  for (std::size_t i = 0; i < kArm0 + kArm1; ++i) {
    const int z = i < kArm0 ? 0 : 1;
    std::vector<double> x{std::round(normal(rng) * 10.0) / 10.0, coin(0.58), coin(0.55),
                          coin(z == 1 ? 0.45 : 0.20), coin(0.40), coin(0.15)};
    const double u = alpha[static_cast<std::size_t>(z)] * normal(rng);
    auto dot = [&](const std::vector<double>& b) {
      return std::inner_product(b.begin(), b.end(), x.begin(), u);
    };
    ArmHazards h;
    for (int s = 0; s < 2; ++s) {
      h.confounder[s] = {gvhd[static_cast<std::size_t>(z)] * std::exp(dot(b_gvhd) - 0.2 * s), 0.0};
      h.intermediate[s] = {relapse[static_cast<std::size_t>(z)] * std::exp(dot(b_relapse) - 0.3 * s), 0.0};
    }
    for (int l = 0; l < 2; ++l) {
      for (int g = 0; g < 2; ++g) {
        h.terminal[l][g] = {death[static_cast<std::size_t>(z)] * std::exp(dot(b_death) + 0.4 * l + 1.2 * g), 0.0};
      }
    }
    const double cens = std::min(kMaxFollowUp, 0.5 + 33.5 * expo(rng));
    FactualPath path = simulate_factual(h, cens, rng);
    // Registry times are recorded to a hundredth of a month.
    auto round_up = [](double t) { return std::ceil(t * 100.0) / 100.0; };
    path.exit = round_up(path.exit);
    if (path.l_time) path.l_time = std::min(round_up(*path.l_time), path.exit);
    if (path.g_time) path.g_time = std::min(round_up(*path.g_time), path.exit);
    rows.push_back(record_from_path(path, "P" + std::to_string(i + 1), z, std::move(x)));
  }
  return build_dataset(std::move(rows), {"age", "male", "kps90", "ptcy_cni_mmf", "nhl", "marrow"});
}

}  // namespace semicomp
