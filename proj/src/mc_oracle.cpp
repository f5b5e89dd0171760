#include <algorithm>
#include <cmath>

#include "event_sampler.hpp"
#include "semicomp/simulation.hpp"

namespace semicomp {

namespace {

ArmHazards pattern_hazards(const DgpSpec& spec, int z, std::span<const double> x, double u) {
  ArmHazards h;
  const auto& base = spec.baseline[static_cast<std::size_t>(z)];
  const std::size_t p = x.size();
  auto eta = [&](const std::vector<double>& b) {
    double v = u;
    for (std::size_t j = 0; j < p; ++j) v += b[j] * x[j];
    return v;
  };
  for (int s = 0; s < 2; ++s) {
    h.confounder[s] = base[0].scaled(std::exp(eta(spec.beta[0]) + spec.beta[0][p] * s));
    h.intermediate[s] = base[1].scaled(std::exp(eta(spec.beta[1]) + spec.beta[1][p] * s));
  }
  for (int l = 0; l < 2; ++l) {
    for (int g = 0; g < 2; ++g) {
      h.terminal[l][g] = base[2].scaled(std::exp(eta(spec.beta[2]) + spec.beta[2][p] * l + spec.beta[2][p + 1] * g));
    }
  }
  return h;
}

// Nelson-Aalen estimate of the intermediate hazard among event-free arm-z1
// subjects, from uncensored factual paths.
struct DrawnHazard {
  std::vector<double> times;
  std::vector<double> cumulative;

  double draw(double e) const {
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), e);
    return it == cumulative.end() ? kNever : times[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

DrawnHazard first_stage(const DgpSpec& spec, int z1, std::span<const double> x, double end, std::size_t paths,
                        std::mt19937_64& rng) {
  const ArmHazards h = pattern_hazards(spec, z1, x, 0.0);
  std::vector<std::pair<double, bool>> exits(paths);
  for (auto& e : exits) {
    // Stop at the first intermediate event: only the event-free period matters.
    ArmHazards stop = h;
    for (auto& row : stop.terminal) row[1] = {0.0, 0.0};
    const FactualPath p = simulate_factual(stop, end, rng);
    e = p.g_time ? std::pair{*p.g_time, true} : std::pair{p.exit, false};
  }
  std::sort(exits.begin(), exits.end());
  DrawnHazard out;
  double cum = 0.0;
  std::size_t at_risk = paths;
  for (const auto& [t, event] : exits) {
    if (event) {
      cum += 1.0 / static_cast<double>(at_risk);
      out.times.push_back(t);
      out.cumulative.push_back(cum);
    }
    --at_risk;
  }
  return out;
}

std::vector<double> pattern_cif(const DgpSpec& spec, int z1, int z2, DrawMode mode, std::span<const double> x,
                                std::span<const double> times, std::size_t paths, std::size_t stage_factor,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  const double end = times.empty() ? 0.0 : times.back();

  std::optional<DrawnHazard> drawn;
  if (mode == DrawMode::marginal) drawn = first_stage(spec, z1, x, end, paths * stage_factor, rng);

  std::vector<double> deaths;
  deaths.reserve(paths);
  for (std::size_t i = 0; i < paths; ++i) {
    const double u = spec.frailty_sd > 0.0 ? spec.frailty_sd * normal(rng) : 0.0;
    ArmHazards world = pattern_hazards(spec, z2, x, u);
    std::optional<double> scheduled;
    if (mode == DrawMode::marginal) {
      scheduled = drawn->draw(expo(rng));
    } else {
      const ArmHazards source = pattern_hazards(spec, z1, x, u);
      world.intermediate[0] = source.intermediate[0];
      world.intermediate[1] = source.intermediate[1];
    }
    const FactualPath p = simulate_factual(world, end, rng, scheduled);
    if (p.died) deaths.push_back(p.exit);
  }
  std::sort(deaths.begin(), deaths.end());
  std::vector<double> cif(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto count = std::upper_bound(deaths.begin(), deaths.end(), times[k]) - deaths.begin();
    cif[k] = static_cast<double>(count) / static_cast<double>(paths);
  }
  return cif;
}

}  // namespace

McOracleResult mc_counterfactual_oracle(const DgpSpec& spec, int z1, int z2, DrawMode mode,
                                        std::span<const double> times, const McOracleOptions& options) {
  if (options.paths < 10'000) throw Error(ErrorCategory::config, "the Monte-Carlo oracle needs at least 10^4 paths");
  if (mode == DrawMode::natural && z1 != z2) throw Error(ErrorCategory::config, "natural mode requires z1 == z2");
  if (mode == DrawMode::marginal && spec.frailty_sd > 0.0) {
    throw Error(ErrorCategory::config, "marginal-draw oracle is only available without frailty");
  }
  if (!std::is_sorted(times.begin(), times.end())) throw Error(ErrorCategory::config, "oracle times must ascend");

  CovariateDistribution patterns =
      options.x ? CovariateDistribution::single(*options.x) : dgp_covariates(spec);
  const std::size_t strata = patterns.rows.size();
  const std::size_t per = options.paths / strata;

  std::vector<std::vector<double>> results(strata);
#pragma omp parallel for schedule(dynamic) if (options.execution == Execution::parallel)
  for (std::size_t s = 0; s < strata; ++s) {
    results[s] = pattern_cif(spec, z1, z2, mode, patterns.rows[s], times, per, options.first_stage_factor,
                             derived_seed(options.seed, s));
  }

  McOracleResult out;
  out.times.assign(times.begin(), times.end());
  out.cif.assign(times.size(), 0.0);
  out.se.assign(times.size(), 0.0);
  out.paths = per * strata;
  for (std::size_t s = 0; s < strata; ++s) {
    const double w = patterns.weights[s];
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double p = results[s][k];
      out.cif[k] += w * p;
      out.se[k] += w * w * p * (1.0 - p) / static_cast<double>(per);
    }
  }
  for (double& v : out.se) v = std::sqrt(v);
  return out;
}

}  // namespace semicomp
