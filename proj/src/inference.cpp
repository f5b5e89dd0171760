#include "semicomp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <random>
#include <sstream>

#include "semicomp/simulation.hpp"

namespace semicomp {

void BootstrapConfig::validate() const {
  if (resamples == 1) throw Error(ErrorCategory::config, "an interval needs at least 2 resamples");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCategory::config, "confidence level must lie in (0, 1)");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction < 1.0)) {
    throw Error(ErrorCategory::config, "failure fraction must lie in [0, 1)");
  }
}

double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw Error(ErrorCategory::config, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void attach_intervals(EffectTable& table, const std::vector<std::array<std::vector<double>, 6>>& replicates,
                      double level) {
  const std::size_t T = table.times.size();
  std::array<std::vector<Interval>, 6> intervals;
  std::vector<double> column(replicates.size());
  for (std::size_t e = 0; e < 6; ++e) {
    if (table.estimates[e].empty()) continue;
    intervals[e].resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t r = 0; r < replicates.size(); ++r) column[r] = replicates[r][e][t];
      std::sort(column.begin(), column.end());
      Interval& iv = intervals[e][t];
      iv.lower = sorted_quantile(column, 0.5 * (1.0 - level));
      iv.upper = sorted_quantile(column, 0.5 * (1.0 + level));
      const double point = table.estimates[e][t];
      iv.point_outside = point < iv.lower || point > iv.upper;
    }
  }
  table.intervals = std::move(intervals);
}

BootstrapResult bootstrap_effects(const Dataset& data, const BootstrapConfig& config,
                                  const EstimatorOptions& estimator, std::span<const double> times,
                                  Execution execution) {
  config.validate();
  BootstrapResult out;
  out.table = estimate_effects(data, times, estimator, execution);
  out.resamples = config.resamples;
  if (config.resamples == 0) return out;

  const std::size_t n = data.size();
  std::vector<std::optional<EffectTable>> tables(config.resamples);
  std::vector<std::string> messages(config.resamples);

  auto run = [&](std::size_t r) {
    std::mt19937_64 rng(derived_seed(config.seed, r));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    try {
      const Dataset sample = data.resample(idx);
      tables[r] = estimate_effects(sample, times, estimator, Execution::serial);
    } catch (const std::exception& e) {
      messages[r] = "resample " + std::to_string(r) + ": " + e.what();
    }
  };
#pragma omp parallel for schedule(dynamic) if (execution == Execution::parallel)
  for (std::size_t r = 0; r < config.resamples; ++r) run(r);

  for (std::size_t r = 0; r < config.resamples; ++r) {
    if (tables[r]) {
      out.replicates.push_back(tables[r]->estimates);
    } else {
      ++out.failures;
      out.failure_messages.push_back(messages[r]);
    }
  }
  const double fraction = static_cast<double>(out.failures) / static_cast<double>(config.resamples);
  if (fraction > config.max_failure_fraction || out.replicates.size() < 2) {
    std::ostringstream os;
    os << "bootstrap aborted: " << out.failures << " of " << config.resamples << " refits failed";
    if (!out.failure_messages.empty()) os << " (first: " << out.failure_messages.front() << ")";
    throw Error(ErrorCategory::convergence, os.str());
  }
  attach_intervals(out.table, out.replicates, config.level);
  return out;
}

}  // namespace semicomp
