#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semicomp/cif_engine.hpp"
#include "semicomp/estimator.hpp"

namespace semicomp {

struct BootstrapConfig {
  std::size_t resamples = 300;
  std::uint64_t seed = 1;
  double level = 0.95;
  double max_failure_fraction = 0.2;

  void validate() const;
};

struct BootstrapResult {
  EffectTable table;  // point estimates with percentile intervals
  std::size_t resamples = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
  // replicates[r][e][t]; failed resamples are omitted
  std::vector<std::array<std::vector<double>, 6>> replicates;
};

// Type-7 sample quantile of already-sorted values.
double sorted_quantile(std::span<const double> sorted, double prob);

// Subject-level nonparametric bootstrap. Resample r draws its indices from
// a generator seeded by (seed, r), so serial and parallel runs agree.
BootstrapResult bootstrap_effects(const Dataset& data, const BootstrapConfig& config,
                                  const EstimatorOptions& estimator, std::span<const double> times,
                                  Execution execution = Execution::parallel);

// Attaches intervals computed from `replicates` to `table`, flagging point
// estimates that fall outside their own interval.
void attach_intervals(EffectTable& table, const std::vector<std::array<std::vector<double>, 6>>& replicates,
                      double level);

}  // namespace semicomp
