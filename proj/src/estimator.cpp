#include "semicomp/estimator.hpp"

namespace semicomp {

std::string_view to_string(EstimatorVariant variant) noexcept {
  return variant == EstimatorVariant::npmle ? "npmle" : "frailty";
}

EstimatorVariant parse_variant(std::string_view text) {
  if (text == "npmle") return EstimatorVariant::npmle;
  if (text == "frailty") return EstimatorVariant::frailty;
  throw Error(ErrorCategory::config, "unknown estimator variant '" + std::string(text) + "'");
}

MultistateFit fit_estimator(const Dataset& data, const EstimatorOptions& options, Execution execution) {
  if (options.variant == EstimatorVariant::npmle) return fit_multistate(data, options.cox, execution);
  FrailtySpec spec = options.frailty;
  spec.cox = options.cox;
  return fit_frailty(data, spec, execution).fit;
}

EffectTable estimate_effects(const Dataset& data, std::span<const double> times,
                             const EstimatorOptions& options, Execution execution) {
  const MultistateFit fit = fit_estimator(data, options, execution);
  CifOptions cif = options.cif;
  cif.execution = execution;
  return effect_table(fit.model(), data, times, cif);
}

}  // namespace semicomp
