#pragma once

#include <string_view>

#include "semicomp/cif_engine.hpp"
#include "semicomp/cox_npmle.hpp"
#include "semicomp/frailty_em.hpp"

namespace semicomp {

// npmle assumes no unmeasured confounding; frailty adds the shared
// random effect and fits it by EM.
enum class EstimatorVariant { npmle, frailty };

std::string_view to_string(EstimatorVariant variant) noexcept;
EstimatorVariant parse_variant(std::string_view text);

struct EstimatorOptions {
  EstimatorVariant variant = EstimatorVariant::npmle;
  FitOptions cox;
  FrailtySpec frailty;
  CifOptions cif;
};

MultistateFit fit_estimator(const Dataset& data, const EstimatorOptions& options,
                            Execution execution = Execution::parallel);

// Fit, then evaluate all six effects at `times` over the dataset's
// empirical covariate distribution.
EffectTable estimate_effects(const Dataset& data, std::span<const double> times,
                             const EstimatorOptions& options, Execution execution = Execution::parallel);

}  // namespace semicomp
