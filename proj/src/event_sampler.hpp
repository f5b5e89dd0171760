#pragma once

#include <cmath>
#include <optional>
#include <random>

#include "semicomp/simulation.hpp"

namespace semicomp {

// Hazards of one subject in one world, already multiplied by exp(linear
// predictor). confounder[g], intermediate[l], terminal[l][g].
struct ArmHazards {
  LinearHazard confounder[2];
  LinearHazard intermediate[2];
  LinearHazard terminal[2][2];
};

struct FactualPath {
  std::optional<double> l_time;
  std::optional<double> g_time;
  double exit = 0.0;
  bool died = false;
};

// Gap u solving (a + c t) u + c u^2 / 2 = e.
inline double linear_gap(double a, double c, double t, double e) {
  const double rate = a + c * t;
  const double root = std::sqrt(rate * rate + 2.0 * c * e);
  if (rate + root <= 0.0) return INFINITY;
  return 2.0 * e / (rate + root);
}

// Competing linear hazards until death or `end`. With `scheduled_g` the
// intermediate event happens at that time regardless of the intermediate
// hazards.
inline FactualPath simulate_factual(const ArmHazards& h, double end, std::mt19937_64& rng,
                                    std::optional<double> scheduled_g = std::nullopt) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  FactualPath path;
  double t = 0.0;
  int l = 0, g = 0;
  for (;;) {
    LinearHazard total{0.0, 0.0};
    const LinearHazard* conf = l == 0 ? &h.confounder[g] : nullptr;
    const LinearHazard* inter = g == 0 && !scheduled_g ? &h.intermediate[l] : nullptr;
    const LinearHazard& term = h.terminal[l][g];
    for (const LinearHazard* q : {conf, inter, &term}) {
      if (q) {
        total.a += q->a;
        total.c += q->c;
      }
    }
    double next = t + linear_gap(total.a, total.c, t, expo(rng));
    const double limit = g == 0 && scheduled_g && *scheduled_g < end ? *scheduled_g : end;
    if (!(next < limit)) {
      if (limit < end) {
        t = limit;
        g = 1;
        path.g_time = t;
        continue;
      }
      path.exit = end;
      return path;
    }
    t = next;
    double pick = unif(rng) * total(t);
    if (conf) {
      pick -= (*conf)(t);
      if (pick < 0.0) {
        l = 1;
        path.l_time = t;
        continue;
      }
    }
    if (inter) {
      pick -= (*inter)(t);
      if (pick < 0.0) {
        g = 1;
        path.g_time = t;
        continue;
      }
    }
    path.exit = t;
    path.died = true;
    return path;
  }
}

}  // namespace semicomp
