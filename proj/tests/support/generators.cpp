#include "generators.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace semicomp::testing {

namespace {

double round_up(double t, double step) { return step > 0.0 ? std::ceil(t / step) * step : t; }

}  // namespace

Dataset random_dataset(std::uint64_t seed, const RandomDataOptions& o) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution coin(0.5);

  // Per-dataset effects: covariates on each clock, l on intermediate and
  // terminal, n1 on confounder and terminal, arm on everything.
  std::vector<std::vector<double>> beta(3, std::vector<double>(o.p));
  for (auto& b : beta)
    for (auto& v : b) v = normal(rng);
  const double l_on_g = normal(rng), l_on_d = normal(rng), g_on_l = normal(rng), g_on_d = 0.5 + normal(rng);
  const double arm_effect = normal(rng);

  std::vector<SubjectRecord> rows;
  rows.reserve(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    SubjectRecord r;
    r.id = "s" + std::to_string(i + 1);
    r.z = i < 2 ? static_cast<int>(i) : (coin(rng) ? 1 : 0);
    r.x.resize(o.p);
    for (auto& v : r.x) v = o.binary_covariates ? (coin(rng) ? 1.0 : 0.0) : 3.0 * normal(rng);
    auto rate = [&](std::size_t k, double base, double extra) {
      double eta = extra + arm_effect * r.z;
      for (std::size_t j = 0; j < o.p; ++j) eta += beta[k][j] * r.x[j];
      return base * std::exp(eta);
    };
    const double censor = round_up(o.censor_horizon * (0.2 + 0.8 * unif(rng)), o.tie_step);

    // Piecewise-exponential clocks, re-drawn after each state change.
    double t = 0.0;
    int l = 0, g = 0;
    std::optional<double> l_time, g_time;
    bool died = false;
    while (true) {
      const double hc = l == 0 && o.confounder_rate > 0.0 ? rate(0, o.confounder_rate, g_on_l * g) : 0.0;
      const double hg = g == 0 ? rate(1, o.intermediate_rate, l_on_g * l) : 0.0;
      const double hd = rate(2, o.terminal_rate, l_on_d * l + g_on_d * g);
      const double total = hc + hg + hd;
      const double next = t + expo(rng) / total;
      const double stamped = round_up(next, o.tie_step);
      if (stamped > censor) break;
      const double u = unif(rng) * total;
      t = next;
      if (u < hc) {
        l = 1;
        l_time = stamped;
      } else if (u < hc + hg) {
        g = 1;
        g_time = stamped;
      } else {
        died = true;
        r.t2 = stamped;
        break;
      }
    }
    if (!died) r.t2 = censor;
    r.delta2 = died;
    r.delta1 = g_time.has_value();
    r.t1 = g_time ? *g_time : r.t2;
    r.l_time = l_time;
    rows.push_back(std::move(r));
  }
  return build_dataset(std::move(rows), {}, o.tie_order);
}

RandomDataOptions random_options(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(120, 400), cov(0, 4), pick(0, 3);
  std::uniform_real_distribution<double> rate(0.02, 0.12);
  RandomDataOptions o;
  o.n = static_cast<std::size_t>(size(rng));
  o.p = static_cast<std::size_t>(cov(rng));
  o.binary_covariates = pick(rng) == 0;
  o.confounder_rate = pick(rng) == 0 ? 0.0 : rate(rng);
  o.intermediate_rate = rate(rng);
  o.terminal_rate = rate(rng);
  o.tie_step = pick(rng) == 0 ? 0.5 : 0.0;
  o.tie_order = pick(rng) == 0 ? TieOrder::intermediate_first : TieOrder::confounder_first;
  return o;
}

}  // namespace semicomp::testing
