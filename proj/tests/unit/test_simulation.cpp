#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "semicomp/estimator.hpp"
#include "semicomp/simulation.hpp"

using namespace semicomp;

namespace {

bool same_data(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.z != y.z || x.x != y.x || x.l_time != y.l_time || x.t1 != y.t1 || x.delta1 != y.delta1 || x.t2 != y.t2 ||
        x.delta2 != y.delta2)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("propensity at x = 0") {
  const DgpSpec spec = DgpSpec::setting(1);
  const std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK(spec.propensity(zero) == doctest::Approx(1.0 / (1.0 + std::exp(0.5))).epsilon(1e-15));
  CHECK(spec.propensity(zero) == doctest::Approx(0.3775).epsilon(1e-4));
  CHECK(spec.covariate_count() == 3);
}

TEST_CASE("censoring hazard inverts its cumulative") {
  const DgpSpec spec = DgpSpec::setting(1);
  const std::vector<double> x{1.0, 0.0, 1.0};
  for (int z = 0; z < 2; ++z) {
    for (double e : {0.01, 0.3, 1.0, 4.0}) {
      const double t = spec.censoring[static_cast<std::size_t>(z)].invert(e, x);
      CHECK(spec.censoring[static_cast<std::size_t>(z)].cumulative(t, x) == doctest::Approx(e).epsilon(1e-12));
    }
  }
}

TEST_CASE("seeded datasets are bitwise reproducible") {
  const DgpSpec spec = DgpSpec::setting(2, 500, 42);
  CHECK(same_data(simulate_dataset(spec), simulate_dataset(spec)));
  DgpSpec other = spec;
  other.seed = 43;
  CHECK_FALSE(same_data(simulate_dataset(spec), simulate_dataset(other)));
  CHECK(same_data(hct_like_dataset(5), hct_like_dataset(5)));
}

TEST_CASE("intermediate intensity at l = 0 matches its closed form") {
  // Nelson-Aalen over time spent event-free with l = 0.
  for (int z = 0; z < 2; ++z) {
    DgpSpec spec = DgpSpec::setting(1, 40000, 90 + static_cast<std::uint64_t>(z));
    spec.censor = false;
    spec.zero_covariates = true;
    spec.force_arm = z;
    const Dataset d = simulate_dataset(spec);
    struct Mark {
      double exit;
      bool event;
    };
    std::vector<Mark> marks;
    for (const auto& r : d.subjects()) {
      const double g = r.delta1 ? r.t1 : kNever;
      const double l = r.l_time ? *r.l_time : kNever;
      const double leave = std::min({g, l, r.t2});
      marks.push_back({leave, r.delta1 && g <= l && g <= r.t2 && !(r.l_time && l == g)});
    }
    std::sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.exit < b.exit; });
    const LinearHazard h = spec.baseline[static_cast<std::size_t>(z)][1];
    double cum = 0.0, var = 0.0;
    std::size_t i = 0;
    for (double t : {2.0, 4.0, 6.0, 8.0, 10.0}) {
      for (; i < marks.size() && marks[i].exit <= t; ++i) {
        if (!marks[i].event) continue;
        const double y = static_cast<double>(marks.size() - i);
        cum += 1.0 / y;
        var += 1.0 / (y * y);
      }
      CHECK_MESSAGE(std::abs(cum - h.integral(0.0, t)) <= 3.0 * std::sqrt(var), "arm ", z, " t ", t);
    }
  }
}

TEST_CASE("true values") {
  const DgpSpec one = DgpSpec::setting(1);
  const std::vector<double> times{0.0, 4.0, 10.0};
  TrueValueOptions o;
  o.grid = 1000;
  const EffectTable t1 = true_values(one, times, o);
  for (Estimand e : kAllEstimands) CHECK(t1[e][0] == 0.0);

  DgpSpec two = DgpSpec::setting(2);
  two.frailty_sd = 0.0;
  const EffectTable t2 = true_values(two, times, o);
  CHECK(t2.estimates == t1.estimates);

  const EffectTable frail = true_values(DgpSpec::setting(2), times, o);
  CHECK(frail[Estimand::TE][2] != t1[Estimand::TE][2]);
}

TEST_CASE("Monte-Carlo oracle") {
  const DgpSpec spec = DgpSpec::setting(1);
  const std::vector<double> t6{6.0};

  SUBCASE("frozen regression anchors at t = 6 for (1, 0)") {
    McOracleOptions o;
    o.paths = 200000;
    o.seed = 2026;
    const McOracleResult m = mc_counterfactual_oracle(spec, 1, 0, DrawMode::marginal, t6, o);
    CHECK(m.cif[0] == doctest::Approx(0.42882).epsilon(1e-12));
    const McOracleResult c = mc_counterfactual_oracle(spec, 1, 0, DrawMode::conditional, t6, o);
    CHECK(c.cif[0] == doctest::Approx(0.42764).epsilon(1e-12));
    o.execution = Execution::serial;
    CHECK(mc_counterfactual_oracle(spec, 1, 0, DrawMode::marginal, t6, o).cif == m.cif);
  }

  SUBCASE("zero terminal hazards") {
    DgpSpec quiet = spec;
    for (auto& arm : quiet.baseline) arm[2] = {0.0, 0.0};
    McOracleOptions o;
    o.paths = 20000;
    const McOracleResult r = mc_counterfactual_oracle(quiet, 0, 1, DrawMode::conditional, t6, o);
    CHECK(r.cif[0] == 0.0);
  }

  SUBCASE("natural draw matches the factual death fraction") {
    for (int z = 0; z < 2; ++z) {
      DgpSpec factual = DgpSpec::setting(1, 200000, 700 + static_cast<std::uint64_t>(z));
      factual.censor = false;
      factual.force_arm = z;
      const Dataset d = simulate_dataset(factual);
      double dead = 0.0;
      for (const auto& r : d.subjects()) dead += r.delta2 && r.t2 <= 6.0 ? 1.0 : 0.0;
      const double p = dead / static_cast<double>(d.size());
      const double se_f = std::sqrt(p * (1 - p) / static_cast<double>(d.size()));
      McOracleOptions o;
      o.paths = 200000;
      const McOracleResult r = mc_counterfactual_oracle(spec, z, z, DrawMode::natural, t6, o);
      CHECK(std::abs(r.cif[0] - p) <= 3.0 * std::hypot(se_f, r.se[0]));
    }
  }

  SUBCASE("marginal draw with frailty is refused") {
    McOracleOptions o;
    o.paths = 1000;
    CHECK_THROWS_AS(mc_counterfactual_oracle(DgpSpec::setting(2), 1, 0, DrawMode::marginal, t6, o), Error);
  }
}

TEST_CASE("replication study with one replication reports bias only") {
  ReplicationOptions o;
  o.replications = 1;
  o.truth.grid = 1000;
  const DgpSpec spec = DgpSpec::setting(1, 500, 3);
  const ReplicationReport r = replication_study(spec, 1, o);
  CHECK(r.successes() == 1);
  CHECK_FALSE(r.sd.has_value());
  DgpSpec first = spec;
  first.seed = derived_seed(spec.seed, 0);
  const MultistateFit fit = fit_estimator(simulate_dataset(first), o.estimator);
  const EffectTable single = effect_analysis(fit.model(), dgp_covariates(spec), o.times, o.estimator.cif).effects;
  for (Estimand e : kAllEstimands) {
    const auto ei = static_cast<std::size_t>(e);
    for (std::size_t k = 0; k < o.times.size(); ++k)
      CHECK(r.bias[ei][k] == doctest::Approx(single[e][k] - r.truth[e][k]).epsilon(1e-12));
  }
}

TEST_CASE("frailty replication study is reproducible") {
  ReplicationOptions o;
  o.replications = 2;
  o.estimator.variant = EstimatorVariant::frailty;
  o.truth.grid = 500;
  o.truth.frailty_nodes = 20;
  const DgpSpec spec = DgpSpec::setting(2, 300, 12);
  const ReplicationReport a = replication_study(spec, 2, o);
  const ReplicationReport b = replication_study(spec, 2, o);
  CHECK(a.bias == b.bias);
  CHECK(a.alpha_estimates == b.alpha_estimates);
  CHECK(a.sd.has_value());
}

TEST_CASE("derived seeds differ across indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(derived_seed(1, r));
  CHECK(seen.size() == 1000);
  CHECK(derived_seed(1, 5) == derived_seed(1, 5));
  CHECK(derived_seed(1, 5) != derived_seed(2, 5));
}

TEST_CASE("HCT-shaped data") {
  const Dataset d = hct_like_dataset();
  double max_t = 0.0;
  for (const auto& r : d.subjects()) max_t = std::max(max_t, r.t2);
  CHECK(max_t <= 123.0);
  std::size_t gvhd = 0, relapse = 0, deaths = 0;
  for (const auto& r : d.subjects()) {
    gvhd += r.l_time ? 1 : 0;
    relapse += r.delta1 ? 1 : 0;
    deaths += r.delta2 ? 1 : 0;
  }
  CHECK(gvhd > 30);
  CHECK(relapse > 30);
  CHECK(deaths > 100);
}
