#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "semicomp/cox_npmle.hpp"
#include "semicomp/simulation.hpp"

using namespace semicomp;

namespace {

SubjectRecord death(std::string id, double t, bool event, std::vector<double> x = {}) {
  SubjectRecord r;
  r.id = std::move(id);
  r.x = std::move(x);
  r.t1 = r.t2 = t;
  r.delta2 = event;
  return r;
}

Dataset with_arm1(std::vector<SubjectRecord> rows) {
  SubjectRecord other = death("arm1", 1.0, false, rows.front().x);
  other.z = 1;
  rows.push_back(other);
  return build_dataset(std::move(rows));
}

bool bitwise_equal(const MultistateFit& a, const MultistateFit& b) {
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      const auto& x = a.at(z, kind);
      const auto& y = b.at(z, kind);
      if (x.beta() != y.beta() || x.baseline().times() != y.baseline().times() ||
          x.baseline().cumulative() != y.baseline().cumulative() || x.loglik != y.loglik)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("single event at beta = 0 contributes -log of the risk set size") {
  // Five subjects at risk at t = 1, one dies then.
  std::vector<SubjectRecord> rows;
  rows.push_back(death("a", 1.0, true, {0.3}));
  for (int i = 0; i < 4; ++i) rows.push_back(death("c" + std::to_string(i), 2.0 + i, false, {0.1 * i}));
  const Dataset d = with_arm1(rows);
  const PartialLikelihood pl = partial_loglik(d, 0, TransitionKind::terminal, Eigen::VectorXd::Zero(3));
  CHECK(pl.loglik == doctest::Approx(-std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("score and hessian match finite differences") {
  const Dataset d = testing::random_dataset(11, {.n = 150, .p = 2});
  Eigen::VectorXd beta(3);
  beta << 0.2, -0.1, 0.3;
  CHECK_THROWS_AS(partial_loglik(d, 1, TransitionKind::intermediate, Eigen::VectorXd::Zero(4)), Error);
  const PartialLikelihood pl = partial_loglik(d, 1, TransitionKind::intermediate, beta);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    Eigen::VectorXd up = beta, down = beta;
    up[j] += h;
    down[j] -= h;
    const PartialLikelihood a = partial_loglik(d, 1, TransitionKind::intermediate, up);
    const PartialLikelihood b = partial_loglik(d, 1, TransitionKind::intermediate, down);
    CHECK(pl.score[j] == doctest::Approx((a.loglik - b.loglik) / (2 * h)).epsilon(1e-5));
    for (Eigen::Index k = 0; k < beta.size(); ++k)
      CHECK(pl.hessian(j, k) == doctest::Approx((a.score[k] - b.score[k]) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("permuting subjects leaves the log-likelihood unchanged") {
  const Dataset d = testing::random_dataset(12, {.n = 200, .p = 3});
  std::vector<SubjectRecord> rows = d.subjects();
  std::mt19937_64 rng(3);
  std::shuffle(rows.begin(), rows.end(), rng);
  const Dataset shuffled = build_dataset(rows, d.covariate_names());
  for (TransitionKind kind : kAllKinds) {
    const TransitionModelFit a = fit_transition(d, 0, kind);
    const TransitionModelFit b = fit_transition(shuffled, 0, kind);
    CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-12));
    for (Eigen::Index j = 0; j < a.beta().size(); ++j) CHECK(a.beta()[j] == doctest::Approx(b.beta()[j]).epsilon(1e-6));
  }
}

TEST_CASE("scaling a covariate rescales its coefficient only") {
  const Dataset d = testing::random_dataset(13, {.n = 250, .p = 2});
  std::vector<SubjectRecord> rows = d.subjects();
  for (auto& r : rows) r.x[0] *= 2.0;
  const Dataset doubled = build_dataset(rows, d.covariate_names());
  const TransitionModelFit a = fit_transition(d, 1, TransitionKind::terminal);
  const TransitionModelFit b = fit_transition(doubled, 1, TransitionKind::terminal);
  CHECK(b.loglik == doctest::Approx(a.loglik).epsilon(1e-10));
  CHECK(b.beta()[0] == doctest::Approx(a.beta()[0] / 2.0).epsilon(1e-7));
  CHECK(b.beta()[1] == doctest::Approx(a.beta()[1]).epsilon(1e-7));
  CHECK(b.baseline()(10.0) == doctest::Approx(a.baseline()(10.0)).epsilon(1e-7));
}

TEST_CASE("Breslow baseline without covariates is Nelson-Aalen") {
  // Deaths at 1, 2, 2, 4 among six subjects; two censored at 3 and 5.
  std::vector<SubjectRecord> rows{death("a", 1, true), death("b", 2, true), death("c", 2, true),
                                  death("d", 3, false), death("e", 4, true), death("f", 5, false)};
  const Dataset d = with_arm1(rows);
  FitOptions o;
  o.state_terms = false;
  const TransitionModelFit fit = fit_transition(d, 0, TransitionKind::terminal, o);
  CHECK(fit.baseline().times() == std::vector<double>{1, 2, 4});
  const double na[] = {1.0 / 6, 1.0 / 6 + 2.0 / 5, 1.0 / 6 + 2.0 / 5 + 1.0 / 2};
  for (int k = 0; k < 3; ++k) CHECK(fit.baseline().cumulative()[static_cast<std::size_t>(k)] == na[k]);
  CHECK(fit.baseline()(3.5) == na[1]);
  CHECK(fit.baseline()(0.5) == 0.0);
}

TEST_CASE("Newton iterations never decrease the profile log-likelihood") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto o = testing::random_options(rng);
    const MultistateFit fit = fit_multistate(testing::random_dataset(rng(), o));
    for (int z = 0; z < 2; ++z) {
      for (TransitionKind kind : kAllKinds) {
        const auto& trace = fit.at(z, kind).loglik_trace;
        for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] >= trace[k - 1]);
      }
    }
  }
}

TEST_CASE("DGP coefficients are recovered within Monte-Carlo error") {
  // Intermediate model in arm 1 and the n1 effect on death.
  const std::size_t reps = 40;
  std::vector<Eigen::VectorXd> inter, term;
  for (std::size_t r = 0; r < reps; ++r) {
    const MultistateFit fit = fit_multistate(simulate_dataset(DgpSpec::setting(1, 1000, 500 + r)));
    inter.push_back(fit.at(1, TransitionKind::intermediate).beta());
    term.push_back(fit.at(0, TransitionKind::terminal).beta());
  }
  auto within = [&](const std::vector<Eigen::VectorXd>& draws, Eigen::Index j, double truth) {
    double mean = 0.0, sq = 0.0;
    for (const auto& b : draws) mean += b[j];
    mean /= static_cast<double>(reps);
    for (const auto& b : draws) sq += (b[j] - mean) * (b[j] - mean);
    const double se = std::sqrt(sq / static_cast<double>(reps - 1) / static_cast<double>(reps));
    CHECK_MESSAGE(std::abs(mean - truth) <= 3.0 * se, "coef ", j, " mean ", mean, " truth ", truth, " se ", se);
  };
  const double truth[] = {0.2, -0.2, -0.2, -0.3};
  for (Eigen::Index j = 0; j < 4; ++j) within(inter, j, truth[j]);
  within(term, 4, 0.5);
}

TEST_CASE("six fits converge on a DGP sample and refits are bitwise identical") {
  const Dataset d = simulate_dataset(DgpSpec::setting(1, 1000, 8));
  const MultistateFit a = fit_multistate(d);
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      CHECK(a.at(z, kind).score_norm < 1e-6);
      CHECK(a.at(z, kind).arm == z);
    }
  }
  CHECK(bitwise_equal(a, fit_multistate(d)));
  CHECK(bitwise_equal(a, fit_multistate(d, {}, Execution::serial)));
}

TEST_CASE("empty arm is reported by number") {
  std::vector<SubjectRecord> rows{death("a", 1, true, {0.0}), death("b", 2, false, {1.0})};
  const Dataset d = build_dataset(rows);
  try {
    fit_multistate(d);
    FAIL("fit an empty arm");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("arm 1") != std::string::npos);
  }
}

TEST_CASE("transition without events has a zero baseline and a warning") {
  std::vector<SubjectRecord> rows{death("a", 1, false, {0.2}), death("b", 2, false, {1.0}), death("c", 3, true, {0.5})};
  const Dataset d = with_arm1(rows);
  const TransitionModelFit fit = fit_transition(d, 0, TransitionKind::confounder);
  CHECK(fit.baseline().empty());
  CHECK(fit.baseline()(10.0) == 0.0);
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("separated data are flagged") {
  // Every death has x = 1 and every survivor x = 0.
  std::vector<SubjectRecord> rows;
  for (int i = 0; i < 6; ++i) rows.push_back(death("d" + std::to_string(i), 1.0 + i, true, {1.0}));
  for (int i = 0; i < 6; ++i) rows.push_back(death("s" + std::to_string(i), 10.0 + i, false, {0.0}));
  const Dataset d = with_arm1(rows);
  FitOptions o;
  o.state_terms = false;
  const TransitionModelFit fit = fit_transition(d, 0, TransitionKind::terminal, o);
  bool flagged = false;
  for (const auto& w : fit.warnings) flagged = flagged || w.find("separation") != std::string::npos;
  CHECK(flagged);

  o.max_iterations = 3;
  try {
    fit_transition(d, 0, TransitionKind::terminal, o);
    FAIL("three iterations were enough");
  } catch (const ConvergenceError& e) {
    CHECK(e.category() == ErrorCategory::convergence);
    CHECK(e.last_beta().size() == 3);
    CHECK(e.last_beta()[0] > 1.0);
    CHECK(e.gradient_norm() > 0.0);
  }
}

TEST_CASE("short follow-up in one arm is reported") {
  std::vector<SubjectRecord> rows{death("a", 1, true), death("b", 2, false), death("c", 3, true)};
  for (int i = 0; i < 3; ++i) {
    SubjectRecord r = death("t" + std::to_string(i), 4.0 + 2.0 * i, true);
    r.z = 1;
    rows.push_back(r);
  }
  const MultistateFit fit = fit_multistate(build_dataset(rows));
  const auto& w0 = fit.at(0, TransitionKind::terminal).warnings;
  bool found = false;
  for (const auto& w : w0) found = found || w.find("risk set empties at t = 3") != std::string::npos;
  CHECK(found);
  for (const auto& w : fit.at(1, TransitionKind::terminal).warnings) CHECK(w.find("risk set") == std::string::npos);
}
