#include "direct_oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "semicomp/quadrature.hpp"

namespace semicomp::testing {

namespace {

struct Hazard {
  double a, c;  // (a + c t) * m
  double at(double t) const { return a + c * t; }
  double cum(double t) const { return a * t + 0.5 * c * t * t; }
};

Hazard make(const LinearHazard& base, const std::vector<double>& beta, std::span<const double> x, double extra) {
  double eta = extra;
  for (std::size_t j = 0; j < x.size(); ++j) eta += beta[j] * x[j];
  const double m = std::exp(eta);
  return {base.a * m, base.c * m};
}

// Hazards of one arm for covariates x: confounder given n1, intermediate
// given l, terminal given (l, n1).
struct ArmRates {
  Hazard conf[2];
  Hazard inter[2];
  Hazard term[2][2];
};

ArmRates rates(const DgpSpec& spec, int z, std::span<const double> x, double u) {
  const auto& base = spec.baseline[static_cast<std::size_t>(z)];
  const std::size_t p = x.size();
  ArmRates r{};
  for (int s = 0; s < 2; ++s) {
    r.conf[s] = make(base[0], spec.beta[0], x, u + spec.beta[0][p] * s);
    r.inter[s] = make(base[1], spec.beta[1], x, u + spec.beta[1][p] * s);
  }
  for (int l = 0; l < 2; ++l)
    for (int g = 0; g < 2; ++g)
      r.term[l][g] = make(base[2], spec.beta[2], x, u + spec.beta[2][p] * l + spec.beta[2][p + 1] * g);
  return r;
}

// Running trapezoid integral of samples f on a uniform grid with step h.
std::vector<double> cumtrapz(const std::vector<double>& f, double h) {
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t k = 1; k < f.size(); ++k) out[k] = out[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
  return out;
}

double interpolate(const std::vector<double>& f, double h, double t) {
  const double pos = t / h;
  const std::size_t k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= f.size()) return f.back();
  const double w = pos - static_cast<double>(k);
  return (1.0 - w) * f[k] + w * f[k + 1];
}

}  // namespace

std::vector<double> direct_counterfactual_cif(const DgpSpec& spec, int z1, int z2, std::span<const double> x,
                                              DrawMode mode, std::span<const double> times, std::size_t grid,
                                              double b) {
  if (times.empty()) return {};
  if (mode == DrawMode::natural) {
    if (z1 != z2) throw std::invalid_argument("natural mode needs z1 == z2");
    mode = DrawMode::conditional;
  }
  double horizon = 0.0;
  for (double t : times) horizon = std::max(horizon, t);
  const double h = horizon / static_cast<double>(grid);
  const std::size_t n = grid + 1;
  const double u = spec.frailty_sd * b;
  const ArmRates w = rates(spec, z2, x, u);   // world arm
  const ArmRates d = rates(spec, z1, x, u);   // draw arm

  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) s[k] = h * static_cast<double>(k);

  // Drawn intermediate hazard g_l(s) for l = 0, 1.
  std::vector<double> g0(n), g1(n);
  if (mode == DrawMode::conditional) {
    for (std::size_t k = 0; k < n; ++k) {
      g0[k] = d.inter[0].at(s[k]);
      g1[k] = d.inter[1].at(s[k]);
    }
  } else {
    // Factual arm-z1 event-free occupation with l = 0 and l = 1.
    std::vector<double> q00(n), e1(n), integrand(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = s[k];
      q00[k] = std::exp(-(d.conf[0].cum(t) + d.term[0][0].cum(t) + d.inter[0].cum(t)));
      e1[k] = std::exp(-(d.term[1][0].cum(t) + d.inter[1].cum(t)));
      integrand[k] = q00[k] * d.conf[0].at(t) / e1[k];
    }
    const std::vector<double> acc = cumtrapz(integrand, h);
    for (std::size_t k = 0; k < n; ++k) {
      const double q01 = e1[k] * acc[k];
      const double t = s[k];
      g0[k] = g1[k] = (q00[k] * d.inter[0].at(t) + q01 * d.inter[1].at(t)) / (q00[k] + q01);
    }
  }
  const std::vector<double> cg0 = cumtrapz(g0, h), cg1 = cumtrapz(g1, h);

  // Pre-draw world occupation P00 (l = 0) and P01 (l = 1).
  std::vector<double> p00(n), p01(n);
  {
    std::vector<double> e1(n), integrand(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = s[k];
      p00[k] = std::exp(-(w.conf[0].cum(t) + w.term[0][0].cum(t) + cg0[k]));
      e1[k] = std::exp(-(w.term[1][0].cum(t) + cg1[k]));
      integrand[k] = p00[k] * w.conf[0].at(t) / e1[k];
    }
    const std::vector<double> acc = cumtrapz(integrand, h);
    for (std::size_t k = 0; k < n; ++k) p01[k] = e1[k] * acc[k];
  }

  // Post-draw survival factors: K0 (l = 0, leaving by confounder or death),
  // D1 (l = 1, death only), J = int K0 c1 / D1.
  std::vector<double> k0(n), d1(n), jf(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = s[k];
    k0[k] = std::exp(-(w.conf[1].cum(t) + w.term[0][1].cum(t)));
    d1[k] = std::exp(-w.term[1][1].cum(t));
    jf[k] = k0[k] * w.conf[1].at(t) / d1[k];
  }
  const std::vector<double> jc = cumtrapz(jf, h);

  std::vector<double> death_first(n), drawn(n), a_f(n), b_f(n), c_f(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = s[k];
    death_first[k] = p00[k] * w.term[0][0].at(t) + p01[k] * w.term[1][0].at(t);
    drawn[k] = p00[k] * g0[k] + p01[k] * g1[k];
    a_f[k] = p00[k] * g0[k] / k0[k];
    b_f[k] = a_f[k] * jc[k];
    c_f[k] = p01[k] * g1[k] / d1[k];
  }
  const std::vector<double> t1 = cumtrapz(death_first, h), t2 = cumtrapz(drawn, h);
  const std::vector<double> ca = cumtrapz(a_f, h), cb = cumtrapz(b_f, h), cc = cumtrapz(c_f, h);
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t3 = k0[k] * ca[k] + d1[k] * (jc[k] * ca[k] - cb[k]) + d1[k] * cc[k];
    f[k] = t1[k] + t2[k] - t3;
  }
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(interpolate(f, h, t));
  return out;
}

std::vector<double> direct_population_cif(const DgpSpec& spec, int z1, int z2, DrawMode mode,
                                          std::span<const double> times, std::size_t grid) {
  const std::size_t p = spec.covariate_count();
  std::vector<std::vector<double>> patterns;
  std::vector<double> pattern_weight;
  if (spec.zero_covariates) {
    patterns.emplace_back(p, 0.0);
    pattern_weight.push_back(1.0);
  } else {
    const double pr = spec.covariate_probability;
    for (unsigned m = 0; m < (1u << p); ++m) {
      std::vector<double> x(p);
      double wt = 1.0;
      for (std::size_t j = 0; j < p; ++j) {
        x[j] = (m >> j) & 1u ? 1.0 : 0.0;
        wt *= x[j] > 0.0 ? pr : 1.0 - pr;
      }
      patterns.push_back(std::move(x));
      pattern_weight.push_back(wt);
    }
  }
  NormalQuadrature q;
  if (spec.frailty_sd > 0.0) {
    q = gauss_hermite(60);
  } else {
    q.nodes = {0.0};
    q.weights = {1.0};
  }
  std::vector<double> out(times.size(), 0.0);
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const auto& x = patterns[i];
    const double pw = pattern_weight[i];
    for (std::size_t j = 0; j < q.size(); ++j) {
      const auto v = direct_counterfactual_cif(spec, z1, z2, x, mode, times, grid, q.nodes[j]);
      for (std::size_t k = 0; k < v.size(); ++k) out[k] += pw * q.weights[j] * v[k];
    }
  }
  return out;
}

}  // namespace semicomp::testing
