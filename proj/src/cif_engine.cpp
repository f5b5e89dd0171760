#include "semicomp/cif_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace semicomp {

std::string_view to_string(DrawMode mode) noexcept {
  switch (mode) {
    case DrawMode::natural: return "natural";
    case DrawMode::marginal: return "marginal";
    case DrawMode::conditional: return "conditional";
  }
  return "unknown";
}

DrawMode parse_draw_mode(std::string_view text) {
  if (text == "natural") return DrawMode::natural;
  if (text == "marginal") return DrawMode::marginal;
  if (text == "conditional") return DrawMode::conditional;
  throw Error(ErrorCategory::config, "unknown draw mode '" + std::string(text) + "'");
}

std::string_view to_string(Estimand e) noexcept {
  switch (e) {
    case Estimand::TE: return "TE";
    case Estimand::OE: return "OE";
    case Estimand::IDE: return "IDE";
    case Estimand::IIE: return "IIE";
    case Estimand::DCE: return "DCE";
    case Estimand::ICE: return "ICE";
  }
  return "unknown";
}

std::optional<Estimand> parse_estimand(std::string_view text) {
  for (Estimand e : kAllEstimands) {
    if (to_string(e) == text) return e;
  }
  return std::nullopt;
}

double CifCurve::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

std::string CifCurve::label() const {
  std::string out = "cif_" + std::string(to_string(mode)) + "_";
  if (mode == DrawMode::natural) return out + std::to_string(z2);
  return out + std::to_string(z1) + "_" + std::to_string(z2);
}

CifEngine::CifEngine(MultistateModel model) : model_(std::move(model)) {
  for (const ArmModel& arm : model_.arms) {
    for (TransitionKind kind : kAllKinds) {
      const TransitionModel& tm = arm[kind];
      if (static_cast<std::size_t>(tm.beta.size()) != model_.p + state_columns(kind)) {
        throw Error(ErrorCategory::config, "CifEngine: coefficient vector has the wrong length for the " +
                                               std::string(to_string(kind)) + " transition");
      }
      grid_.insert(grid_.end(), tm.baseline.times().begin(), tm.baseline.times().end());
    }
  }
  std::sort(grid_.begin(), grid_.end());
  grid_.erase(std::unique(grid_.begin(), grid_.end()), grid_.end());

  for (std::size_t z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      const StepFunction& f = model_.arms[z][kind].baseline;
      auto& inc = increments_[z][static_cast<std::size_t>(kind)];
      inc.assign(grid_.size(), 0.0);
      std::size_t j = 0;
      double previous = 0.0;
      for (std::size_t k = 0; k < grid_.size(); ++k) {
        double current = previous;
        while (j < f.size() && f.times()[j] <= grid_[k]) current = f.cumulative()[j++];
        inc[k] = current - previous;
        previous = current;
      }
    }
  }
}

namespace {

struct ArmRates {
  double confounder[2];      // by intermediate status g
  double intermediate[2];    // by confounder status l
  double terminal[2][2];     // [g][l]
};

ArmRates rates(const ArmModel& arm, std::span<const double> x, double b) {
  ArmRates r{};
  const double frailty = arm.alpha * b;
  for (int s = 0; s < 2; ++s) {
    r.confounder[s] = std::exp(arm.confounder.linear_predictor(x, 0, s) + frailty);
    r.intermediate[s] = std::exp(arm.intermediate.linear_predictor(x, s, 0) + frailty);
  }
  for (int g = 0; g < 2; ++g) {
    for (int l = 0; l < 2; ++l) r.terminal[g][l] = std::exp(arm.terminal.linear_predictor(x, l, g) + frailty);
  }
  return r;
}

inline double clamp_probability(double v) { return v < 1.0 ? v : 1.0; }

}  // namespace

std::vector<double> CifEngine::marginal_draw_hazard(int z1, std::span<const double> x, double b,
                                                    std::vector<std::string>* warnings) const {
  const auto za = static_cast<std::size_t>(z1);
  const ArmRates r = rates(model_.arms[za], x, b);
  const auto& dq = increments_[za][0];
  const auto& dd = increments_[za][1];
  const auto& dt = increments_[za][2];
  const bool confounder_first = model_.tie_order == TieOrder::confounder_first;

  std::vector<double> hazard(grid_.size(), 0.0);
  double f0 = 1.0, f1 = 0.0;  // event-free mass with l = 0 / 1
  double share = 0.0;         // f1 / (f0 + f1), held once the mass vanishes
  bool vanished = false;
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    const double q = clamp_probability(dq[k] * r.confounder[0]);
    if (confounder_first) {
      const double move = f0 * q;
      f0 -= move;
      f1 += move;
    }
    const double total = f0 + f1;
    if (total > 0.0) {
      share = f1 == 0.0 ? 0.0 : f1 / total;
    } else if (!vanished) {
      vanished = true;
      if (warnings) {
        warnings->push_back("event-free mass vanished at t = " + std::to_string(grid_[k]) +
                            "; drawn hazard keeps the last confounder mix");
      }
    }
    const double p0 = clamp_probability(dd[k] * r.intermediate[0]);
    const double p1 = clamp_probability(dd[k] * r.intermediate[1]);
    hazard[k] = share == 0.0 ? p0 : p0 + share * (p1 - p0);
    if (!confounder_first) {
      const double move = f0 * q;
      f0 -= move;
      f1 += move;
    }
    f0 -= f0 * p0;
    f1 -= f1 * p1;
    f0 -= f0 * clamp_probability(dt[k] * r.terminal[0][0]);
    f1 -= f1 * clamp_probability(dt[k] * r.terminal[0][1]);
  }
  return hazard;
}

void CifEngine::run(int z1, int z2, std::span<const double> x, DrawMode mode, double b,
                    const std::vector<double>* marginal_hazard, std::span<const double> times,
                    std::vector<double>& values, WorldTrace* trace) const {
  if ((z1 != 0 && z1 != 1) || (z2 != 0 && z2 != 1)) throw Error(ErrorCategory::config, "arms must be 0 or 1");
  if (mode == DrawMode::natural && z1 != z2) {
    throw Error(ErrorCategory::config, "natural mode requires z1 == z2");
  }
  if (x.size() != model_.p) throw Error(ErrorCategory::config, "covariate vector has the wrong length");

  const auto a1 = static_cast<std::size_t>(z1);
  const auto a2 = static_cast<std::size_t>(z2);
  const ArmRates draw = rates(model_.arms[a1], x, b);
  const ArmRates world = rates(model_.arms[a2], x, b);
  const auto& dq = increments_[a2][0];
  const auto& dd = increments_[a1][1];
  const auto& dt = increments_[a2][2];
  const bool confounder_first = model_.tie_order == TieOrder::confounder_first;

  std::vector<double> own_hazard;
  if (mode == DrawMode::marginal && marginal_hazard == nullptr) {
    own_hazard = marginal_draw_hazard(z1, x, b);
    marginal_hazard = &own_hazard;
  }

  double m[4] = {1.0, 0.0, 0.0, 0.0};  // alive, index 2*g + l
  double dead = 0.0;
  values.assign(times.size(), 0.0);
  std::size_t j = 0;
  if (trace) {
    trace->alive.clear();
    trace->dead.clear();
    trace->alive.reserve(grid_.size());
    trace->dead.reserve(grid_.size());
  }

  auto confounder_step = [&](std::size_t k) {
    for (int g = 0; g < 2; ++g) {
      const double move = m[2 * g] * clamp_probability(dq[k] * world.confounder[g]);
      m[2 * g] -= move;
      m[2 * g + 1] += move;
    }
  };
  auto draw_step = [&](std::size_t k) {
    for (int l = 0; l < 2; ++l) {
      const double p = mode == DrawMode::marginal ? (*marginal_hazard)[k]
                                                  : clamp_probability(dd[k] * draw.intermediate[l]);
      const double move = m[l] * p;
      m[l] -= move;
      m[2 + l] += move;
    }
  };

  for (std::size_t k = 0; k < grid_.size(); ++k) {
    while (j < times.size() && times[j] < grid_[k]) values[j++] = std::min(dead, 1.0);
    if (confounder_first) {
      confounder_step(k);
      draw_step(k);
    } else {
      draw_step(k);
      confounder_step(k);
    }
    for (int idx = 0; idx < 4; ++idx) {
      const double move = m[idx] * clamp_probability(dt[k] * world.terminal[idx / 2][idx % 2]);
      m[idx] -= move;
      dead += move;
    }
    if (trace) {
      trace->alive.push_back({m[0], m[1], m[2], m[3]});
      trace->dead.push_back(dead);
    }
  }
  while (j < times.size()) values[j++] = std::min(dead, 1.0);
}

std::vector<double> CifEngine::cif_at(int z1, int z2, std::span<const double> x, DrawMode mode, double b,
                                      std::span<const double> times,
                                      const std::vector<double>* marginal_hazard) const {
  std::vector<double> values;
  run(z1, z2, x, mode, b, marginal_hazard, times, values, nullptr);
  return values;
}

CifCurve CifEngine::counterfactual_cif(int z1, int z2, std::span<const double> x, DrawMode mode, double b,
                                       WorldTrace* trace) const {
  CifCurve curve;
  curve.z1 = z1;
  curve.z2 = z2;
  curve.mode = mode;
  curve.times.reserve(grid_.size() + 1);
  curve.times.push_back(0.0);
  curve.times.insert(curve.times.end(), grid_.begin(), grid_.end());
  std::vector<double> unused;
  WorldTrace local;
  if (trace == nullptr) trace = &local;
  run(z1, z2, x, mode, b, nullptr, {}, unused, trace);
  curve.values.reserve(grid_.size() + 1);
  curve.values.push_back(0.0);
  for (double d : trace->dead) curve.values.push_back(std::min(d, 1.0));
  return curve;
}

CovariateDistribution CovariateDistribution::from_dataset(const Dataset& data) {
  std::map<std::vector<double>, double> counts;
  for (const auto& s : data.subjects()) counts[s.x] += 1.0;
  CovariateDistribution out;
  const double n = static_cast<double>(data.size());
  for (auto& [row, count] : counts) {
    out.rows.push_back(row);
    out.weights.push_back(count / n);
  }
  return out;
}

CovariateDistribution CovariateDistribution::single(std::vector<double> x) {
  CovariateDistribution out;
  out.rows.push_back(std::move(x));
  out.weights.push_back(1.0);
  return out;
}

std::vector<CifCurve> population_cifs(const CifEngine& engine, const CovariateDistribution& covariates,
                                      std::span<const CurveRequest> requests,
                                      std::span<const double> times, const NormalQuadrature& nodes,
                                      Execution execution) {
  const std::size_t n_tasks = covariates.rows.size() * nodes.size();
  const std::size_t n_req = requests.size();
  const std::size_t n_t = times.size();
  if (!std::is_sorted(times.begin(), times.end())) {
    throw Error(ErrorCategory::config, "evaluation times must be ascending");
  }

  // Fixed chunking independent of the thread count keeps the summation order
  // identical between serial and parallel execution.
  constexpr std::size_t kChunks = 64;
  const std::size_t chunks = std::min(kChunks, std::max<std::size_t>(n_tasks, 1));
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(n_req * n_t, 0.0));
  std::exception_ptr failure[kChunks];

  auto work = [&](std::size_t c) {
    std::vector<double>& acc = partial[c];
    const std::size_t begin = n_tasks * c / chunks;
    const std::size_t end = n_tasks * (c + 1) / chunks;
    for (std::size_t task = begin; task < end; ++task) {
      const std::size_t r = task / nodes.size();
      const std::size_t q = task % nodes.size();
      const auto& x = covariates.rows[r];
      const double b = nodes.nodes[q];
      const double w = covariates.weights[r] * nodes.weights[q];
      std::optional<std::vector<double>> hazard[2];
      for (std::size_t i = 0; i < n_req; ++i) {
        const CurveRequest& req = requests[i];
        const std::vector<double>* h = nullptr;
        if (req.mode == DrawMode::marginal) {
          auto& slot = hazard[req.z1];
          if (!slot) slot = engine.marginal_draw_hazard(req.z1, x, b);
          h = &*slot;
        }
        const std::vector<double> v = engine.cif_at(req.z1, req.z2, x, req.mode, b, times, h);
        for (std::size_t t = 0; t < n_t; ++t) acc[i * n_t + t] += w * v[t];
      }
    }
  };

  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < chunks; ++c) {
      try {
        work(c);
      } catch (...) {
        failure[c] = std::current_exception();
      }
    }
    for (std::size_t c = 0; c < chunks; ++c) {
      if (failure[c]) std::rethrow_exception(failure[c]);
    }
  } else {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
  }

  std::vector<CifCurve> curves(n_req);
  for (std::size_t i = 0; i < n_req; ++i) {
    CifCurve& curve = curves[i];
    curve.times.assign(times.begin(), times.end());
    curve.values.assign(n_t, 0.0);
    curve.z1 = requests[i].z1;
    curve.z2 = requests[i].z2;
    curve.mode = requests[i].mode;
    curve.frailty_averaged = nodes.size() > 1;
    for (std::size_t c = 0; c < chunks; ++c) {
      for (std::size_t t = 0; t < n_t; ++t) curve.values[t] += partial[c][i * n_t + t];
    }
    // Averages of values in [0, 1] can leave the interval by rounding only.
    for (double& v : curve.values) v = std::clamp(v, 0.0, 1.0);
  }
  return curves;
}

NormalQuadrature frailty_quadrature(const MultistateModel& model, std::size_t node_count) {
  if (!model.frailty) return degenerate_quadrature();
  return gauss_hermite(node_count);
}

CifCurve population_cif(const MultistateModel& model, int z1, int z2, const Dataset& data,
                        std::span<const double> times, DrawMode mode, const CifOptions& options) {
  CifEngine engine(model);
  const CurveRequest req{mode, z1, z2};
  auto curves = population_cifs(engine, CovariateDistribution::from_dataset(data), {&req, 1}, times,
                                frailty_quadrature(model, options.frailty_nodes), options.execution);
  return std::move(curves.front());
}

EffectAnalysis effect_analysis(const MultistateModel& model, const CovariateDistribution& covariates,
                               std::span<const double> times, const CifOptions& options,
                               DrawSelection draws) {
  CifEngine engine(model);
  std::vector<CurveRequest> requests{{DrawMode::natural, 0, 0}, {DrawMode::natural, 1, 1}};
  if (draws.marginal) {
    for (int z1 = 0; z1 < 2; ++z1) {
      for (int z2 = 0; z2 < 2; ++z2) requests.push_back({DrawMode::marginal, z1, z2});
    }
  }
  if (draws.conditional) {
    requests.push_back({DrawMode::conditional, 0, 1});
    requests.push_back({DrawMode::conditional, 1, 0});
  }
  std::vector<CifCurve> computed = population_cifs(
      engine, covariates, requests, times, frailty_quadrature(model, options.frailty_nodes), options.execution);

  EffectAnalysis out;
  out.effects.times.assign(times.begin(), times.end());
  const CifCurve& n0 = computed[0];
  const CifCurve& n1 = computed[1];
  out.curves.push_back(n0);
  out.curves.push_back(n1);
  auto diff = [&](const CifCurve& a, const CifCurve& b) {
    std::vector<double> d(times.size());
    for (std::size_t t = 0; t < d.size(); ++t) d[t] = a.values[t] - b.values[t];
    return d;
  };
  out.effects[Estimand::TE] = diff(n1, n0);

  std::size_t next = 2;
  if (draws.marginal) {
    const CifCurve& m00 = computed[next];
    const CifCurve& m01 = computed[next + 1];
    const CifCurve& m11 = computed[next + 3];
    for (std::size_t i = 0; i < 4; ++i) out.curves.push_back(computed[next + i]);
    out.effects[Estimand::OE] = diff(m11, m00);
    out.effects[Estimand::IDE] = diff(m01, m00);
    out.effects[Estimand::IIE] = diff(m11, m01);
    next += 4;
  }
  if (draws.conditional) {
    CifCurve c00 = n0, c11 = n1;
    c00.mode = c11.mode = DrawMode::conditional;
    const CifCurve& c01 = computed[next];
    const CifCurve& c10 = computed[next + 1];
    out.curves.push_back(c00);
    out.curves.push_back(c01);
    out.curves.push_back(c10);
    out.curves.push_back(c11);
    out.effects[Estimand::DCE] = diff(c01, c00);
    out.effects[Estimand::ICE] = diff(c11, c01);
  }
  return out;
}

EffectTable effect_table(const MultistateModel& model, const Dataset& data, std::span<const double> times,
                         const CifOptions& options) {
  return effect_analysis(model, CovariateDistribution::from_dataset(data), times, options).effects;
}

}  // namespace semicomp
