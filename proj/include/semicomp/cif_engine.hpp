#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semicomp/core_model.hpp"
#include "semicomp/multistate_model.hpp"
#include "semicomp/quadrature.hpp"

namespace semicomp {

// natural: everything under z2 (requires z1 == z2).
// marginal: the intermediate event is drawn from the arm-z1 hazard with the
//   confounder integrated out over arm-z1 survivors.
// conditional: drawn from the arm-z1 hazard given the current confounder.
enum class DrawMode { natural, marginal, conditional };

std::string_view to_string(DrawMode mode) noexcept;
DrawMode parse_draw_mode(std::string_view text);

struct CifCurve {
  std::vector<double> times;
  std::vector<double> values;
  int z1 = 0;
  int z2 = 0;
  DrawMode mode = DrawMode::natural;
  bool frailty_averaged = false;

  // Right-continuous step evaluation; 0 before the first time.
  double at(double t) const;
  std::string label() const;
};

// Occupation probabilities after each grid time: alive states indexed by
// (g, l) and the absorbed (dead) mass.
struct WorldTrace {
  std::vector<std::array<double, 4>> alive;  // index 2*g + l
  std::vector<double> dead;

  double total_mass(std::size_t k) const {
    return alive[k][0] + alive[k][1] + alive[k][2] + alive[k][3] + dead[k];
  }
};

// Forward Kolmogorov recursion for the counterfactual world. All baselines
// are re-expressed as increments on the union of their jump times; within a
// grid time, jumps apply in the order confounder, drawn intermediate,
// terminal (intermediate before confounder under TieOrder::intermediate_first).
class CifEngine {
 public:
  explicit CifEngine(MultistateModel model);

  const MultistateModel& model() const { return model_; }
  const std::vector<double>& grid() const { return grid_; }

  // Drawn-hazard increments for marginal mode: the l-mixture of the arm-z1
  // intermediate hazard among event-free arm-z1 survivors. Once that mass
  // vanishes the last mixing proportion is carried forward and a warning is
  // appended.
  std::vector<double> marginal_draw_hazard(int z1, std::span<const double> x, double b = 0.0,
                                           std::vector<std::string>* warnings = nullptr) const;

  // Full curve on {0} + grid().
  CifCurve counterfactual_cif(int z1, int z2, std::span<const double> x, DrawMode mode,
                              double b = 0.0, WorldTrace* trace = nullptr) const;

  // Curve values at ascending `times`. `marginal_hazard` may be passed to
  // reuse a precomputed drawn hazard in marginal mode.
  std::vector<double> cif_at(int z1, int z2, std::span<const double> x, DrawMode mode, double b,
                             std::span<const double> times,
                             const std::vector<double>* marginal_hazard = nullptr) const;

 private:
  void run(int z1, int z2, std::span<const double> x, DrawMode mode, double b,
           const std::vector<double>* marginal_hazard, std::span<const double> times,
           std::vector<double>& values, WorldTrace* trace) const;

  MultistateModel model_;
  std::vector<double> grid_;
  // increments_[arm][kind][k]: baseline increment at grid_[k]
  std::array<std::array<std::vector<double>, 3>, 2> increments_;
};

// Empirical covariate distribution used for population averaging. Identical
// rows are merged with summed weights.
struct CovariateDistribution {
  std::vector<std::vector<double>> rows;
  std::vector<double> weights;

  static CovariateDistribution from_dataset(const Dataset& data);
  static CovariateDistribution single(std::vector<double> x);
};

struct CurveRequest {
  DrawMode mode;
  int z1;
  int z2;
};

// Population curves at `times`, averaged over covariates and, for a frailty
// model, over the quadrature nodes. Each (row, node) task is independent;
// the reduction runs in a fixed order so both executions agree bitwise.
std::vector<CifCurve> population_cifs(const CifEngine& engine, const CovariateDistribution& covariates,
                                      std::span<const CurveRequest> requests,
                                      std::span<const double> times, const NormalQuadrature& nodes,
                                      Execution execution = Execution::parallel);

struct CifOptions {
  std::size_t frailty_nodes = 20;
  Execution execution = Execution::parallel;
};

// Quadrature implied by the model: Gauss-Hermite when it carries a frailty,
// a single node at zero otherwise.
NormalQuadrature frailty_quadrature(const MultistateModel& model, std::size_t node_count);

CifCurve population_cif(const MultistateModel& model, int z1, int z2, const Dataset& data,
                        std::span<const double> times, DrawMode mode, const CifOptions& options = {});

enum class Estimand { TE, OE, IDE, IIE, DCE, ICE };
inline constexpr std::array<Estimand, 6> kAllEstimands = {Estimand::TE,  Estimand::OE,  Estimand::IDE,
                                                          Estimand::IIE, Estimand::DCE, Estimand::ICE};
std::string_view to_string(Estimand e) noexcept;
std::optional<Estimand> parse_estimand(std::string_view text);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool point_outside = false;  // point estimate outside its own interval
};

struct EffectTable {
  std::vector<double> times;
  std::array<std::vector<double>, 6> estimates;
  std::optional<std::array<std::vector<Interval>, 6>> intervals;

  const std::vector<double>& operator[](Estimand e) const { return estimates[static_cast<std::size_t>(e)]; }
  std::vector<double>& operator[](Estimand e) { return estimates[static_cast<std::size_t>(e)]; }
};

// Which curve families to evaluate; natural curves are always included.
struct DrawSelection {
  bool marginal = true;
  bool conditional = true;
};

struct EffectAnalysis {
  std::vector<CifCurve> curves;  // natural, then marginal, then conditional
  EffectTable effects;           // estimands not covered by the selection stay empty
};

// The standard set of curves: natural F(t;0), F(t;1); marginal and
// conditional F(t;z1,z2) for all four pairs. TE = F(1) - F(0);
// OE = Fm(1,1) - Fm(0,0) = IDE + IIE with IDE = Fm(0,1) - Fm(0,0) and
// IIE = Fm(1,1) - Fm(0,1); DCE = Fc(0,1) - Fc(0,0), ICE = Fc(1,1) - Fc(0,1).
// Conditional diagonal curves are the natural curves, so DCE + ICE = TE.
EffectAnalysis effect_analysis(const MultistateModel& model, const CovariateDistribution& covariates,
                               std::span<const double> times, const CifOptions& options = {},
                               DrawSelection draws = {});

EffectTable effect_table(const MultistateModel& model, const Dataset& data,
                         std::span<const double> times, const CifOptions& options = {});

}  // namespace semicomp
