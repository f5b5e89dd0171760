#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semicomp/cif_engine.hpp"
#include "semicomp/core_model.hpp"
#include "semicomp/cox_npmle.hpp"
#include "semicomp/frailty_em.hpp"
#include "semicomp/simulation.hpp"

namespace semicomp {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position; Error(schema) naming the column when absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Shortest text that reads back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view context);

// Subject file: id, z, covariates..., l_time, t1, delta1, t2, delta2. An
// empty l_time (or NA) means no confounder jump. With no covariate names
// given, every other column is a covariate in file order.
Dataset read_dataset(const std::filesystem::path& path, const std::vector<std::string>& covariates = {},
                     TieOrder tie_order = TieOrder::confounder_first);
Dataset dataset_from_csv(const CsvTable& table, const std::vector<std::string>& covariates = {},
                         TieOrder tie_order = TieOrder::confounder_first);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

// arm, transition, term, estimate, fixed. Frailty loadings appear as
// transition "frailty", term "alpha".
void write_fit_summary(const std::filesystem::path& path, const MultistateFit& fit);

struct FitSummaryRow {
  int arm = 0;
  std::string transition;
  std::string term;
  double estimate = 0.0;
  bool fixed = false;
};
std::vector<FitSummaryRow> read_fit_summary(const std::filesystem::path& path);

// time, cumulative_hazard
void write_step_function(const std::filesystem::path& path, const StepFunction& f);
StepFunction read_step_function(const std::filesystem::path& path);
// One file per (arm, transition): baseline_z<arm>_<transition>.csv.
std::vector<std::filesystem::path> write_baselines(const std::filesystem::path& dir, const MultistateFit& fit);

// curve, time, cif (long format; curve is CifCurve::label()).
void write_curves(const std::filesystem::path& path, const std::vector<CifCurve>& curves);

struct CurveRow {
  std::string curve;
  double time = 0.0;
  double cif = 0.0;
};
std::vector<CurveRow> read_curves(const std::filesystem::path& path);

// time, estimand, estimate, and ci_lower, ci_upper, point_outside when the
// table has intervals. Estimands left empty are skipped.
void write_effects(const std::filesystem::path& path, const EffectTable& table);
EffectTable read_effects(const std::filesystem::path& path);

// estimand, time, bias, sd (only when available), variant, setting, truth, mean
void write_report(const std::filesystem::path& path, const ReplicationReport& report);

struct ReportRow {
  std::string estimand;
  double time = 0.0;
  double bias = 0.0;
  std::optional<double> sd;
  std::string variant;
  int setting = 0;
  double truth = 0.0;
  double mean = 0.0;
};
std::vector<ReportRow> read_report(const std::filesystem::path& path);

// iteration, loglik, alpha0, alpha1
void write_em_trace(const std::filesystem::path& path, const std::vector<EmTraceRow>& trace);
std::vector<EmTraceRow> read_em_trace(const std::filesystem::path& path);

}  // namespace semicomp
