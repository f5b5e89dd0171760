#include "semicomp/analysis.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "semicomp/csv_io.hpp"

namespace semicomp {

namespace {

using Json = nlohmann::ordered_json;

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::io, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream os;
  os << in.rdbuf();
  return fnv1a_hex(os.str());
}

Json versions() {
  return Json{{"semicomp", kVersion},
              {"compiler", __VERSION__},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

// Rows are estimands in TE, OE, IDE, IIE, DCE, ICE order; columns t = 2..10.
using SdTable = std::array<std::array<double, 5>, 6>;

const SdTable& sd_table(int setting, EstimatorVariant variant) {
  static const SdTable s1_npmle{{{.017, .026, .031, .032, .033},
                                 {.017, .026, .031, .032, .033},
                                 {.017, .026, .031, .032, .033},
                                 {.001, .002, .004, .005, .005},
                                 {.017, .026, .031, .032, .033},
                                 {.001, .002, .004, .005, .005}}};
  static const SdTable s1_frailty{{{.017, .026, .031, .032, .043},
                                   {.017, .026, .031, .039, .043},
                                   {.017, .026, .031, .032, .043},
                                   {.001, .002, .004, .021, .004},
                                   {.017, .026, .031, .032, .043},
                                   {.001, .002, .004, .004, .004}}};
  static const SdTable s2_npmle{{{.018, .027, .031, .033, .032},
                                 {.018, .027, .031, .033, .032},
                                 {.018, .027, .031, .032, .032},
                                 {.001, .003, .005, .006, .006},
                                 {.018, .027, .031, .032, .032},
                                 {.001, .003, .005, .006, .006}}};
  static const SdTable s2_frailty{{{.018, .027, .031, .033, .032},
                                   {.018, .027, .031, .033, .054},
                                   {.018, .027, .031, .032, .032},
                                   {.001, .003, .005, .006, .045},
                                   {.018, .027, .031, .032, .032},
                                   {.001, .003, .005, .006, .005}}};
  if (setting == 1) return variant == EstimatorVariant::npmle ? s1_npmle : s1_frailty;
  return variant == EstimatorVariant::npmle ? s2_npmle : s2_frailty;
}

std::vector<double> analysis_times(const Dataset& data, std::size_t count) {
  const TimeGrid events = pooled_event_grid(data);
  if (events.empty()) throw Error(ErrorCategory::schema, "dataset has no events");
  return uniform_grid(events.times.back(), count).times;
}

}  // namespace

DrawSelection parse_draw_selection(std::string_view text) {
  if (text == "all") return {true, true};
  if (text == "natural") return {false, false};
  if (text == "marginal") return {true, false};
  if (text == "conditional") return {false, true};
  throw Error(ErrorCategory::config, "unknown draw selection '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  if (grid == 0) throw Error(ErrorCategory::config, "grid must have at least one point");
  if (nodes < 5) throw Error(ErrorCategory::config, "at least 5 quadrature nodes are required");
  parse_draw_selection(draw);
  bootstrap.validate();
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "input=" << input.string() << ";covariates=";
  for (const auto& c : covariates) os << c << ',';
  os << ";grid=" << grid << ";draw=" << draw << ";variant=" << to_string(variant) << ";nodes=" << nodes
     << ";resamples=" << bootstrap.resamples << ";level=" << format_double(bootstrap.level) << ";seed=" << seed
     << ";ties=" << (tie_order == TieOrder::confounder_first ? "confounder_first" : "intermediate_first");
  return os.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AnalysisOutput run_analysis(const RunConfig& config) {
  config.validate();
  return run_analysis(read_dataset(config.input, config.covariates, config.tie_order), config);
}

AnalysisOutput run_analysis(const Dataset& data, const RunConfig& config) {
  config.validate();
  const DrawSelection draws = parse_draw_selection(config.draw);
  const std::vector<double> times = analysis_times(data, config.grid);

  EstimatorOptions estimator;
  estimator.variant = config.variant;
  estimator.frailty.node_count = config.nodes;
  estimator.cif.frailty_nodes = config.nodes;

  AnalysisOutput out;
  if (config.variant == EstimatorVariant::frailty) {
    FrailtyFit ff;
    try {
      ff = fit_frailty(data, estimator.frailty);
    } catch (const EmConvergenceError& e) {
      std::error_code ec;
      std::filesystem::create_directories(config.out, ec);
      if (!ec) write_em_trace(config.out / "em_trace.csv", e.trace());
      throw;
    }
    out.fit = std::move(ff.fit);
    out.em_trace = std::move(ff.trace);
    out.warnings = std::move(ff.warnings);
  } else {
    out.fit = fit_multistate(data, estimator.cox);
  }
  for (auto& w : out.fit.warnings()) out.warnings.push_back(std::move(w));

  out.analysis = effect_analysis(out.fit.model(), CovariateDistribution::from_dataset(data), times,
                                 estimator.cif, draws);

  if (config.bootstrap.resamples > 0) {
    BootstrapConfig bc = config.bootstrap;
    bc.seed = config.seed;
    const BootstrapResult boot = bootstrap_effects(data, bc, estimator, times);
    out.bootstrap_failures = boot.failures;
    if (boot.failures > 0) {
      out.warnings.push_back(std::to_string(boot.failures) + " bootstrap refits failed and were dropped");
    }
    attach_intervals(out.analysis.effects, boot.replicates, bc.level);
  }

  const auto& dir = config.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCategory::io, "cannot create '" + dir.string() + "'");

  write_fit_summary(dir / "fit_summary.csv", out.fit);
  out.files.push_back(dir / "fit_summary.csv");
  for (auto& p : write_baselines(dir / "baselines", out.fit)) out.files.push_back(std::move(p));
  write_curves(dir / "curves.csv", out.analysis.curves);
  out.files.push_back(dir / "curves.csv");
  write_effects(dir / "effects.csv", out.analysis.effects);
  out.files.push_back(dir / "effects.csv");
  if (!out.em_trace.empty()) {
    write_em_trace(dir / "em_trace.csv", out.em_trace);
    out.files.push_back(dir / "em_trace.csv");
  }

  Json manifest;
  manifest["command"] = "analyze";
  manifest["config"] = {{"input", config.input.string()},
                        {"covariates", data.covariate_names()},
                        {"grid", config.grid},
                        {"draw", config.draw},
                        {"variant", std::string(to_string(config.variant))},
                        {"nodes", config.nodes},
                        {"resamples", config.bootstrap.resamples},
                        {"level", config.bootstrap.level},
                        {"tie_order", config.tie_order == TieOrder::confounder_first ? "confounder_first"
                                                                                    : "intermediate_first"}};
  manifest["config_hash"] = fnv1a_hex(config.canonical());
  manifest["input_hash"] = file_digest(config.input);
  manifest["seed"] = config.seed;
  manifest["versions"] = versions();
  manifest["subjects"] = {{"total", data.size()}, {"arm0", data.arm_size(0)}, {"arm1", data.arm_size(1)}};
  if (out.fit.alpha) manifest["alpha"] = {(*out.fit.alpha)[0], (*out.fit.alpha)[1]};
  manifest["bootstrap_failures"] = out.bootstrap_failures;
  manifest["warnings"] = out.warnings;
  Json files = Json::array();
  for (const auto& f : out.files) files.push_back(std::filesystem::relative(f, dir).string());
  manifest["outputs"] = files;
  write_json(dir / "manifest.json", manifest);
  out.files.push_back(dir / "manifest.json");
  return out;
}

std::optional<double> reference_sd(int setting, EstimatorVariant variant, Estimand estimand, double t) {
  if (setting != 1 && setting != 2) return std::nullopt;
  const double k = t / 2.0;
  if (k < 1.0 || k > 5.0 || k != std::floor(k)) return std::nullopt;
  return sd_table(setting, variant)[static_cast<std::size_t>(estimand)][static_cast<std::size_t>(k) - 1];
}

bool sd_within_tolerance(double sd, double reference, double relative) {
  const double half_unit = 0.0005;
  return sd >= (1.0 - relative) * (reference - half_unit) && sd <= (1.0 + relative) * (reference + half_unit);
}

std::vector<SummaryCheck> summarize_report(const ReplicationReport& report, double bias_threshold) {
  std::vector<SummaryCheck> checks;
  for (Estimand e : kAllEstimands) {
    const auto ei = static_cast<std::size_t>(e);
    for (std::size_t k = 0; k < report.times.size(); ++k) {
      const double t = report.times[k];
      const double b = report.bias[ei][k];
      checks.push_back({"bias", e, t, b, -bias_threshold, bias_threshold, std::abs(b) <= bias_threshold});
      if (report.sd) {
        if (auto ref = reference_sd(report.setting, report.variant, e, t)) {
          const double sd = (*report.sd)[ei][k];
          checks.push_back({"sd", e, t, sd, 0.7 * (*ref - 0.0005), 1.3 * (*ref + 0.0005),
                            sd_within_tolerance(sd, *ref)});
        }
      }
    }
  }
  return checks;
}

SimulateOutput run_simulation_study(const SimulateConfig& config) {
  if (config.setting != 1 && config.setting != 2) throw Error(ErrorCategory::config, "setting must be 1 or 2");
  if (config.replications == 0) throw Error(ErrorCategory::config, "replications must be positive");
  if (config.nodes < 5) throw Error(ErrorCategory::config, "at least 5 quadrature nodes are required");
  const DgpSpec spec = DgpSpec::setting(config.setting, config.n, config.seed);
  ReplicationOptions options;
  options.replications = config.replications;
  options.estimator.variant = config.variant;
  options.estimator.frailty.node_count = config.nodes;
  options.estimator.cif.frailty_nodes = config.nodes;

  SimulateOutput out;
  out.report = replication_study(spec, config.setting, options);
  const double threshold = config.bias_threshold.value_or(config.setting == 1 ? 0.01 : 0.012);
  out.checks = summarize_report(out.report, threshold);
  out.all_pass = std::all_of(out.checks.begin(), out.checks.end(), [](const SummaryCheck& c) { return c.pass; });

  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw Error(ErrorCategory::io, "cannot create '" + config.out.string() + "'");
  write_report(config.out / "report.csv", out.report);

  CsvTable summary;
  summary.header = {"check", "estimand", "time", "value", "lower", "upper", "pass"};
  for (const auto& c : out.checks) {
    summary.rows.push_back({c.check, std::string(to_string(c.estimand)), format_double(c.time), format_double(c.value),
                            format_double(c.lower), format_double(c.upper), c.pass ? "1" : "0"});
  }
  write_csv(config.out / "summary.csv", summary);

  std::ostringstream canonical;
  canonical << "setting=" << config.setting << ";B=" << config.replications << ";n=" << config.n
            << ";variant=" << to_string(config.variant) << ";nodes=" << config.nodes << ";seed=" << config.seed;
  Json manifest;
  manifest["command"] = "simulate";
  manifest["config"] = {{"setting", config.setting},
                        {"replications", config.replications},
                        {"n", config.n},
                        {"variant", std::string(to_string(config.variant))},
                        {"nodes", config.nodes},
                        {"bias_threshold", threshold}};
  manifest["config_hash"] = fnv1a_hex(canonical.str());
  manifest["seed"] = config.seed;
  manifest["versions"] = versions();
  manifest["failures"] = out.report.failures;
  manifest["failure_messages"] = out.report.failure_messages;
  if (!out.report.alpha_estimates.empty()) {
    double s0 = 0.0, s1 = 0.0;
    for (const auto& a : out.report.alpha_estimates) {
      s0 += a[0];
      s1 += a[1];
    }
    const auto m = static_cast<double>(out.report.alpha_estimates.size());
    manifest["mean_alpha"] = {s0 / m, s1 / m};
  }
  manifest["all_pass"] = out.all_pass;
  manifest["outputs"] = {"report.csv", "summary.csv"};
  write_json(config.out / "manifest.json", manifest);
  return out;
}

}  // namespace semicomp
