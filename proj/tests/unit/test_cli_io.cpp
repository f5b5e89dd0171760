#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "generators.hpp"
#include "semicomp/analysis.hpp"
#include "semicomp/csv_io.hpp"

using namespace semicomp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("semicomp_cli_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SEMICOMP_CLI_PATH) + " " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
#ifdef WEXITSTATUS
  return WEXITSTATUS(status);
#else
  return status;
#endif
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> header_of(const fs::path& p) { return read_csv(p).header; }

bool has(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TEST_CASE("doubles survive formatting") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, 123456.789}) CHECK(parse_double(format_double(v), "v") == v);
  CHECK_THROWS_AS(parse_double("1.5x", "t2"), Error);
}

TEST_CASE("dataset round trip") {
  const fs::path dir = scratch("dataset");
  const Dataset d = testing::random_dataset(71, {.n = 80, .p = 2, .tie_step = 0.25});
  write_dataset(dir / "d.csv", d);
  const Dataset back = read_dataset(dir / "d.csv");
  REQUIRE(back.size() == d.size());
  CHECK(back.covariate_names() == d.covariate_names());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].id == d[i].id);
    CHECK(back[i].z == d[i].z);
    CHECK(back[i].x == d[i].x);
    CHECK(back[i].l_time == d[i].l_time);
    CHECK(back[i].t1 == d[i].t1);
    CHECK(back[i].delta1 == d[i].delta1);
    CHECK(back[i].t2 == d[i].t2);
    CHECK(back[i].delta2 == d[i].delta2);
  }
  const Dataset subset = read_dataset(dir / "d.csv", {d.covariate_names()[1]});
  CHECK(subset[0].x == std::vector<double>{d[0].x[1]});
}

TEST_CASE("missing column is named in a schema error") {
  const fs::path dir = scratch("schema");
  std::ofstream(dir / "bad.csv") << "id,z,age,l_time,t1,delta1,delta2\n1,0,50,,3,1,0\n";
  try {
    read_dataset(dir / "bad.csv");
    FAIL("read a file without t2");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::schema);
    CHECK(std::string(e.what()).find("t2") != std::string::npos);
  }
  std::ofstream(dir / "cov.csv") << "id,z,age,l_time,t1,delta1,t2,delta2\n1,0,50,,3,1,4,0\n";
  CHECK_THROWS_AS(read_dataset(dir / "cov.csv", {"weight"}), Error);
  CHECK_THROWS_AS(read_dataset(dir / "absent.csv"), Error);
}

TEST_CASE("fit summary, baselines and EM trace round trip") {
  const fs::path dir = scratch("fit");
  const Dataset d = testing::random_dataset(72, {.n = 200, .p = 2});
  FrailtySpec spec;
  spec.max_iterations = 40;
  FrailtyFit ff;
  try {
    ff = fit_frailty(d, spec);
  } catch (const EmConvergenceError&) {
    spec.fixed_alpha = std::array<double, 2>{0.3, 0.6};
    ff = fit_frailty(d, spec);
  }
  write_fit_summary(dir / "fit.csv", ff.fit);
  const std::vector<FitSummaryRow> rows = read_fit_summary(dir / "fit.csv");
  std::size_t coefficients = 0, alphas = 0;
  for (const auto& r : rows) {
    if (r.transition == "frailty") {
      CHECK(r.estimate == (*ff.fit.alpha)[static_cast<std::size_t>(r.arm)]);
      ++alphas;
      continue;
    }
    const TransitionKind kind = r.transition == "confounder"     ? TransitionKind::confounder
                                : r.transition == "intermediate" ? TransitionKind::intermediate
                                                                 : TransitionKind::terminal;
    const auto& t = ff.fit.at(r.arm, kind);
    const auto j = static_cast<std::size_t>(std::find(t.terms.begin(), t.terms.end(), r.term) - t.terms.begin());
    REQUIRE(j < t.terms.size());
    CHECK(r.estimate == t.beta()[static_cast<Eigen::Index>(j)]);
    CHECK(r.fixed == t.fixed[j]);
    ++coefficients;
  }
  CHECK(alphas == 2);
  CHECK(coefficients == 2 * (3 + 3 + 4));

  const auto files = write_baselines(dir / "baselines", ff.fit);
  CHECK(files.size() == 6);
  const StepFunction back = read_step_function(dir / "baselines" / "baseline_z1_terminal.csv");
  CHECK(back.times() == ff.fit.at(1, TransitionKind::terminal).baseline().times());
  CHECK(back.cumulative() == ff.fit.at(1, TransitionKind::terminal).baseline().cumulative());

  write_em_trace(dir / "trace.csv", ff.trace);
  const std::vector<EmTraceRow> trace = read_em_trace(dir / "trace.csv");
  REQUIRE(trace.size() == ff.trace.size());
  for (std::size_t k = 0; k < trace.size(); ++k) {
    CHECK(trace[k].iteration == ff.trace[k].iteration);
    CHECK(trace[k].loglik == ff.trace[k].loglik);
    CHECK(trace[k].alpha0 == ff.trace[k].alpha0);
    CHECK(trace[k].alpha1 == ff.trace[k].alpha1);
  }
}

TEST_CASE("curves and effects round trip") {
  const fs::path dir = scratch("curves");
  const Dataset d = testing::random_dataset(73, {.n = 200, .p = 1});
  const std::vector<double> times{1, 3, 5};
  BootstrapConfig config;
  config.resamples = 20;
  const BootstrapResult boot = bootstrap_effects(d, config, {}, times);
  write_effects(dir / "effects.csv", boot.table);
  const EffectTable back = read_effects(dir / "effects.csv");
  CHECK(back.times == boot.table.times);
  CHECK(back.estimates == boot.table.estimates);
  REQUIRE(back.intervals.has_value());
  for (std::size_t e = 0; e < 6; ++e) {
    for (std::size_t t = 0; t < times.size(); ++t) {
      CHECK((*back.intervals)[e][t].lower == (*boot.table.intervals)[e][t].lower);
      CHECK((*back.intervals)[e][t].upper == (*boot.table.intervals)[e][t].upper);
      CHECK((*back.intervals)[e][t].point_outside == (*boot.table.intervals)[e][t].point_outside);
    }
  }

  const EffectAnalysis a = effect_analysis(fit_multistate(d).model(), CovariateDistribution::from_dataset(d), times);
  write_curves(dir / "curves.csv", a.curves);
  const std::vector<CurveRow> rows = read_curves(dir / "curves.csv");
  REQUIRE(rows.size() == a.curves.size() * times.size());
  std::size_t k = 0;
  for (const auto& c : a.curves) {
    for (std::size_t t = 0; t < times.size(); ++t, ++k) {
      CHECK(rows[k].curve == c.label());
      CHECK(rows[k].time == c.times[t]);
      CHECK(rows[k].cif == c.values[t]);
    }
  }
}

TEST_CASE("replication report round trip keeps the optional SD") {
  const fs::path dir = scratch("report");
  ReplicationReport r;
  r.setting = 2;
  r.variant = EstimatorVariant::frailty;
  r.replications = 1;
  r.times = {2.0};
  r.truth.times = r.times;
  for (std::size_t e = 0; e < 6; ++e) {
    r.truth.estimates[e] = {0.01 * static_cast<double>(e)};
    r.mean_estimate[e] = {0.02};
    r.bias[e] = {0.02 - 0.01 * static_cast<double>(e)};
  }
  write_report(dir / "a.csv", r);
  CHECK_FALSE(has(header_of(dir / "a.csv"), "sd"));
  for (const auto& row : read_report(dir / "a.csv")) {
    CHECK_FALSE(row.sd.has_value());
    CHECK(row.setting == 2);
    CHECK(row.variant == "frailty");
  }
  r.sd = r.bias;
  write_report(dir / "b.csv", r);
  const auto rows = read_report(dir / "b.csv");
  REQUIRE(rows.size() == 6);
  for (const auto& row : rows) {
    REQUIRE(row.sd.has_value());
    CHECK(row.bias == *row.sd);
    CHECK(row.mean == 0.02);
  }
}

TEST_CASE("configuration hashing") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  RunConfig a, b;
  CHECK(a.canonical() == b.canonical());
  b.seed = 7;
  CHECK(a.canonical() != b.canonical());
  RunConfig bad;
  bad.grid = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(parse_draw_selection("conditional").marginal == false);
  CHECK_THROWS_AS(parse_draw_selection("both"), Error);
}

TEST_CASE("command-line front end") {
  const fs::path dir = scratch("cli");
  const fs::path log = dir / "log.txt";
  const std::string data = (dir / "data.csv").string();

  REQUIRE(run_cli("generate --kind setting1 --n 300 --seed 5 --out " + data, log) == 0);
  CHECK(read_dataset(data).size() == 300);

  SUBCASE("analyze without intervals") {
    const fs::path out = dir / "plain";
    REQUIRE(run_cli("analyze --input " + data + " --resamples 0 --grid 10 --out " + out.string(), log) == 0);
    const auto header = header_of(out / "effects.csv");
    CHECK(has(header, "estimate"));
    CHECK_FALSE(has(header, "ci_lower"));
    CHECK(fs::exists(out / "curves.csv"));
    CHECK(fs::exists(out / "fit_summary.csv"));
    CHECK(fs::exists(out / "baselines" / "baseline_z0_confounder.csv"));
    CHECK_FALSE(fs::exists(out / "em_trace.csv"));

    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["command"] == "analyze");
    CHECK(manifest["subjects"]["total"] == 300);
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest["input_hash"].get<std::string>().size() == 16);
    CHECK(manifest.contains("versions"));
    CHECK(manifest["outputs"].size() >= 9);
  }

  SUBCASE("analyze with intervals is reproducible") {
    const std::string common = "analyze --input " + data + " --resamples 30 --grid 5 --seed 4 --draw marginal";
    REQUIRE(run_cli(common + " --out " + (dir / "a").string(), log) == 0);
    REQUIRE(run_cli("--workers 1 " + common + " --out " + (dir / "b").string(), log) == 0);
    CHECK(has(header_of(dir / "a" / "effects.csv"), "ci_lower"));
    CHECK(slurp(dir / "a" / "effects.csv") == slurp(dir / "b" / "effects.csv"));
    for (const auto& row : read_csv(dir / "a" / "effects.csv").rows) CHECK(row[1] != "DCE");
  }

  SUBCASE("simulate with one replication has no SD column") {
    const fs::path out = dir / "sim";
    REQUIRE(run_cli("simulate --setting 1 -B 1 --n 300 --out " + out.string(), log) == 0);
    CHECK_FALSE(has(header_of(out / "report.csv"), "sd"));
    CHECK(has(header_of(out / "report.csv"), "bias"));
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["failures"] == 0);
  }

  SUBCASE("exit codes follow the error category") {
    CHECK(run_cli("analyze", log) == exit_code(ErrorCategory::config));
    CHECK(run_cli("simulate --setting 3", log) == exit_code(ErrorCategory::config));
    CHECK(run_cli("analyze --input " + (dir / "nothing.csv").string() + " --out " + (dir / "x").string(), log) ==
          exit_code(ErrorCategory::io));
    std::ofstream(dir / "bad.csv") << "id,z,l_time,t1,delta1,delta2\n1,0,,3,1,0\n";
    CHECK(run_cli("analyze --input " + (dir / "bad.csv").string() + " --out " + (dir / "y").string(), log) ==
          exit_code(ErrorCategory::schema));
    CHECK(slurp(log).find("t2") != std::string::npos);
    CHECK(run_cli("analyze --input " + data + " --level 1.5 --out " + (dir / "z").string(), log) ==
          exit_code(ErrorCategory::config));
  }
}
