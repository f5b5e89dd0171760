#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "semicomp/analysis.hpp"
#include "semicomp/csv_io.hpp"
#include "semicomp/simulation.hpp"

using namespace semicomp;

namespace {

std::vector<double> parse_times(const std::string& text) {
  std::vector<double> times;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) times.push_back(parse_double(item, "--times"));
  if (times.empty()) throw Error(ErrorCategory::config, "--times is empty");
  return times;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual cumulative incidence and interventional effects for semicompeting risks"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (default: available cores)")->check(CLI::NonNegativeNumber);

  // analyze
  RunConfig run;
  std::string covariates, variant = "npmle", ties = "confounder_first";
  auto* analyze = app.add_subcommand("analyze", "Fit the multistate model and estimate effects");
  analyze->add_option("--input", run.input, "Subject CSV")->required();
  analyze->add_option("--covariates", covariates, "Comma-separated covariate columns (default: all)");
  analyze->add_option("--variant", variant, "npmle or frailty")->check(CLI::IsMember({"npmle", "frailty"}));
  analyze->add_option("--draw", run.draw, "natural, marginal, conditional or all")
      ->check(CLI::IsMember({"natural", "marginal", "conditional", "all"}));
  analyze->add_option("--resamples", run.bootstrap.resamples, "Bootstrap resamples (0 disables intervals)");
  analyze->add_option("--level", run.bootstrap.level, "Interval level");
  analyze->add_option("--nodes", run.nodes, "Gauss-Hermite nodes for the frailty");
  analyze->add_option("--grid", run.grid, "Number of evaluation times");
  analyze->add_option("--seed", run.seed, "Bootstrap seed");
  analyze->add_option("--out", run.out, "Output directory");
  analyze->add_option("--ties", ties, "confounder_first or intermediate_first")
      ->check(CLI::IsMember({"confounder_first", "intermediate_first"}));

  // simulate
  SimulateConfig sim;
  std::string sim_variant = "npmle";
  auto* simulate = app.add_subcommand("simulate", "Replication study on the built-in data-generating process");
  simulate->add_option("--setting", sim.setting, "1 (no frailty) or 2 (frailty sd 0.4)")->check(CLI::IsMember({1, 2}));
  simulate->add_option("--replications,-B", sim.replications, "Number of replications");
  simulate->add_option("--n", sim.n, "Sample size per replication");
  simulate->add_option("--variant", sim_variant, "npmle or frailty")->check(CLI::IsMember({"npmle", "frailty"}));
  simulate->add_option("--nodes", sim.nodes, "Gauss-Hermite nodes for the frailty");
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--out", sim.out, "Output directory");

  // oracle
  int o_setting = 1, z1 = 0, z2 = 0;
  std::string o_draw = "marginal", o_times = "2,4,6,8,10";
  McOracleOptions o_opt;
  std::filesystem::path o_out = "oracle.csv";
  std::size_t o_grid = 2000;
  auto* oracle = app.add_subcommand("oracle", "Monte-Carlo counterfactual CIF next to the forward recursion");
  oracle->add_option("--setting", o_setting, "1 or 2")->check(CLI::IsMember({1, 2}));
  oracle->add_option("--z1", z1, "Arm for the drawn intermediate hazard")->check(CLI::IsMember({0, 1}));
  oracle->add_option("--z2", z2, "Arm for confounder and death")->check(CLI::IsMember({0, 1}));
  oracle->add_option("--draw", o_draw, "natural, marginal or conditional")
      ->check(CLI::IsMember({"natural", "marginal", "conditional"}));
  oracle->add_option("--paths", o_opt.paths, "Simulated paths");
  oracle->add_option("--times", o_times, "Comma-separated evaluation times");
  oracle->add_option("--seed", o_opt.seed, "Seed");
  oracle->add_option("--grid", o_grid, "Grid points for the recursion's baselines");
  oracle->add_option("--out", o_out, "Output CSV");

  // generate
  std::string g_kind = "hct";
  std::size_t g_n = 1000;
  std::uint64_t g_seed = 2024;
  std::filesystem::path g_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--kind", g_kind, "hct, setting1 or setting2")
      ->check(CLI::IsMember({"hct", "setting1", "setting2"}));
  generate->add_option("--n", g_n, "Sample size (settings only)");
  generate->add_option("--seed", g_seed, "Seed");
  generate->add_option("--out", g_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorCategory::config);
  }
  if (workers > 0) omp_set_num_threads(workers);

  try {
    if (*analyze) {
      run.covariates = split_names(covariates);
      run.variant = parse_variant(variant);
      run.tie_order = ties == "confounder_first" ? TieOrder::confounder_first : TieOrder::intermediate_first;
      const AnalysisOutput out = run_analysis(run);
      for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "wrote " << out.files.size() << " files to " << run.out.string() << '\n';
      if (out.fit.alpha) std::cout << "alpha: " << (*out.fit.alpha)[0] << ' ' << (*out.fit.alpha)[1] << '\n';
    } else if (*simulate) {
      sim.variant = parse_variant(sim_variant);
      const SimulateOutput out = run_simulation_study(sim);
      std::size_t failed = 0;
      for (const auto& c : out.checks) failed += c.pass ? 0 : 1;
      std::cout << "replications: " << out.report.successes() << " of " << out.report.replications
                << " succeeded\nchecks: " << out.checks.size() - failed << " pass, " << failed << " fail\n"
                << (out.all_pass ? "PASS" : "FAIL") << '\n';
    } else if (*oracle) {
      const DgpSpec spec = DgpSpec::setting(o_setting);
      const DrawMode mode = parse_draw_mode(o_draw);
      const std::vector<double> times = parse_times(o_times);
      const McOracleResult mc = mc_counterfactual_oracle(spec, z1, z2, mode, times, o_opt);
      const MultistateModel truth = true_model(spec, o_grid);
      CifEngine engine(truth);
      const CurveRequest req{mode, z1, z2};
      const auto curves = population_cifs(engine, dgp_covariates(spec), {&req, 1}, times,
                                          frailty_quadrature(truth, 40));
      CsvTable t;
      t.header = {"time", "mc_cif", "mc_se", "recursion_cif"};
      for (std::size_t k = 0; k < times.size(); ++k) {
        t.rows.push_back({format_double(times[k]), format_double(mc.cif[k]), format_double(mc.se[k]),
                          format_double(curves[0].values[k])});
      }
      write_csv(o_out, t);
      std::cout << "wrote " << o_out.string() << '\n';
    } else if (*generate) {
      Dataset data = g_kind == "hct" ? hct_like_dataset(g_seed)
                                     : simulate_dataset(DgpSpec::setting(g_kind == "setting1" ? 1 : 2, g_n, g_seed));
      write_dataset(g_out, data);
      std::cout << "wrote " << data.size() << " subjects to " << g_out.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << to_string(e.category()) << " error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
