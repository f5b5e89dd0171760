#include "semicomp/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace semicomp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCategory::io, "cannot write '" + path.string() + "'");
  return out;
}

bool parse_flag(std::string_view text, std::string_view context) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw Error(ErrorCategory::schema, std::string(context) + ": expected 0 or 1, got '" + std::string(text) + "'");
}

int parse_int(std::string_view text, std::string_view context) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCategory::schema, std::string(context) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

const std::set<std::string>& fixed_columns() {
  static const std::set<std::string> names{"id", "z", "l_time", "t1", "delta1", "t2", "delta2"};
  return names;
}

}  // namespace

std::optional<std::size_t> CsvTable::find(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t CsvTable::column(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCategory::schema, "missing column '" + std::string(name) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCategory::io, "cannot open '" + path.string() + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCategory::schema, "'" + path.string() + "' is empty");
  for (auto& h : split_line(line)) table.header.push_back(trim(std::move(h)));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      std::ostringstream os;
      os << path.string() << " line " << lineno << ": expected " << table.header.size() << " fields, got "
         << fields.size();
      throw Error(ErrorCategory::schema, os.str());
    }
    for (auto& f : fields) f = trim(std::move(f));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out = open_out(path);
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (row[i].find_first_of(",\"") != std::string::npos) {
        out << '"';
        for (char c : row[i]) out << (c == '"' ? "\"\"" : std::string(1, c));
        out << '"';
      } else {
        out << row[i];
      }
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  if (!out) throw Error(ErrorCategory::io, "failed writing '" + path.string() + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view context) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCategory::schema, std::string(context) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

Dataset dataset_from_csv(const CsvTable& table, const std::vector<std::string>& covariates, TieOrder tie_order) {
  std::vector<std::string> names = covariates;
  if (names.empty()) {
    for (const auto& h : table.header) {
      if (!fixed_columns().contains(h)) names.push_back(h);
    }
  }
  const std::size_t c_id = table.column("id"), c_z = table.column("z"), c_l = table.column("l_time"),
                    c_t1 = table.column("t1"), c_d1 = table.column("delta1"), c_t2 = table.column("t2"),
                    c_d2 = table.column("delta2");
  std::vector<std::size_t> c_x;
  for (const auto& n : names) c_x.push_back(table.column(n));

  std::vector<SubjectRecord> rows;
  rows.reserve(table.rows.size());
  for (const auto& f : table.rows) {
    SubjectRecord r;
    r.id = f[c_id];
    const std::string ctx = "row '" + r.id + "'";
    r.z = parse_int(f[c_z], ctx + " z");
    for (std::size_t j = 0; j < c_x.size(); ++j) r.x.push_back(parse_double(f[c_x[j]], ctx + " " + names[j]));
    if (!f[c_l].empty() && f[c_l] != "NA") r.l_time = parse_double(f[c_l], ctx + " l_time");
    r.t1 = parse_double(f[c_t1], ctx + " t1");
    r.delta1 = parse_flag(f[c_d1], ctx + " delta1");
    r.t2 = parse_double(f[c_t2], ctx + " t2");
    r.delta2 = parse_flag(f[c_d2], ctx + " delta2");
    rows.push_back(std::move(r));
  }
  return build_dataset(std::move(rows), std::move(names), tie_order);
}

Dataset read_dataset(const std::filesystem::path& path, const std::vector<std::string>& covariates,
                     TieOrder tie_order) {
  return dataset_from_csv(read_csv(path), covariates, tie_order);
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  CsvTable t;
  t.header = {"id", "z"};
  for (const auto& n : data.covariate_names()) t.header.push_back(n);
  for (const char* h : {"l_time", "t1", "delta1", "t2", "delta2"}) t.header.emplace_back(h);
  for (const auto& r : data.subjects()) {
    std::vector<std::string> row{r.id, std::to_string(r.z)};
    for (double v : r.x) row.push_back(format_double(v));
    row.push_back(r.l_time ? format_double(*r.l_time) : "");
    row.push_back(format_double(r.t1));
    row.push_back(r.delta1 ? "1" : "0");
    row.push_back(format_double(r.t2));
    row.push_back(r.delta2 ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

void write_fit_summary(const std::filesystem::path& path, const MultistateFit& fit) {
  CsvTable t;
  t.header = {"arm", "transition", "term", "estimate", "fixed"};
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      const TransitionModelFit& f = fit.at(z, kind);
      for (std::size_t j = 0; j < f.terms.size(); ++j) {
        t.rows.push_back({std::to_string(z), std::string(to_string(kind)), f.terms[j],
                          format_double(f.model.beta[static_cast<Eigen::Index>(j)]), f.fixed[j] ? "1" : "0"});
      }
    }
    if (fit.alpha) {
      t.rows.push_back({std::to_string(z), "frailty", "alpha",
                        format_double((*fit.alpha)[static_cast<std::size_t>(z)]), "0"});
    }
  }
  write_csv(path, t);
}

std::vector<FitSummaryRow> read_fit_summary(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t a = t.column("arm"), tr = t.column("transition"), te = t.column("term"),
                    es = t.column("estimate"), fx = t.column("fixed");
  std::vector<FitSummaryRow> out;
  for (const auto& r : t.rows) {
    out.push_back({parse_int(r[a], "arm"), r[tr], r[te], parse_double(r[es], "estimate"), parse_flag(r[fx], "fixed")});
  }
  return out;
}

void write_step_function(const std::filesystem::path& path, const StepFunction& f) {
  CsvTable t;
  t.header = {"time", "cumulative_hazard"};
  for (std::size_t k = 0; k < f.size(); ++k) {
    t.rows.push_back({format_double(f.times()[k]), format_double(f.cumulative()[k])});
  }
  write_csv(path, t);
}

StepFunction read_step_function(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ct = t.column("time"), ch = t.column("cumulative_hazard");
  std::vector<double> times, jumps;
  double previous = 0.0;
  for (const auto& r : t.rows) {
    times.push_back(parse_double(r[ct], "time"));
    const double cum = parse_double(r[ch], "cumulative_hazard");
    jumps.push_back(cum - previous);
    previous = cum;
  }
  return StepFunction(std::move(times), jumps);
}

std::vector<std::filesystem::path> write_baselines(const std::filesystem::path& dir, const MultistateFit& fit) {
  std::vector<std::filesystem::path> written;
  for (int z = 0; z < 2; ++z) {
    for (TransitionKind kind : kAllKinds) {
      auto path = dir / ("baseline_z" + std::to_string(z) + "_" + std::string(to_string(kind)) + ".csv");
      write_step_function(path, fit.at(z, kind).model.baseline);
      written.push_back(std::move(path));
    }
  }
  return written;
}

void write_curves(const std::filesystem::path& path, const std::vector<CifCurve>& curves) {
  CsvTable t;
  t.header = {"curve", "time", "cif"};
  for (const auto& c : curves) {
    const std::string label = c.label();
    for (std::size_t k = 0; k < c.times.size(); ++k) {
      t.rows.push_back({label, format_double(c.times[k]), format_double(c.values[k])});
    }
  }
  write_csv(path, t);
}

std::vector<CurveRow> read_curves(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cc = t.column("curve"), ct = t.column("time"), cv = t.column("cif");
  std::vector<CurveRow> out;
  for (const auto& r : t.rows) out.push_back({r[cc], parse_double(r[ct], "time"), parse_double(r[cv], "cif")});
  return out;
}

void write_effects(const std::filesystem::path& path, const EffectTable& table) {
  CsvTable t;
  t.header = {"time", "estimand", "estimate"};
  if (table.intervals) {
    for (const char* h : {"ci_lower", "ci_upper", "point_outside"}) t.header.emplace_back(h);
  }
  for (Estimand e : kAllEstimands) {
    const auto ei = static_cast<std::size_t>(e);
    if (table.estimates[ei].empty()) continue;
    for (std::size_t k = 0; k < table.times.size(); ++k) {
      std::vector<std::string> row{format_double(table.times[k]), std::string(to_string(e)),
                                   format_double(table.estimates[ei][k])};
      if (table.intervals) {
        const Interval& iv = (*table.intervals)[ei][k];
        row.push_back(format_double(iv.lower));
        row.push_back(format_double(iv.upper));
        row.push_back(iv.point_outside ? "1" : "0");
      }
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

EffectTable read_effects(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ct = t.column("time"), ce = t.column("estimand"), cv = t.column("estimate");
  const auto lo = t.find("ci_lower"), hi = t.find("ci_upper"), po = t.find("point_outside");
  const bool with_ci = lo && hi;

  std::vector<double> times;
  std::map<double, std::size_t> index;
  for (const auto& r : t.rows) {
    const double time = parse_double(r[ct], "time");
    if (index.emplace(time, 0).second) times.push_back(time);
  }
  std::sort(times.begin(), times.end());
  for (std::size_t k = 0; k < times.size(); ++k) index[times[k]] = k;

  EffectTable table;
  table.times = times;
  std::array<std::vector<Interval>, 6> intervals;
  for (const auto& r : t.rows) {
    const auto e = parse_estimand(r[ce]);
    if (!e) throw Error(ErrorCategory::schema, "unknown estimand '" + r[ce] + "'");
    const auto ei = static_cast<std::size_t>(*e);
    if (table.estimates[ei].empty()) table.estimates[ei].assign(times.size(), 0.0);
    const std::size_t k = index.at(parse_double(r[ct], "time"));
    table.estimates[ei][k] = parse_double(r[cv], "estimate");
    if (with_ci) {
      if (intervals[ei].empty()) intervals[ei].resize(times.size());
      intervals[ei][k] = {parse_double(r[*lo], "ci_lower"), parse_double(r[*hi], "ci_upper"),
                          po ? parse_flag(r[*po], "point_outside") : false};
    }
  }
  if (with_ci) table.intervals = std::move(intervals);
  return table;
}

void write_report(const std::filesystem::path& path, const ReplicationReport& report) {
  CsvTable t;
  t.header = {"estimand", "time", "bias"};
  if (report.sd) t.header.emplace_back("sd");
  for (const char* h : {"variant", "setting", "truth", "mean"}) t.header.emplace_back(h);
  for (Estimand e : kAllEstimands) {
    const auto ei = static_cast<std::size_t>(e);
    for (std::size_t k = 0; k < report.times.size(); ++k) {
      std::vector<std::string> row{std::string(to_string(e)), format_double(report.times[k]),
                                   format_double(report.bias[ei][k])};
      if (report.sd) row.push_back(format_double((*report.sd)[ei][k]));
      row.emplace_back(to_string(report.variant));
      row.push_back(std::to_string(report.setting));
      row.push_back(format_double(report.truth.estimates[ei][k]));
      row.push_back(format_double(report.mean_estimate[ei][k]));
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ce = t.column("estimand"), ct = t.column("time"), cb = t.column("bias"),
                    cv = t.column("variant"), cs = t.column("setting"), ctr = t.column("truth"),
                    cm = t.column("mean");
  const auto csd = t.find("sd");
  std::vector<ReportRow> out;
  for (const auto& r : t.rows) {
    ReportRow row;
    row.estimand = r[ce];
    row.time = parse_double(r[ct], "time");
    row.bias = parse_double(r[cb], "bias");
    if (csd) row.sd = parse_double(r[*csd], "sd");
    row.variant = r[cv];
    row.setting = parse_int(r[cs], "setting");
    row.truth = parse_double(r[ctr], "truth");
    row.mean = parse_double(r[cm], "mean");
    out.push_back(std::move(row));
  }
  return out;
}

void write_em_trace(const std::filesystem::path& path, const std::vector<EmTraceRow>& trace) {
  CsvTable t;
  t.header = {"iteration", "loglik", "alpha0", "alpha1"};
  for (const auto& r : trace) {
    t.rows.push_back({std::to_string(r.iteration), format_double(r.loglik), format_double(r.alpha0),
                      format_double(r.alpha1)});
  }
  write_csv(path, t);
}

std::vector<EmTraceRow> read_em_trace(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = t.column("iteration"), cl = t.column("loglik"), c0 = t.column("alpha0"),
                    c1 = t.column("alpha1");
  std::vector<EmTraceRow> out;
  for (const auto& r : t.rows) {
    out.push_back({parse_int(r[ci], "iteration"), parse_double(r[cl], "loglik"), parse_double(r[c0], "alpha0"),
                   parse_double(r[c1], "alpha1")});
  }
  return out;
}

}  // namespace semicomp
