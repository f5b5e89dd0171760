#include "semicomp/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace semicomp {

int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::io: return 1;
    case ErrorCategory::schema: return 2;
    case ErrorCategory::convergence: return 3;
    case ErrorCategory::config: return 4;
  }
  return 1;
}

const char* to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::io: return "io";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::convergence: return "convergence";
    case ErrorCategory::config: return "config";
  }
  return "unknown";
}

namespace {

[[noreturn]] void reject(const SubjectRecord& r, const std::string& why) {
  throw Error(ErrorCategory::schema, "row '" + r.id + "': " + why);
}

}  // namespace

void validate_record(const SubjectRecord& r, std::size_t expected_covariates) {
  if (r.z != 0 && r.z != 1) reject(r, "treatment z must be 0 or 1");
  if (r.x.size() != expected_covariates) {
    std::ostringstream os;
    os << "expected " << expected_covariates << " covariates, got " << r.x.size();
    reject(r, os.str());
  }
  for (double v : r.x) {
    if (!std::isfinite(v)) reject(r, "non-finite covariate value");
  }
  if (!(r.t1 > 0.0) || !std::isfinite(r.t1)) reject(r, "t1 must be positive and finite");
  if (!(r.t2 > 0.0) || !std::isfinite(r.t2)) reject(r, "t2 must be positive and finite");
  if (r.t1 > r.t2) reject(r, "t1 > t2");
  if (!r.delta1 && r.t1 != r.t2) reject(r, "delta1 = 0 requires t1 = t2");
  if (r.l_time) {
    if (!(*r.l_time > 0.0) || !std::isfinite(*r.l_time)) reject(r, "l_time must be positive");
    if (*r.l_time > r.t2) reject(r, "l_time > t2");
  }
}

Dataset build_dataset(std::vector<SubjectRecord> rows, std::vector<std::string> covariate_names,
                      TieOrder tie_order) {
  Dataset data;
  if (covariate_names.empty() && !rows.empty()) {
    for (std::size_t j = 0; j < rows.front().x.size(); ++j) {
      covariate_names.push_back("x" + std::to_string(j + 1));
    }
  }
  const std::size_t p = covariate_names.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    validate_record(rows[i], p);
    data.arms_[rows[i].z].push_back(i);
  }
  data.covariate_names_ = std::move(covariate_names);
  data.tie_order_ = tie_order;

  bool centered = !rows.empty();
  for (std::size_t j = 0; j < p && centered; ++j) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r.x[j];
    centered = std::abs(sum / static_cast<double>(rows.size())) < 1e-8;
  }
  data.centered_ = centered;
  data.subjects_ = std::move(rows);
  return data;
}

Dataset Dataset::resample(std::span<const std::size_t> indices) const {
  std::vector<SubjectRecord> rows;
  rows.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    SubjectRecord r = subjects_.at(indices[k]);
    r.id += "#" + std::to_string(k);
    rows.push_back(std::move(r));
  }
  return build_dataset(std::move(rows), covariate_names_, tie_order_);
}

TimeGrid pooled_event_grid(const Dataset& data, const GridOptions& options) {
  std::set<double> times;
  double horizon = 0.0;
  for (const auto& r : data.subjects()) {
    if (options.arm && r.z != *options.arm) continue;
    horizon = std::max(horizon, r.t2);
    if (r.l_time) times.insert(*r.l_time);
    if (r.delta1) times.insert(r.t1);
    if (r.delta2) times.insert(r.t2);
    if (options.include_exit_times) times.insert(r.t2);
  }
  return TimeGrid{std::vector<double>(times.begin(), times.end()), horizon};
}

TimeGrid uniform_grid(double horizon, std::size_t count) {
  TimeGrid grid;
  grid.horizon = horizon;
  grid.times.reserve(count);
  for (std::size_t k = 1; k <= count; ++k) {
    grid.times.push_back(horizon * static_cast<double>(k) / static_cast<double>(count));
  }
  return grid;
}

}  // namespace semicomp
