#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semicomp {

enum class ErrorCategory { io, schema, convergence, config };

// Exit status used by the command-line front end for each category.
int exit_code(ErrorCategory category) noexcept;
const char* to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

enum class Execution { serial, parallel };

// How a confounder jump and an intermediate event recorded at the same clock
// time are ordered. The terminal event always comes last.
enum class TieOrder { confounder_first, intermediate_first };

inline constexpr double kNever = std::numeric_limits<double>::infinity();

// Realisation of a 0 -> 1 counting process.
class CountingPath {
 public:
  CountingPath() = default;
  explicit CountingPath(std::optional<double> jump_time) : jump_(jump_time) {}

  std::optional<double> jump_time() const { return jump_; }
  int value_at(double t) const { return jump_ && *jump_ <= t ? 1 : 0; }
  // Left limit, N(t-).
  int value_before(double t) const { return jump_ && *jump_ < t ? 1 : 0; }

 private:
  std::optional<double> jump_;
};

struct SubjectRecord {
  std::string id;
  int z = 0;
  std::vector<double> x;
  std::optional<double> l_time;
  double t1 = 0.0;
  bool delta1 = false;
  double t2 = 0.0;
  bool delta2 = false;

  CountingPath confounder() const { return CountingPath(l_time); }
  CountingPath intermediate() const {
    return CountingPath(delta1 ? std::optional<double>(t1) : std::nullopt);
  }
  CountingPath terminal() const {
    return CountingPath(delta2 ? std::optional<double>(t2) : std::nullopt);
  }
  double exit_time() const { return t2; }
};

// Throws Error(schema) naming the row when a record violates an invariant.
void validate_record(const SubjectRecord& record, std::size_t expected_covariates);

class Dataset {
 public:
  Dataset() = default;

  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  const SubjectRecord& operator[](std::size_t i) const { return subjects_[i]; }
  std::size_t size() const { return subjects_.size(); }
  bool empty() const { return subjects_.empty(); }

  std::size_t covariate_count() const { return covariate_names_.size(); }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::span<const std::size_t> arm(int z) const { return arms_.at(static_cast<std::size_t>(z)); }
  std::size_t arm_size(int z) const { return arm(z).size(); }

  TieOrder tie_order() const { return tie_order_; }

  // True when every covariate column has mean zero to 1e-8. Covariates are
  // never rescaled by the library; the flag is informational.
  bool covariates_centered() const { return centered_; }

  // Subset (with repetition) used by the bootstrap. Ids are suffixed so they
  // stay unique.
  Dataset resample(std::span<const std::size_t> indices) const;

  friend Dataset build_dataset(std::vector<SubjectRecord> rows,
                               std::vector<std::string> covariate_names,
                               TieOrder tie_order);

 private:
  std::vector<SubjectRecord> subjects_;
  std::vector<std::string> covariate_names_;
  std::array<std::vector<std::size_t>, 2> arms_;
  TieOrder tie_order_ = TieOrder::confounder_first;
  bool centered_ = false;
};

// Validates every row and indexes the arms. When covariate_names is empty,
// generic names x1..xp are assigned from the first row.
Dataset build_dataset(std::vector<SubjectRecord> rows,
                      std::vector<std::string> covariate_names = {},
                      TieOrder tie_order = TieOrder::confounder_first);

struct TimeGrid {
  std::vector<double> times;  // strictly increasing, positive
  double horizon = 0.0;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

struct GridOptions {
  std::optional<int> arm;           // restrict to one arm; pooled otherwise
  bool include_exit_times = false;  // add censoring / exit times as well
};

// Sorted distinct confounder-jump, intermediate and terminal event times.
TimeGrid pooled_event_grid(const Dataset& data, const GridOptions& options = {});

// `count` equally spaced points on (0, horizon].
TimeGrid uniform_grid(double horizon, std::size_t count);

}  // namespace semicomp
