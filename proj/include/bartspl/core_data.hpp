#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

enum class OutcomeType { continuous, binary };
enum class ColumnKind { continuous, binary };

const char* to_string(OutcomeType t);
OutcomeType parse_outcome_type(const std::string& s);

/// Untyped table as read from an external source. Missing cells are NaN.
struct RawTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::optional<std::size_t> find(const std::string& name) const;
};

struct ValidationOptions {
  OutcomeType outcome_type = OutcomeType::continuous;
  /// Per-covariate kind overrides; unlisted columns are inferred.
  std::map<std::string, ColumnKind> kind_overrides;
};

class ObservationalDataset;

/// Checks a raw table against the `y`, `e`, covariates, optional `ps` schema.
/// Every column other than `y`, `e` and `ps` is a covariate, in table order.
/// Throws ValidationError.
ObservationalDataset validate_dataset(const RawTable& table, const ValidationOptions& options = {});

/// Observed outcome, binary exposure and covariates for N units. Immutable.
class ObservationalDataset {
 public:
  std::size_t size() const { return outcome_.size(); }
  std::size_t covariate_count() const { return static_cast<std::size_t>(covariates_.cols()); }
  std::size_t exposed_count() const;

  std::span<const double> outcome() const { return outcome_; }
  std::span<const std::uint8_t> exposure() const { return exposure_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<std::string>& covariate_names() const { return names_; }
  const std::vector<ColumnKind>& covariate_kinds() const { return kinds_; }
  OutcomeType outcome_type() const { return outcome_type_; }
  const std::optional<std::vector<double>>& provided_ps() const { return provided_ps_; }

  /// Inverse of validate_dataset: validate_dataset(d.to_table(), d.options()) == d.
  RawTable to_table() const;
  ValidationOptions options() const;

  bool operator==(const ObservationalDataset& other) const;

 private:
  friend ObservationalDataset validate_dataset(const RawTable&, const ValidationOptions&);
  ObservationalDataset() = default;

  std::vector<double> outcome_;
  std::vector<std::uint8_t> exposure_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> names_;
  std::vector<ColumnKind> kinds_;
  OutcomeType outcome_type_ = OutcomeType::continuous;
  std::optional<std::vector<double>> provided_ps_;
};

/// Per-iteration draws of individual and average effects.
/// Row m of delta_ro / delta_rn holds iteration m; columns follow the
/// ro_units / rn_units orderings (indices into the dataset).
struct PosteriorDraws {
  Eigen::MatrixXd delta_ro;
  Eigen::MatrixXd delta_rn;
  std::vector<double> delta_s;
  std::vector<double> delta_p;
  std::vector<std::size_t> ro_units;
  std::vector<std::size_t> rn_units;

  std::size_t iterations() const { return delta_s.size(); }
  /// Largest |delta_s[m] - mean(row m of [delta_ro, delta_rn])|.
  double max_sample_identity_error() const;
};

enum class Estimand { individual, sample, population, trimmed_sample, trimmed_population };
const char* to_string(Estimand e);

struct EstimateSummary {
  Estimand estimand = Estimand::sample;
  double point = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
};

}  // namespace bartspl
