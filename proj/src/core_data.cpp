#include "bartspl/core_data.hpp"

#include "bartspl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bartspl {

const char* to_string(OutcomeType t) {
  return t == OutcomeType::binary ? "binary" : "continuous";
}

OutcomeType parse_outcome_type(const std::string& s) {
  if (s == "continuous") return OutcomeType::continuous;
  if (s == "binary") return OutcomeType::binary;
  throw ValidationError("unknown outcome type '" + s + "' (expected continuous or binary)");
}

const char* to_string(Estimand e) {
  switch (e) {
    case Estimand::individual: return "individual";
    case Estimand::sample: return "sample";
    case Estimand::population: return "population";
    case Estimand::trimmed_sample: return "trimmed_sample";
    case Estimand::trimmed_population: return "trimmed_population";
  }
  return "?";
}

std::optional<std::size_t> RawTable::find(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

namespace {

bool is_zero_one(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
}

void require_complete(const std::vector<double>& col, const std::string& name) {
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (!std::isfinite(col[i])) {
      throw ValidationError("missing or non-finite value in column '" + name + "' at row " +
                            std::to_string(i + 1));
    }
  }
}

}  // namespace

ObservationalDataset validate_dataset(const RawTable& table, const ValidationOptions& options) {
  if (table.names.size() != table.columns.size()) {
    throw ValidationError("table has mismatched header and column counts");
  }
  for (const auto& col : table.columns) {
    if (col.size() != table.rows()) throw ValidationError("table columns have unequal lengths");
  }
  const auto y_col = table.find("y");
  if (!y_col) throw ValidationError("missing required column 'y'");
  const auto e_col = table.find("e");
  if (!e_col) throw ValidationError("missing required column 'e'");
  const auto ps_col = table.find("ps");

  const std::size_t n = table.rows();
  if (n < 2) throw ValidationError("need at least 2 units, got " + std::to_string(n));

  ObservationalDataset d;
  d.outcome_type_ = options.outcome_type;

  const auto& y = table.columns[*y_col];
  require_complete(y, "y");
  if (options.outcome_type == OutcomeType::binary && !is_zero_one(y)) {
    throw ValidationError("binary outcome column 'y' has values outside {0,1}");
  }
  d.outcome_ = y;

  const auto& e = table.columns[*e_col];
  require_complete(e, "e");
  if (!is_zero_one(e)) throw ValidationError("exposure column 'e' has values outside {0,1}");
  d.exposure_.resize(n);
  std::size_t exposed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.exposure_[i] = e[i] == 1.0 ? 1 : 0;
    exposed += d.exposure_[i];
  }
  if (exposed == 0) throw ValidationError("exposure group 1 empty");
  if (exposed == n) throw ValidationError("exposure group 0 empty");

  if (ps_col) {
    const auto& ps = table.columns[*ps_col];
    require_complete(ps, "ps");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(ps[i] > 0.0 && ps[i] < 1.0)) {
        throw ValidationError("propensity score column 'ps' must lie strictly inside (0,1); row " +
                              std::to_string(i + 1));
      }
    }
    d.provided_ps_ = ps;
  }

  std::vector<std::size_t> cov_cols;
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (c != *y_col && c != *e_col && (!ps_col || c != *ps_col)) cov_cols.push_back(c);
  }
  d.covariates_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cov_cols.size()));
  for (std::size_t k = 0; k < cov_cols.size(); ++k) {
    const auto& name = table.names[cov_cols[k]];
    const auto& col = table.columns[cov_cols[k]];
    require_complete(col, name);
    ColumnKind kind = is_zero_one(col) ? ColumnKind::binary : ColumnKind::continuous;
    if (const auto it = options.kind_overrides.find(name); it != options.kind_overrides.end()) {
      if (it->second == ColumnKind::binary && kind != ColumnKind::binary) {
        throw ValidationError("column '" + name + "' declared binary but has values outside {0,1}");
      }
      kind = it->second;
    }
    for (std::size_t i = 0; i < n; ++i) d.covariates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = col[i];
    d.names_.push_back(name);
    d.kinds_.push_back(kind);
  }
  return d;
}

std::size_t ObservationalDataset::exposed_count() const {
  return static_cast<std::size_t>(std::count(exposure_.begin(), exposure_.end(), std::uint8_t{1}));
}

RawTable ObservationalDataset::to_table() const {
  RawTable t;
  t.names.push_back("y");
  t.columns.push_back(outcome_);
  t.names.push_back("e");
  t.columns.emplace_back(exposure_.begin(), exposure_.end());
  for (std::size_t k = 0; k < names_.size(); ++k) {
    t.names.push_back(names_[k]);
    const auto col = covariates_.col(static_cast<Eigen::Index>(k));
    t.columns.emplace_back(col.data(), col.data() + col.size());
  }
  if (provided_ps_) {
    t.names.push_back("ps");
    t.columns.push_back(*provided_ps_);
  }
  return t;
}

ValidationOptions ObservationalDataset::options() const {
  ValidationOptions o;
  o.outcome_type = outcome_type_;
  for (std::size_t k = 0; k < names_.size(); ++k) o.kind_overrides[names_[k]] = kinds_[k];
  return o;
}

bool ObservationalDataset::operator==(const ObservationalDataset& other) const {
  return outcome_ == other.outcome_ && exposure_ == other.exposure_ &&
         covariates_.rows() == other.covariates_.rows() &&
         covariates_.cols() == other.covariates_.cols() && covariates_ == other.covariates_ &&
         names_ == other.names_ && kinds_ == other.kinds_ && outcome_type_ == other.outcome_type_ &&
         provided_ps_ == other.provided_ps_;
}

double PosteriorDraws::max_sample_identity_error() const {
  double worst = 0.0;
  const Eigen::Index n = delta_ro.cols() + delta_rn.cols();
  for (std::size_t m = 0; m < delta_s.size(); ++m) {
    const auto row = static_cast<Eigen::Index>(m);
    double sum = 0.0;
    if (delta_ro.cols() > 0) sum += delta_ro.row(row).sum();
    if (delta_rn.cols() > 0) sum += delta_rn.row(row).sum();
    worst = std::max(worst, std::abs(delta_s[m] - sum / static_cast<double>(n)));
  }
  return worst;
}

}  // namespace bartspl
