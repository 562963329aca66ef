#include "bartspl/bart.hpp"

#include "bartspl/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bartspl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kVarianceFloor = 1e-12;

enum Move { kGrow = 0, kPrune = 1, kChange = 2, kSwap = 3 };

double type7_quantile(const std::vector<double>& sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void BartHyperParams::validate() const {
  if (trees < 1) throw ValidationError("tree count J must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
  if (beta < 0.0) throw ValidationError("beta must be non-negative");
  if (!(k > 0.0) || !(nu > 0.0)) throw ValidationError("k and nu must be positive");
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("q must lie in (0,1)");
  const double total = moves.grow + moves.prune + moves.change + moves.swap;
  if (std::abs(total - 1.0) > 1e-9 || moves.grow <= 0.0 || moves.prune <= 0.0 || moves.change < 0.0 ||
      moves.swap < 0.0) {
    throw ValidationError("move probabilities must be non-negative and sum to 1");
  }
  if (max_cutpoints < 1 || max_cutpoints > 65535) throw ValidationError("max_cutpoints out of range");
  if (min_leaf_size < 1) throw ValidationError("min_leaf_size must be positive");
  if (burn_in < 0 || draws < 1) throw ValidationError("burn-in must be >= 0 and draws >= 1");
  if (fixed_sigma2 && !(*fixed_sigma2 > 0.0)) throw ValidationError("fixed sigma2 must be positive");
}

// ---------------------------------------------------------------------------
// CutGrid

CutGrid CutGrid::build(const Eigen::MatrixXd& design, int max_cuts) {
  CutGrid g;
  g.cuts_.resize(static_cast<std::size_t>(design.cols()));
  for (Eigen::Index v = 0; v < design.cols(); ++v) {
    std::vector<double> sorted(design.col(v).data(), design.col(v).data() + design.rows());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& cuts = g.cuts_[static_cast<std::size_t>(v)];
    if (distinct.size() < 2) continue;
    if (distinct.size() - 1 <= static_cast<std::size_t>(max_cuts)) {
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i) cuts.push_back(0.5 * (distinct[i] + distinct[i + 1]));
      continue;
    }
    for (int c = 1; c <= max_cuts; ++c) {
      const double value = type7_quantile(sorted, static_cast<double>(c) / (max_cuts + 1));
      if (value >= distinct.back()) continue;
      if (cuts.empty() || value > cuts.back()) cuts.push_back(value);
    }
  }
  return g;
}

std::uint16_t CutGrid::bin(std::size_t v, double x) const {
  const auto& c = cuts_[v];
  return static_cast<std::uint16_t>(std::lower_bound(c.begin(), c.end(), x) - c.begin());
}

std::vector<std::uint16_t> CutGrid::bin_rows(const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != variables()) {
    throw ValidationError("design width mismatch: expected " + std::to_string(variables()) +
                          " columns, got " + std::to_string(rows.cols()));
  }
  const auto n = static_cast<std::size_t>(rows.rows());
  std::vector<std::uint16_t> out(n * variables());
  for (std::size_t v = 0; v < variables(); ++v) {
    for (std::size_t i = 0; i < n; ++i) {
      out[v * n + i] = bin(v, rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DecisionTree

std::vector<int> DecisionTree::leaves() const {
  std::vector<int> out;
  for (int i = 0; i < capacity(); ++i) {
    if (node(i).live && node(i).is_leaf()) out.push_back(i);
  }
  return out;
}

std::vector<int> DecisionTree::internal_nodes() const {
  std::vector<int> out;
  for (int i = 0; i < capacity(); ++i) {
    if (node(i).live && !node(i).is_leaf()) out.push_back(i);
  }
  return out;
}

bool DecisionTree::is_prunable(int i) const {
  const auto& n = node(i);
  return n.live && !n.is_leaf() && node(n.left).is_leaf() && node(n.right).is_leaf();
}

std::vector<int> DecisionTree::prunable_nodes() const {
  std::vector<int> out;
  for (int i = 0; i < capacity(); ++i) {
    if (is_prunable(i)) out.push_back(i);
  }
  return out;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t c = 0;
  for (const auto& n : nodes_) c += (n.live && n.is_leaf()) ? 1 : 0;
  return c;
}

std::size_t DecisionTree::internal_count() const {
  std::size_t c = 0;
  for (const auto& n : nodes_) c += (n.live && !n.is_leaf()) ? 1 : 0;
  return c;
}

bool DecisionTree::in_subtree(int i, int top) const {
  while (i >= 0) {
    if (i == top) return true;
    i = node(i).parent;
  }
  return false;
}

std::pair<int, int> DecisionTree::split(int leaf, int var, int cut) {
  int kids[2];
  for (int& k : kids) {
    if (!free_.empty()) {
      k = free_.back();
      free_.pop_back();
    } else {
      k = capacity();
      nodes_.emplace_back();
    }
  }
  const auto depth = node(leaf).depth + 1;
  const auto mu = node(leaf).mu;
  for (int k : kids) node(k) = TreeNode{leaf, -1, -1, -1, -1, depth, mu, true};
  auto& n = node(leaf);
  n.left = kids[0];
  n.right = kids[1];
  n.var = var;
  n.cut = cut;
  return {kids[0], kids[1]};
}

void DecisionTree::collapse(int i) {
  auto& n = node(i);
  for (int k : {n.left, n.right}) {
    node(k).live = false;
    free_.push_back(k);
  }
  n.left = n.right = -1;
  n.var = n.cut = -1;
}

double DecisionTree::evaluate(const double* row, Eigen::Index stride, const CutGrid& grid) const {
  int i = root;
  while (!node(i).is_leaf()) {
    const auto& n = node(i);
    const double x = row[static_cast<Eigen::Index>(n.var) * stride];
    i = x <= grid.cut_value(static_cast<std::size_t>(n.var), n.cut) ? n.left : n.right;
  }
  return node(i).mu;
}

std::string DecisionTree::signature() const {
  auto rec = [this](auto&& self, int i) -> std::string {
    const auto& n = node(i);
    if (n.is_leaf()) return ".";
    return "[" + std::to_string(n.var) + "<=" + std::to_string(n.cut) + " " + self(self, n.left) + " " +
           self(self, n.right) + "]";
  };
  return rec(rec, root);
}

// ---------------------------------------------------------------------------
// ForestDraw

Eigen::VectorXd ForestDraw::predict(const Eigen::MatrixXd& rows) const {
  const auto bins = grid.bin_rows(rows);
  const auto n = static_cast<std::size_t>(rows.rows());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows.rows());
  for (const auto& t : trees) {
    for (std::size_t i = 0; i < n; ++i) {
      const int leaf = t.find_leaf([&](int v) { return bins[static_cast<std::size_t>(v) * n + i]; });
      out[static_cast<Eigen::Index>(i)] += t.node(leaf).mu;
    }
  }
  if (kind == ResponseKind::continuous) return (center + scale * out.array()).matrix();
  return (center + out.array()).matrix();
}

Eigen::MatrixXd predict_draws(const std::vector<ForestDraw>& draws, const Eigen::MatrixXd& rows,
                              PredictMode mode, Rng& rng) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(draws.size()), rows.rows());
  for (std::size_t m = 0; m < draws.size(); ++m) {
    Eigen::VectorXd f = draws[m].predict(rows);
    if (mode == PredictMode::draw) {
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        f[i] = draws[m].kind == ResponseKind::continuous ? f[i] + std::sqrt(draws[m].sigma2) * rng.normal()
                                                         : normal_cdf(f[i]);
      }
    }
    out.row(static_cast<Eigen::Index>(m)) = f.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// BartModel

BartModel::BartModel(Eigen::MatrixXd design, std::span<const double> response, const BartHyperParams& hyper,
                     ResponseKind kind)
    : hyper_(hyper), kind_(kind), design_(std::move(design)) {
  hyper_.validate();
  n_ = static_cast<std::size_t>(design_.rows());
  p_ = static_cast<std::size_t>(design_.cols());
  if (n_ == 0) throw ValidationError("empty training set");
  if (response.size() != n_) throw ValidationError("response length does not match design rows");
  if (p_ == 0) throw ValidationError("design has no columns");

  grid_ = CutGrid::build(design_, hyper_.max_cutpoints);
  bins_ = grid_.bin_rows(design_);
  observed_.assign(response.begin(), response.end());
  const auto J = static_cast<std::size_t>(hyper_.trees);
  const double sqrt_j = std::sqrt(static_cast<double>(J));

  y_.resize(n_);
  if (kind_ == ResponseKind::continuous) {
    const auto [mn, mx] = std::minmax_element(observed_.begin(), observed_.end());
    const double range = *mx - *mn;
    center_ = 0.5 * (*mx + *mn);
    scale_ = range > 0.0 ? range : 1.0;
    for (std::size_t i = 0; i < n_; ++i) y_[i] = (observed_[i] - center_) / scale_;
    sigma_mu_ = 0.5 / (hyper_.k * sqrt_j);

    // Least-squares residual variance on the scaled outcome.
    double sigma_hat2 = 0.0;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(p_ + 1));
    A.col(0).setOnes();
    A.rightCols(static_cast<Eigen::Index>(p_)) = design_;
    const Eigen::Map<const Eigen::VectorXd> ys(y_.data(), static_cast<Eigen::Index>(n_));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const auto rank = static_cast<std::size_t>(qr.rank());
    if (n_ > rank && n_ > p_) {
      const Eigen::VectorXd resid = ys - A * qr.solve(ys);
      sigma_hat2 = resid.squaredNorm() / static_cast<double>(n_ - rank);
    } else if (n_ > 1) {
      sigma_hat2 = (ys.array() - ys.mean()).square().sum() / static_cast<double>(n_ - 1);
    }
    sigma_hat2 = std::max(sigma_hat2, kVarianceFloor);
    const boost::math::chi_squared chi(hyper_.nu);
    lambda_ = sigma_hat2 * boost::math::quantile(chi, 1.0 - hyper_.q) / hyper_.nu;
    sigma2_ = hyper_.fixed_sigma2 ? *hyper_.fixed_sigma2 / (scale_ * scale_) : sigma_hat2;
  } else {
    double mean = 0.0;
    for (double v : observed_) {
      if (v != 0.0 && v != 1.0) throw ValidationError("probit response must be 0/1");
      mean += v;
    }
    mean /= static_cast<double>(n_);
    const double clamped = std::clamp(mean, 0.5 / static_cast<double>(n_), 1.0 - 0.5 / static_cast<double>(n_));
    center_ = boost::math::quantile(boost::math::normal(), clamped);
    scale_ = 1.0;
    std::fill(y_.begin(), y_.end(), 0.0);
    sigma_mu_ = 3.0 / (hyper_.k * sqrt_j);
    sigma2_ = 1.0;
  }

  const double mean_y = std::accumulate(y_.begin(), y_.end(), 0.0) / static_cast<double>(n_);
  trees_.assign(J, DecisionTree{});
  for (auto& t : trees_) t.node(DecisionTree::root).mu = mean_y / static_cast<double>(J);
  leaf_of_.assign(J * n_, 0);
  fit_.assign(n_, trees_.front().node(0).mu * static_cast<double>(J));
  resid_.resize(n_);
  new_leaf_.resize(n_);
}

double BartModel::to_outcome(double internal) const {
  return kind_ == ResponseKind::continuous ? center_ + scale_ * internal : center_ + internal;
}

double BartModel::sigma2() const {
  return kind_ == ResponseKind::continuous ? sigma2_ * scale_ * scale_ : 1.0;
}

std::vector<double> BartModel::fitted() const {
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = to_outcome(fit_[i]);
  return out;
}

Eigen::VectorXd BartModel::predict(const Eigen::MatrixXd& rows) const { return snapshot().predict(rows); }

Eigen::VectorXd BartModel::predict(const Eigen::MatrixXd& rows, PredictMode mode, Rng& rng) const {
  Eigen::VectorXd f = predict(rows);
  if (mode == PredictMode::point) return f;
  const double sd = std::sqrt(sigma2());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    f[i] = kind_ == ResponseKind::continuous ? f[i] + sd * rng.normal() : normal_cdf(f[i]);
  }
  return f;
}

ForestDraw BartModel::snapshot() const {
  return ForestDraw{trees_, grid_, kind_, center_, scale_, sigma2()};
}

std::size_t BartModel::track_rows(const Eigen::MatrixXd& rows) {
  Tracked t;
  t.rows = static_cast<std::size_t>(rows.rows());
  t.bins = grid_.bin_rows(rows);
  t.leaf.resize(trees_.size() * t.rows);
  t.fit.assign(t.rows, 0.0);
  for (std::size_t j = 0; j < trees_.size(); ++j) {
    for (std::size_t r = 0; r < t.rows; ++r) {
      const int leaf = trees_[j].find_leaf([&](int v) { return t.bins[static_cast<std::size_t>(v) * t.rows + r]; });
      t.leaf[j * t.rows + r] = static_cast<std::uint32_t>(leaf);
      t.fit[r] += trees_[j].node(leaf).mu;
    }
  }
  tracked_.push_back(std::move(t));
  return tracked_.size() - 1;
}

std::vector<double> BartModel::tracked_fit(std::size_t handle) const {
  const auto& t = tracked_.at(handle);
  std::vector<double> out(t.rows);
  for (std::size_t r = 0; r < t.rows; ++r) out[r] = to_outcome(t.fit[r]);
  return out;
}

std::vector<double> BartModel::partial_residual(std::size_t j) const {
  std::vector<double> out(n_);
  const auto* leaf = &leaf_of_[j * n_];
  for (std::size_t i = 0; i < n_; ++i) out[i] = y_[i] - fit_[i] + trees_[j].node(static_cast<int>(leaf[i])).mu;
  return out;
}

std::vector<double> BartModel::partial_residual_from_scratch(std::size_t j) const {
  std::vector<double> out(n_);
  const auto stride = static_cast<Eigen::Index>(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    double others = 0.0;
    for (std::size_t l = 0; l < trees_.size(); ++l) {
      if (l != j) others += trees_[l].evaluate(design_.data() + i, stride, grid_);
    }
    out[i] = y_[i] - others;
  }
  return out;
}

std::size_t BartModel::min_leaf_count() const {
  std::size_t best = n_;
  std::vector<std::size_t> counts;
  for (std::size_t j = 0; j < trees_.size(); ++j) {
    counts.assign(static_cast<std::size_t>(trees_[j].capacity()), 0);
    for (std::size_t i = 0; i < n_; ++i) ++counts[leaf_of_[j * n_ + i]];
    for (int leaf : trees_[j].leaves()) best = std::min(best, counts[static_cast<std::size_t>(leaf)]);
  }
  return best;
}

void BartModel::sweep(Rng& rng) {
  if (kind_ == ResponseKind::probit) draw_latent(rng);
  for (std::size_t j = 0; j < trees_.size(); ++j) update_tree(j, rng);
  if (kind_ == ResponseKind::continuous && !hyper_.fixed_sigma2) draw_sigma2(rng);
}

void BartModel::draw_latent(Rng& rng) {
  for (std::size_t i = 0; i < n_; ++i) {
    const double z = rng.truncated_normal_unit(center_ + fit_[i], observed_[i] == 1.0);
    y_[i] = z - center_;
  }
}

void BartModel::draw_sigma2(Rng& rng) {
  double ssr = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    const double r = y_[i] - fit_[i];
    ssr += r * r;
  }
  const double shape = 0.5 * (hyper_.nu + static_cast<double>(n_));
  const double scale = 0.5 * (hyper_.nu * lambda_ + ssr);
  sigma2_ = std::max(rng.inverse_gamma(shape, scale), kVarianceFloor);
}

double BartModel::leaf_loglik(double count, double sum) const {
  const double t2 = sigma_mu_ * sigma_mu_;
  const double s2 = sigma2_;
  return -0.5 * std::log1p(count * t2 / s2) + t2 * sum * sum / (2.0 * s2 * (s2 + count * t2));
}

double BartModel::split_probability(int depth, bool splittable) const {
  return splittable ? hyper_.alpha * std::pow(1.0 + depth, -hyper_.beta) : 0.0;
}

BartModel::Ranges BartModel::ranges_at(const DecisionTree& t, int node) const {
  Ranges r(p_);
  for (std::size_t v = 0; v < p_; ++v) r[v] = {0, grid_.cut_count(v) - 1};
  int child = node;
  int par = t.node(node).parent;
  while (par >= 0) {
    const auto& pn = t.node(par);
    auto& rv = r[static_cast<std::size_t>(pn.var)];
    if (child == pn.left) {
      rv.second = std::min(rv.second, pn.cut - 1);
    } else {
      rv.first = std::max(rv.first, pn.cut + 1);
    }
    child = par;
    par = pn.parent;
  }
  return r;
}

namespace {

bool any_splittable(const std::vector<std::pair<int, int>>& r) {
  return std::any_of(r.begin(), r.end(), [](const auto& x) { return x.first <= x.second; });
}

std::size_t splittable_count(const std::vector<std::pair<int, int>>& r) {
  return static_cast<std::size_t>(std::count_if(r.begin(), r.end(), [](const auto& x) { return x.first <= x.second; }));
}

}  // namespace

double BartModel::log_tree_prior(const DecisionTree& t) const {
  double lp = 0.0;
  std::vector<std::pair<int, Ranges>> stack;
  stack.emplace_back(DecisionTree::root, ranges_at(t, DecisionTree::root));
  while (!stack.empty()) {
    auto [i, r] = std::move(stack.back());
    stack.pop_back();
    const auto& n = t.node(i);
    const bool splittable = any_splittable(r);
    const double pg = split_probability(n.depth, splittable);
    if (n.is_leaf()) {
      lp += std::log1p(-pg);
      continue;
    }
    const auto& rv = r[static_cast<std::size_t>(n.var)];
    if (!splittable || n.cut < rv.first || n.cut > rv.second) return kNegInf;
    lp += std::log(pg) - std::log(static_cast<double>(splittable_count(r))) -
          std::log(static_cast<double>(rv.second - rv.first + 1));
    Ranges left = r, right = r;
    left[static_cast<std::size_t>(n.var)].second = n.cut - 1;
    right[static_cast<std::size_t>(n.var)].first = n.cut + 1;
    stack.emplace_back(n.left, std::move(left));
    stack.emplace_back(n.right, std::move(right));
  }
  return lp;
}

void BartModel::update_tree(std::size_t j, Rng& rng) {
  DecisionTree& t = trees_[j];
  std::uint32_t* leaf = &leaf_of_[j * n_];
  const auto cap = static_cast<std::size_t>(t.capacity());
  stat_n_.assign(cap, 0.0);
  stat_s_.assign(cap, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    const double r = y_[i] - fit_[i] + t.node(static_cast<int>(leaf[i])).mu;
    resid_[i] = r;
    stat_n_[leaf[i]] += 1.0;
    stat_s_[leaf[i]] += r;
  }
  old_mu_.resize(cap);
  for (std::size_t k = 0; k < cap; ++k) old_mu_[k] = t.node(static_cast<int>(k)).mu;

  structure_changed_ = propose(j, rng);

  const double t2 = sigma_mu_ * sigma_mu_;
  for (int l : t.leaves()) {
    const auto k = static_cast<std::size_t>(l);
    const double denom = sigma2_ + stat_n_[k] * t2;
    const double mean = t2 * stat_s_[k] / denom;
    const double sd = std::sqrt(sigma2_ * t2 / denom);
    t.node(l).mu = mean + sd * rng.normal();
  }

  for (std::size_t i = 0; i < n_; ++i) fit_[i] = y_[i] - resid_[i] + t.node(static_cast<int>(leaf[i])).mu;

  for (auto& tr : tracked_) {
    std::uint32_t* tl = &tr.leaf[j * tr.rows];
    for (std::size_t r = 0; r < tr.rows; ++r) {
      std::uint32_t now = tl[r];
      if (structure_changed_) {
        now = static_cast<std::uint32_t>(
            t.find_leaf([&](int v) { return tr.bins[static_cast<std::size_t>(v) * tr.rows + r]; }));
      }
      tr.fit[r] += t.node(static_cast<int>(now)).mu - old_mu_[tl[r]];
      tl[r] = now;
    }
  }
}

bool BartModel::propose(std::size_t j, Rng& rng) {
  const DecisionTree& t = trees_[j];
  Move move = kGrow;
  if (t.internal_count() > 0) {
    const auto& m = hyper_.moves;
    const double u = rng.uniform();
    if (u < m.grow) {
      move = kGrow;
    } else if (u < m.grow + m.prune) {
      move = kPrune;
    } else if (u < m.grow + m.prune + m.change) {
      move = kChange;
    } else {
      move = kSwap;
    }
  }
  ++stats_.proposed[move];
  bool accepted = false;
  switch (move) {
    case kGrow: accepted = propose_grow(j, rng); break;
    case kPrune: accepted = propose_prune(j, rng); break;
    case kChange: accepted = propose_change(j, rng); break;
    case kSwap: accepted = propose_swap(j, rng); break;
  }
  if (accepted) ++stats_.accepted[move];
  return accepted;
}

bool BartModel::propose_grow(std::size_t j, Rng& rng) {
  DecisionTree& t = trees_[j];
  std::uint32_t* leaf = &leaf_of_[j * n_];
  const auto leaves = t.leaves();
  const int target = leaves[rng.index(leaves.size())];
  auto ranges = ranges_at(t, target);
  std::vector<int> vars;
  for (std::size_t v = 0; v < p_; ++v) {
    if (ranges[v].first <= ranges[v].second) vars.push_back(static_cast<int>(v));
  }
  if (vars.empty()) return false;
  const int var = vars[rng.index(vars.size())];
  const auto [lo, hi] = ranges[static_cast<std::size_t>(var)];
  const int cut = lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));

  const auto tk = static_cast<std::size_t>(target);
  double nl = 0.0, sl = 0.0;
  const std::uint16_t* col = &bins_[static_cast<std::size_t>(var) * n_];
  for (std::size_t i = 0; i < n_; ++i) {
    if (leaf[i] == tk && col[i] <= cut) {
      nl += 1.0;
      sl += resid_[i];
    }
  }
  const double nr = stat_n_[tk] - nl;
  const double sr = stat_s_[tk] - sl;
  const auto min_leaf = static_cast<double>(hyper_.min_leaf_size);
  if (nl < min_leaf || nr < min_leaf) return false;

  const int depth = t.node(target).depth;
  auto left_r = ranges, right_r = ranges;
  left_r[static_cast<std::size_t>(var)].second = cut - 1;
  right_r[static_cast<std::size_t>(var)].first = cut + 1;
  const double pg = split_probability(depth, true);
  const double pg_l = split_probability(depth + 1, any_splittable(left_r));
  const double pg_r = split_probability(depth + 1, any_splittable(right_r));

  const bool stump = t.internal_count() == 0;
  const double p_grow = stump ? 1.0 : hyper_.moves.grow;
  const int parent = t.node(target).parent;
  const std::size_t nogs_after = t.prunable_nodes().size() + 1 - (parent >= 0 && t.is_prunable(parent) ? 1 : 0);

  const double log_ratio = std::log(hyper_.moves.prune / static_cast<double>(nogs_after)) -
                           std::log(p_grow / static_cast<double>(leaves.size())) + std::log(pg) +
                           std::log1p(-pg_l) + std::log1p(-pg_r) - std::log1p(-pg) + leaf_loglik(nl, sl) +
                           leaf_loglik(nr, sr) - leaf_loglik(stat_n_[tk], stat_s_[tk]);
  if (std::log(rng.uniform()) >= log_ratio) return false;

  const auto [l, r] = t.split(target, var, cut);
  const auto need = static_cast<std::size_t>(t.capacity());
  if (stat_n_.size() < need) {
    stat_n_.resize(need, 0.0);
    stat_s_.resize(need, 0.0);
  }
  stat_n_[static_cast<std::size_t>(l)] = nl;
  stat_s_[static_cast<std::size_t>(l)] = sl;
  stat_n_[static_cast<std::size_t>(r)] = nr;
  stat_s_[static_cast<std::size_t>(r)] = sr;
  for (std::size_t i = 0; i < n_; ++i) {
    if (leaf[i] == tk) leaf[i] = static_cast<std::uint32_t>(col[i] <= cut ? l : r);
  }
  return true;
}

bool BartModel::propose_prune(std::size_t j, Rng& rng) {
  DecisionTree& t = trees_[j];
  std::uint32_t* leaf = &leaf_of_[j * n_];
  const auto nogs = t.prunable_nodes();
  if (nogs.empty()) return false;
  const int target = nogs[rng.index(nogs.size())];
  const auto& tn = t.node(target);
  const auto lk = static_cast<std::size_t>(tn.left);
  const auto rk = static_cast<std::size_t>(tn.right);
  const double n = stat_n_[lk] + stat_n_[rk];
  const double s = stat_s_[lk] + stat_s_[rk];

  auto ranges = ranges_at(t, target);
  auto left_r = ranges, right_r = ranges;
  left_r[static_cast<std::size_t>(tn.var)].second = tn.cut - 1;
  right_r[static_cast<std::size_t>(tn.var)].first = tn.cut + 1;
  const double pg = split_probability(tn.depth, true);
  const double pg_l = split_probability(tn.depth + 1, any_splittable(left_r));
  const double pg_r = split_probability(tn.depth + 1, any_splittable(right_r));

  const std::size_t leaves_after = t.leaf_count() - 1;
  const double p_grow_after = t.internal_count() == 1 ? 1.0 : hyper_.moves.grow;
  const double log_ratio = std::log(p_grow_after / static_cast<double>(leaves_after)) -
                           std::log(hyper_.moves.prune / static_cast<double>(nogs.size())) + std::log1p(-pg) -
                           std::log(pg) - std::log1p(-pg_l) - std::log1p(-pg_r) + leaf_loglik(n, s) -
                           leaf_loglik(stat_n_[lk], stat_s_[lk]) - leaf_loglik(stat_n_[rk], stat_s_[rk]);
  if (std::log(rng.uniform()) >= log_ratio) return false;

  t.collapse(target);
  const auto tk = static_cast<std::size_t>(target);
  stat_n_[tk] = n;
  stat_s_[tk] = s;
  for (std::size_t i = 0; i < n_; ++i) {
    if (leaf[i] == lk || leaf[i] == rk) leaf[i] = static_cast<std::uint32_t>(target);
  }
  return true;
}

bool BartModel::propose_change(std::size_t j, Rng& rng) {
  const DecisionTree& t = trees_[j];
  const auto internal = t.internal_nodes();
  if (internal.empty()) return false;
  const int target = internal[rng.index(internal.size())];
  const auto ranges = ranges_at(t, target);
  std::vector<int> vars;
  for (std::size_t v = 0; v < p_; ++v) {
    if (ranges[v].first <= ranges[v].second) vars.push_back(static_cast<int>(v));
  }
  if (vars.empty()) return false;
  const int var = vars[rng.index(vars.size())];
  const auto [lo, hi] = ranges[static_cast<std::size_t>(var)];
  const int cut = lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
  const auto& old = t.node(target);
  if (var == old.var && cut == old.cut) return false;

  const auto& old_r = ranges[static_cast<std::size_t>(old.var)];
  const double log_q = std::log(static_cast<double>(hi - lo + 1)) -
                       std::log(static_cast<double>(old_r.second - old_r.first + 1));
  DecisionTree candidate = t;
  candidate.node(target).var = var;
  candidate.node(target).cut = cut;
  return accept_restructure(j, candidate, target, log_q, rng);
}

bool BartModel::propose_swap(std::size_t j, Rng& rng) {
  const DecisionTree& t = trees_[j];
  std::vector<int> parents;
  for (int i : t.internal_nodes()) {
    const auto& n = t.node(i);
    if (!t.node(n.left).is_leaf() || !t.node(n.right).is_leaf()) parents.push_back(i);
  }
  if (parents.empty()) return false;
  const int parent = parents[rng.index(parents.size())];
  const auto& pn = t.node(parent);
  std::vector<int> kids;
  for (int c : {pn.left, pn.right}) {
    if (!t.node(c).is_leaf()) kids.push_back(c);
  }
  const int child = kids[rng.index(kids.size())];
  DecisionTree candidate = t;
  std::swap(candidate.node(parent).var, candidate.node(child).var);
  std::swap(candidate.node(parent).cut, candidate.node(child).cut);
  return accept_restructure(j, candidate, parent, 0.0, rng);
}

bool BartModel::accept_restructure(std::size_t j, DecisionTree& candidate, int top, double log_proposal_ratio,
                                   Rng& rng) {
  DecisionTree& t = trees_[j];
  std::uint32_t* leaf = &leaf_of_[j * n_];
  const double lp_new = log_tree_prior(candidate);
  if (lp_new == kNegInf) return false;
  const double lp_old = log_tree_prior(t);

  const auto cap = static_cast<std::size_t>(t.capacity());
  std::vector<char> affected(cap, 0);
  for (int l : t.leaves()) affected[static_cast<std::size_t>(l)] = t.in_subtree(l, top) ? 1 : 0;

  std::vector<double> nn(cap, 0.0), ns(cap, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    if (!affected[leaf[i]]) continue;
    const int nl = candidate.find_leaf([&](int v) { return bins_[static_cast<std::size_t>(v) * n_ + i]; }, top);
    new_leaf_[i] = static_cast<std::uint32_t>(nl);
    nn[static_cast<std::size_t>(nl)] += 1.0;
    ns[static_cast<std::size_t>(nl)] += resid_[i];
  }
  double ll_old = 0.0, ll_new = 0.0;
  const auto min_leaf = static_cast<double>(hyper_.min_leaf_size);
  for (std::size_t k = 0; k < cap; ++k) {
    if (!affected[k]) continue;
    if (nn[k] < min_leaf) return false;
    ll_old += leaf_loglik(stat_n_[k], stat_s_[k]);
    ll_new += leaf_loglik(nn[k], ns[k]);
  }
  const double log_ratio = lp_new - lp_old + ll_new - ll_old + log_proposal_ratio;
  if (std::log(rng.uniform()) >= log_ratio) return false;

  t = std::move(candidate);
  for (std::size_t i = 0; i < n_; ++i) {
    if (affected[leaf[i]]) leaf[i] = new_leaf_[i];
  }
  for (std::size_t k = 0; k < cap; ++k) {
    if (!affected[k]) continue;
    stat_n_[k] = nn[k];
    stat_s_[k] = ns[k];
  }
  return true;
}

std::vector<double> draw_missing_outcomes(const BartModel& model, std::size_t tracked_handle, Rng& rng) {
  auto out = model.tracked_fit(tracked_handle);
  const double sd = std::sqrt(model.sigma2());
  for (double& v : out) v += sd * rng.normal();
  return out;
}

}  // namespace bartspl
