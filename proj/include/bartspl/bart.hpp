#pragma once

#include "bartspl/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

struct MoveProbabilities {
  double grow = 0.25;
  double prune = 0.25;
  double change = 0.40;
  double swap = 0.10;
};

/// Sum-of-trees prior and sampler settings.
struct BartHyperParams {
  int trees = 200;
  double alpha = 0.95;  // split probability alpha * (1 + depth)^-beta
  double beta = 2.0;
  double k = 2.0;       // leaf scale: sigma_mu = 0.5 / (k sqrt(J)) on the scaled outcome
  double nu = 3.0;      // residual variance prior degrees of freedom
  double q = 0.90;      // prior mass below the least-squares variance estimate
  MoveProbabilities moves;
  int max_cutpoints = 100;
  int min_leaf_size = 5;
  int burn_in = 250;
  int draws = 1000;
  /// Holds the residual variance (outcome scale) fixed instead of sampling it.
  std::optional<double> fixed_sigma2;

  void validate() const;
};

enum class ResponseKind { continuous, probit };

/// Candidate split values per design column. A unit goes left at rule
/// (v, c) iff x_v <= cut(v, c).
class CutGrid {
 public:
  CutGrid() = default;
  /// Midpoints between distinct values; thinned to `max_cuts` empirical
  /// quantiles when there are more.
  static CutGrid build(const Eigen::MatrixXd& design, int max_cuts);

  std::size_t variables() const { return cuts_.size(); }
  int cut_count(std::size_t v) const { return static_cast<int>(cuts_[v].size()); }
  double cut_value(std::size_t v, int c) const { return cuts_[v][static_cast<std::size_t>(c)]; }
  /// Number of cutpoints strictly below x, so x <= cut(v, c) iff bin <= c.
  std::uint16_t bin(std::size_t v, double x) const;
  /// Column-major (rows x variables) bins.
  std::vector<std::uint16_t> bin_rows(const Eigen::MatrixXd& rows) const;

 private:
  std::vector<std::vector<double>> cuts_;
};

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int var = -1;
  int cut = -1;
  int depth = 0;
  double mu = 0.0;
  bool live = true;

  bool is_leaf() const { return left < 0; }
};

class DecisionTree {
 public:
  DecisionTree() { nodes_.push_back(TreeNode{}); }

  static constexpr int root = 0;

  const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  TreeNode& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  int capacity() const { return static_cast<int>(nodes_.size()); }

  std::vector<int> leaves() const;
  std::vector<int> internal_nodes() const;
  /// Internal nodes whose children are both leaves.
  std::vector<int> prunable_nodes() const;
  std::size_t leaf_count() const;
  std::size_t internal_count() const;
  bool is_prunable(int i) const;
  bool in_subtree(int i, int top) const;

  /// Turns a leaf into an internal node; returns the (left, right) children.
  std::pair<int, int> split(int leaf, int var, int cut);
  /// Turns an internal node with two leaf children back into a leaf.
  void collapse(int i);

  /// Leaf reached from `start` using precomputed bins; bin_of(v) gives the bin for variable v.
  template <class BinOf>
  int find_leaf(BinOf&& bin_of, int start = root) const {
    int i = start;
    while (!node(i).is_leaf()) {
      const auto& n = node(i);
      i = bin_of(n.var) <= n.cut ? n.left : n.right;
    }
    return i;
  }

  /// Evaluation on raw covariate values, independent of any bin cache.
  double evaluate(const double* row, Eigen::Index stride, const CutGrid& grid) const;

  /// Canonical string of the structure, e.g. "[0<=3 . .]" (leaves are ".").
  std::string signature() const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<int> free_;
};

/// A frozen forest (one posterior draw) that can predict new rows.
struct ForestDraw {
  std::vector<DecisionTree> trees;
  CutGrid grid;
  ResponseKind kind = ResponseKind::continuous;
  double center = 0.0;  // outcome = center + scale * sum (continuous); offset + sum (probit)
  double scale = 1.0;
  double sigma2 = 1.0;  // outcome-scale residual variance

  /// Sum of trees on the outcome scale (latent scale for probit).
  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const;
};

enum class PredictMode { point, draw };

class BartModel {
 public:
  /// Initializes J stumps with mu = mean(scaled y) / J and the residual variance
  /// at its least-squares estimate. `response` is the outcome (continuous) or a
  /// 0/1 vector (probit).
  BartModel(Eigen::MatrixXd design, std::span<const double> response, const BartHyperParams& hyper,
            ResponseKind kind = ResponseKind::continuous);

  /// One backfitting pass over all trees followed by the variance update
  /// (continuous), or a latent-utility redraw followed by the tree pass (probit).
  void sweep(Rng& rng);

  ResponseKind kind() const { return kind_; }
  std::size_t size() const { return n_; }
  std::size_t tree_count() const { return trees_.size(); }
  const DecisionTree& tree(std::size_t j) const { return trees_[j]; }
  const CutGrid& grid() const { return grid_; }
  const BartHyperParams& hyper() const { return hyper_; }

  /// Residual variance on the outcome scale (1 for probit).
  double sigma2() const;
  /// Current sum-of-trees at the training rows, outcome (or latent) scale.
  std::vector<double> fitted() const;

  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const;
  /// Point mode: sum of trees. Draw mode: adds N(0, sigma2) (continuous) or
  /// maps through the normal CDF (probit).
  Eigen::VectorXd predict(const Eigen::MatrixXd& rows, PredictMode mode, Rng& rng) const;
  ForestDraw snapshot() const;

  /// Registers rows whose sum-of-trees is maintained incrementally through
  /// every subsequent sweep. Returns a handle for tracked_fit.
  std::size_t track_rows(const Eigen::MatrixXd& rows);
  /// Current fit at tracked rows, outcome (or latent) scale.
  std::vector<double> tracked_fit(std::size_t handle) const;

  // Internal-scale views, used by diagnostics and tests.
  double sigma_mu() const { return sigma_mu_; }
  double internal_sigma2() const { return sigma2_; }
  std::span<const double> internal_response() const { return y_; }
  /// V_j = y - sum_{l != j} g_l from the running caches.
  std::vector<double> partial_residual(std::size_t j) const;
  /// Same quantity recomputed by evaluating every other tree on raw covariates.
  std::vector<double> partial_residual_from_scratch(std::size_t j) const;
  std::size_t min_leaf_count() const;

  struct MoveStats {
    std::size_t proposed[4] = {0, 0, 0, 0};  // grow, prune, change, swap
    std::size_t accepted[4] = {0, 0, 0, 0};
  };
  const MoveStats& move_stats() const { return stats_; }

 private:
  struct Tracked {
    std::size_t rows = 0;
    std::vector<std::uint16_t> bins;   // column-major
    std::vector<std::uint32_t> leaf;   // trees x rows
    std::vector<double> fit;           // internal scale
  };
  using Ranges = std::vector<std::pair<int, int>>;

  void update_tree(std::size_t j, Rng& rng);
  bool propose(std::size_t j, Rng& rng);
  bool propose_grow(std::size_t j, Rng& rng);
  bool propose_prune(std::size_t j, Rng& rng);
  bool propose_change(std::size_t j, Rng& rng);
  bool propose_swap(std::size_t j, Rng& rng);
  /// Re-routes training units under `top` through `candidate` and evaluates the move.
  bool accept_restructure(std::size_t j, DecisionTree& candidate, int top, double log_proposal_ratio,
                          Rng& rng);
  void draw_sigma2(Rng& rng);
  void draw_latent(Rng& rng);

  Ranges ranges_at(const DecisionTree& t, int node) const;
  double split_probability(int depth, bool splittable) const;
  double log_tree_prior(const DecisionTree& t) const;
  double leaf_loglik(double count, double sum) const;
  std::uint16_t bin(std::size_t v, std::size_t i) const { return bins_[v * n_ + i]; }
  double to_outcome(double internal) const;

  BartHyperParams hyper_;
  ResponseKind kind_;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  Eigen::MatrixXd design_;
  CutGrid grid_;
  std::vector<std::uint16_t> bins_;
  std::vector<double> y_;          // internal response (scaled y, or latent z - offset)
  std::vector<double> observed_;   // response as given
  double center_ = 0.0;
  double scale_ = 1.0;
  double sigma_mu_ = 0.0;
  double sigma2_ = 1.0;
  double lambda_ = 0.0;
  std::vector<DecisionTree> trees_;
  std::vector<std::uint32_t> leaf_of_;  // trees x n
  std::vector<double> fit_;             // internal sum of trees
  std::vector<Tracked> tracked_;
  MoveStats stats_;

  // scratch
  std::vector<double> resid_;
  std::vector<double> stat_n_;
  std::vector<double> stat_s_;
  std::vector<double> old_mu_;
  std::vector<std::uint32_t> new_leaf_;
  bool structure_changed_ = false;
};

/// bart_predict over a collection of draws: one row of the result per draw.
Eigen::MatrixXd predict_draws(const std::vector<ForestDraw>& draws, const Eigen::MatrixXd& rows,
                              PredictMode mode, Rng& rng);

/// Counterfactual outcome draw at tracked rows: fit + N(0, sigma2) per row.
std::vector<double> draw_missing_outcomes(const BartModel& model, std::size_t tracked_handle, Rng& rng);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace bartspl
