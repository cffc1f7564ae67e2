#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "exgnas/architecture.hpp"
#include "exgnas/evaluator.hpp"

namespace exgnas {

/// Tree depth -> component. Components that are inactive under the values
/// already fixed on a branch are skipped on that branch.
struct ComponentOrder {
  std::vector<Component> components;

  static ComponentOrder default_order() {
    using K = ComponentKind;
    return {{{K::NumGnnLayers},  {K::PreMlp},        {K::PreJknet},      {K::Jknet},        {K::Activation, 1},
             {K::Attention, 1},  {K::PreMlpEmb},     {K::PostMlpHidden}, {K::EmbSize, 1},   {K::Activation, 2},
             {K::Attention, 2},  {K::EmbSize, 2},    {K::Activation, 3}, {K::Attention, 3}, {K::EmbSize, 3},
             {K::PostMlpLayers}}};
  }
};

struct MctNode {
  int id = 0;
  int parent = -1;
  /// Position of `component` in the ComponentOrder; -1 for the root.
  int order_pos = -1;
  Component component{};
  int choice = -1;
  std::vector<int> children;
  std::uint64_t visits = 0;  // m: trials through this node or its descendants
  double score_sum = 0.0;    // sum of val_auc over those trials
  double time_sum = 0.0;     // sum of train_seconds over those trials

  bool is_root() const { return parent < 0; }
  double avg_score() const { return visits ? score_sum / static_cast<double>(visits) : 0.0; }
  double avg_time() const { return visits ? time_sum / static_cast<double>(visits) : 0.0; }
};

class MctTree {
 public:
  explicit MctTree(SearchSpace space = {}, ComponentOrder order = ComponentOrder::default_order())
      : space_(std::move(space)), order_(std::move(order)) {
    nodes_.push_back(MctNode{});
  }

  const SearchSpace& space() const { return space_; }
  const ComponentOrder& order() const { return order_; }
  const std::vector<MctNode>& nodes() const { return nodes_; }
  const MctNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  MctNode& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const MctNode& root() const { return nodes_.front(); }

  /// M: number of evaluated models.
  std::uint64_t total_models() const { return total_models_; }
  void set_total_models(std::uint64_t m) { total_models_ = m; }
  void count_model() { ++total_models_; }

  std::string label(const MctNode& n) const {
    if (n.is_root()) return "root";
    return n.component.name() + "=" + candidate_name(space_, n.component, static_cast<std::size_t>(n.choice));
  }

  std::vector<int> path_to(int id) const {
    std::vector<int> path;
    for (int cur = id; cur >= 0; cur = node(cur).parent) path.push_back(cur);
    return {path.rbegin(), path.rend()};
  }

  Assignment assignment(int id) const {
    Assignment a;
    for (int cur = id; cur > 0; cur = node(cur).parent) a.set(node(cur).component, node(cur).choice);
    return a;
  }

  /// Order position of the component that children of `id` would fix, if any.
  std::optional<int> next_position(int id) const {
    const Assignment a = assignment(id);
    for (int p = node(id).order_pos + 1; p < static_cast<int>(order_.components.size()); ++p) {
      const Component c = order_.components[static_cast<std::size_t>(p)];
      if (!a.is_set(c) && is_active(space_, a, c)) return p;
    }
    return std::nullopt;
  }

  /// Creates one unvisited child per candidate of the next component.
  /// Returns false when the node already has children or no component is left.
  bool expand(int id) {
    if (!node(id).children.empty()) return false;
    auto pos = next_position(id);
    if (!pos) return false;
    const Component c = order_.components[static_cast<std::size_t>(*pos)];
    const int depth_count = static_cast<int>(num_candidates(space_, c));
    for (int k = 0; k < depth_count; ++k) {
      MctNode child;
      child.id = static_cast<int>(nodes_.size());
      child.parent = id;
      child.order_pos = *pos;
      child.component = c;
      child.choice = k;
      nodes_.push_back(child);
      node(id).children.push_back(child.id);
    }
    return true;
  }

  std::size_t depth(int id) const { return path_to(id).size() - 1; }

  /// Raw node insertion, used when reading a serialized tree.
  MctNode& add_node(MctNode n) {
    n.id = static_cast<int>(nodes_.size());
    if (n.parent >= 0) node(n.parent).children.push_back(n.id);
    nodes_.push_back(n);
    return nodes_.back();
  }

 private:
  SearchSpace space_;
  ComponentOrder order_;
  std::vector<MctNode> nodes_;
  std::uint64_t total_models_ = 0;
};

/// Upper confidence bound of a node; +inf when unvisited. ln M is clamped at 0
/// so M in {0, 1} gives no exploration bonus.
inline double ucb(const MctNode& n, std::uint64_t total_models, double c) {
  if (n.visits == 0) return std::numeric_limits<double>::infinity();
  const double m = static_cast<double>(n.visits);
  const double log_m = total_models > 1 ? std::log(static_cast<double>(total_models)) : 0.0;
  return n.score_sum / m + c * std::sqrt(log_m / m);
}

/// Greedy descent by maximal ucb until a node without children; ties go to the
/// lowest child id.
inline std::vector<int> select_leaf(const MctTree& tree, double c) {
  std::vector<int> path{0};
  while (!tree.node(path.back()).children.empty()) {
    const auto& kids = tree.node(path.back()).children;
    int best = kids.front();
    double best_score = ucb(tree.node(best), tree.total_models(), c);
    for (std::size_t i = 1; i < kids.size(); ++i) {
      const double s = ucb(tree.node(kids[i]), tree.total_models(), c);
      if (s > best_score) {
        best_score = s;
        best = kids[i];
      }
    }
    path.push_back(best);
  }
  return path;
}

/// Fixes the parameters on the path and draws the rest uniformly, then applies
/// the JKNet-max width repair. The result is canonical.
template <typename Rng>
ArchitectureParams realize_architecture(const MctTree& tree, const std::vector<int>& path, Rng& rng) {
  return fill_random(tree.space(), tree.assignment(path.back()), rng);
}

/// Adds one trial to every node on the path, counts the model, and expands the
/// leaf once its visit count reaches theta. Returns whether it expanded.
inline bool update_tree(MctTree& tree, const std::vector<int>& path, const EvalResult& result, std::uint64_t theta) {
  for (int id : path) {
    auto& n = tree.node(id);
    ++n.visits;
    n.score_sum += result.val_auc;
    n.time_sum += result.train_seconds;
  }
  tree.count_model();
  const int leaf = path.back();
  if (tree.node(leaf).visits >= theta) return tree.expand(leaf);
  return false;
}

struct SearchConfig {
  double c = std::sqrt(2.0);
  std::uint64_t theta = 10;
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  SearchSpace space{};
  ComponentOrder order = ComponentOrder::default_order();
  /// When false, train_seconds is not accumulated in the tree, keeping exports
  /// independent of wall-clock time.
  bool record_time = true;

  void validate() const {
    if (!(c >= 0.0)) throw std::invalid_argument("c must be >= 0");
    if (theta < 1) throw std::invalid_argument("theta must be >= 1");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  }
};

struct TrialRecord {
  std::uint64_t trial = 0;
  int leaf = 0;
  std::uint64_t eval_seed = 0;
  ArchitectureParams architecture;
  EvalResult result;
};

struct SearchResult {
  ArchitectureParams best_architecture;
  EvalResult best_result;
  std::uint64_t best_trial = 0;
  std::uint64_t best_eval_seed = 0;
  MctTree tree;
  std::vector<TrialRecord> trials;
};

/// Seed handed to the evaluator for a given trial.
inline std::uint64_t trial_seed(std::uint64_t search_seed, std::uint64_t trial) {
  return splitmix64(search_seed ^ splitmix64(trial));
}

inline EvalResult evaluate_safely(const Evaluator& ev, const ArchitectureParams& a, std::uint64_t seed) {
  try {
    return ev.evaluate(a, seed);
  } catch (const std::exception& e) {
    EvalResult r;
    r.diverged = true;
    r.diagnostic = e.what();
    return r;
  }
}

/// Select leaf, realize, evaluate, update, track the best; repeated cfg.trials times.
inline SearchResult search(const Evaluator& ev, const SearchConfig& cfg) {
  cfg.validate();
  SearchResult out{{}, {}, 0, 0, MctTree(cfg.space, cfg.order), {}};
  std::mt19937_64 rng(cfg.seed);
  double best = -std::numeric_limits<double>::infinity();
  out.trials.reserve(cfg.trials);
  for (std::uint64_t t = 0; t < cfg.trials; ++t) {
    const auto path = select_leaf(out.tree, cfg.c);
    ArchitectureParams arch = realize_architecture(out.tree, path, rng);
    const std::uint64_t seed = trial_seed(cfg.seed, t);
    EvalResult r = evaluate_safely(ev, arch, seed);
    EvalResult for_tree = r;
    if (!cfg.record_time) for_tree.train_seconds = 0.0;
    if (!std::isfinite(for_tree.val_auc)) for_tree.val_auc = 0.0;
    update_tree(out.tree, path, for_tree, cfg.theta);
    if (best < r.val_auc) {
      best = r.val_auc;
      out.best_architecture = arch;
      out.best_result = r;
      out.best_trial = t;
      out.best_eval_seed = seed;
    }
    out.trials.push_back({t, path.back(), seed, std::move(arch), std::move(r)});
  }
  return out;
}

/// Baseline: every architecture drawn uniformly from the space.
inline SearchResult uniform_search(const Evaluator& ev, const SearchConfig& cfg) {
  cfg.validate();
  SearchResult out{{}, {}, 0, 0, MctTree(cfg.space, cfg.order), {}};
  std::mt19937_64 rng(cfg.seed);
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t t = 0; t < cfg.trials; ++t) {
    ArchitectureParams arch = fill_random(cfg.space, Assignment{}, rng);
    const std::uint64_t seed = trial_seed(cfg.seed, t);
    EvalResult r = evaluate_safely(ev, arch, seed);
    if (best < r.val_auc) {
      best = r.val_auc;
      out.best_architecture = arch;
      out.best_result = r;
      out.best_trial = t;
      out.best_eval_seed = seed;
    }
    out.trials.push_back({t, 0, seed, std::move(arch), std::move(r)});
  }
  return out;
}

}  // namespace exgnas
