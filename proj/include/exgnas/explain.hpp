#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exgnas/mcts.hpp"

namespace exgnas {

struct NodeStats {
  int id = 0;
  int parent = -1;
  std::string label;
  std::uint64_t visits = 0;
  double avg_auc = 0.0;
  double avg_time = 0.0;
};

/// Selection frequency of one component's values, in candidate order.
struct ComponentRatios {
  std::string component;
  std::vector<std::pair<std::string, double>> ratios;
  std::size_t samples = 0;
};

struct ImportanceReport {
  std::vector<NodeStats> nodes;
  std::vector<ComponentRatios> components;

  const ComponentRatios& at(const std::string& name) const {
    for (const auto& c : components)
      if (c.component == name) return c;
    throw std::out_of_range("no ratios for component " + name);
  }
};

namespace detail {

inline void tally(std::map<std::string, std::map<std::string, std::size_t>>& counts, const std::string& comp,
                  const std::string& value) {
  ++counts[comp][value];
}

}  // namespace detail

/// Per-node averages and per-component selection ratios over the evaluated
/// architectures. Per-layer components are reported both per layer
/// ("activation_1") and pooled over layers ("activation").
inline ImportanceReport importance_report(const MctTree& tree, std::span<const TrialRecord> trials) {
  if (tree.root().visits == 0 || trials.empty()) throw std::invalid_argument("importance report of an empty tree");
  ImportanceReport rep;
  for (const auto& n : tree.nodes())
    rep.nodes.push_back({n.id, n.parent, tree.label(n), n.visits, n.avg_score(), n.avg_time()});

  const SearchSpace& space = tree.space();
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& t : trials)
    for (auto c : all_components())
      if (auto v = value_name(t.architecture, c)) {
        detail::tally(counts, c.name(), *v);
        if (c.per_layer()) detail::tally(counts, c.name().substr(0, c.name().rfind('_')), *v);
      }

  auto emit = [&](const std::string& name, Component proto) {
    auto it = counts.find(name);
    if (it == counts.end()) return;
    ComponentRatios cr{name, {}, 0};
    for (const auto& [_, k] : it->second) cr.samples += k;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < num_candidates(space, proto); ++i) order.push_back(candidate_name(space, proto, i));
    for (const auto& [v, _] : it->second)
      if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
    for (const auto& v : order) {
      auto f = it->second.find(v);
      const double k = f == it->second.end() ? 0.0 : static_cast<double>(f->second);
      cr.ratios.emplace_back(v, k / static_cast<double>(cr.samples));
    }
    rep.components.push_back(std::move(cr));
  };
  for (auto c : all_components()) {
    if (c.per_layer() && c.layer == 1) emit(c.name().substr(0, c.name().rfind('_')), c);
    emit(c.name(), c);
  }
  return rep;
}

/// Plain-text rendering of the ratios.
inline std::string format_ratios(const ImportanceReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& c : rep.components) {
    os << c.component << ":";
    for (const auto& [v, r] : c.ratios) os << ' ' << v << '=' << r;
    os << '\n';
  }
  return os.str();
}

// Tree export -----------------------------------------------------------------

inline nlohmann::json node_to_json(const MctTree& tree, const MctNode& n) {
  nlohmann::json j;
  j["id"] = n.id;
  j["component"] = n.is_root() ? nlohmann::json(nullptr) : nlohmann::json(n.component.name());
  j["value"] = n.is_root() ? nlohmann::json(nullptr)
                           : nlohmann::json(candidate_name(tree.space(), n.component, static_cast<std::size_t>(n.choice)));
  j["m"] = n.visits;
  j["avg_auc"] = n.visits ? nlohmann::json(n.avg_score()) : nlohmann::json(nullptr);
  j["avg_time"] = n.visits ? nlohmann::json(n.avg_time()) : nlohmann::json(nullptr);
  j["score_sum"] = n.score_sum;
  j["time_sum"] = n.time_sum;
  auto kids = nlohmann::json::array();
  for (int c : n.children) kids.push_back(node_to_json(tree, tree.node(c)));
  j["children"] = kids;
  return j;
}

inline std::string export_tree_json(const MctTree& tree) {
  nlohmann::json j;
  j["total_models"] = tree.total_models();
  j["root"] = node_to_json(tree, tree.root());
  return j.dump(2) + "\n";
}

inline Component parse_component(const std::string& name) {
  for (auto c : all_components())
    if (c.name() == name) return c;
  throw std::invalid_argument("unknown component '" + name + "'");
}

/// Rebuilds a tree from export_tree_json output over the same search space.
inline MctTree parse_tree_json(const std::string& text, const SearchSpace& space = {},
                               const ComponentOrder& order = ComponentOrder::default_order()) {
  const auto j = nlohmann::json::parse(text);
  MctTree tree(space, order);
  tree.set_total_models(j.at("total_models").get<std::uint64_t>());
  auto fill_stats = [](MctNode& n, const nlohmann::json& src) {
    n.visits = src.at("m").get<std::uint64_t>();
    n.score_sum = src.at("score_sum").get<double>();
    n.time_sum = src.at("time_sum").get<double>();
  };
  fill_stats(tree.node(0), j.at("root"));

  // Collect every record by id; parents always precede their children.
  std::map<int, std::pair<int, const nlohmann::json*>> records;
  std::vector<std::pair<int, const nlohmann::json*>> stack{{0, &j.at("root")}};
  while (!stack.empty()) {
    auto [id, src] = stack.back();
    stack.pop_back();
    for (const auto& k : src->at("children")) {
      const int kid = k.at("id").get<int>();
      if (kid <= id || !records.emplace(kid, std::pair{id, &k}).second)
        throw std::invalid_argument("malformed tree: bad node id " + std::to_string(kid));
      stack.emplace_back(kid, &k);
    }
  }
  int expected = 1;
  for (const auto& [id, rec] : records) {
    if (id != expected++) throw std::invalid_argument("malformed tree: node ids are not contiguous");
    const nlohmann::json& k = *rec.second;
    MctNode n;
    n.parent = rec.first;
    n.component = parse_component(k.at("component").get<std::string>());
    const auto value = k.at("value").get<std::string>();
    for (std::size_t i = 0; i < num_candidates(space, n.component); ++i)
      if (candidate_name(space, n.component, i) == value) n.choice = static_cast<int>(i);
    if (n.choice < 0) throw std::invalid_argument("value '" + value + "' not in the search space");
    for (std::size_t p = 0; p < order.components.size(); ++p)
      if (order.components[p] == n.component) n.order_pos = static_cast<int>(p);
    fill_stats(n, k);
    tree.add_node(n);
  }
  return tree;
}

/// Graphviz rendering: one box per node labelled "component=value", average
/// AUC and visit count; nodes and edges listed in id order.
inline std::string export_tree_dot(const MctTree& tree) {
  std::ostringstream os;
  os << "digraph mct {\n";
  os << "  node [shape=box];\n";
  for (const auto& n : tree.nodes()) {
    os << "  n" << n.id << " [label=\"" << tree.label(n) << "\\navg AUC ";
    if (n.visits) {
      std::ostringstream v;
      v << std::fixed << std::setprecision(4) << n.avg_score();
      os << v.str();
    } else {
      os << "-";
    }
    os << "\\nm=" << n.visits << "\"];\n";
  }
  for (const auto& n : tree.nodes())
    for (int c : n.children) os << "  n" << n.id << " -> n" << c << ";\n";
  os << "}\n";
  return os.str();
}

/// One JSON object per line: {trial, architecture, val_auc, test_auc, seconds}.
inline std::string export_trials_jsonl(std::span<const TrialRecord> trials) {
  std::string out;
  for (const auto& t : trials) {
    nlohmann::json j;
    j["trial"] = t.trial;
    j["architecture"] = to_json(t.architecture);
    j["val_auc"] = t.result.val_auc;
    j["test_auc"] = t.result.test_auc;
    j["seconds"] = t.result.train_seconds;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace exgnas
