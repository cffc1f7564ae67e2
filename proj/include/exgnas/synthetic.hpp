#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "exgnas/graph.hpp"

namespace exgnas {

/// Parameters of a planted-partition graph with Gaussian class-conditional features.
struct SyntheticGraphSpec {
  std::size_t num_nodes = 300;
  int num_labels = 3;
  std::size_t num_features = 8;
  /// Probability that an edge endpoint is drawn from the same class.
  double same_label_prob = 0.85;
  double avg_degree = 6.0;
  /// Distance scale between class centers relative to unit feature noise.
  double signal = 1.0;
  std::uint64_t seed = 0;
};

inline Graph make_synthetic_graph(const SyntheticGraphSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = spec.num_nodes;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.num_labels));
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(spec.num_labels));
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);

  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix centers(static_cast<std::size_t>(spec.num_labels), spec.num_features);
  for (auto& v : centers.data()) v = spec.signal * gauss(rng);
  Matrix x(n, spec.num_features);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < spec.num_features; ++c)
      x(i, c) = centers(static_cast<std::size_t>(labels[i]), c) + gauss(rng);
  // Six decimals keep the saved files identical across floating-point contraction settings.
  for (auto& v : x.data()) v = std::round(v * 1e6) / 1e6;

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::set<std::pair<std::size_t, std::size_t>> edges;
  const auto target = static_cast<std::size_t>(spec.avg_degree * static_cast<double>(n) / 2.0);
  while (edges.size() < target) {
    const std::size_t u = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const bool same = coin(rng) < spec.same_label_prob;
    int lv = labels[u];
    if (!same) {
      lv = std::uniform_int_distribution<int>(0, spec.num_labels - 2)(rng);
      if (lv >= labels[u]) ++lv;
    }
    const auto& pool = members[static_cast<std::size_t>(lv)];
    const std::size_t v = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    if (u == v) continue;
    edges.emplace(std::min(u, v), std::max(u, v));
  }
  return Graph::from_edges(n, {edges.begin(), edges.end()}, std::move(x), std::move(labels), spec.num_labels);
}

}  // namespace exgnas
