#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exgnas/architecture.hpp"
#include "exgnas/train.hpp"

namespace exgnas {

/// Scores one architecture. Implementations must be pure in (architecture, seed)
/// and safe to call concurrently.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalResult evaluate(const ArchitectureParams& arch, std::uint64_t seed) const = 0;
};

/// Trains the architecture on a graph and reports validation/test AUC.
class GnnEvaluator : public Evaluator {
 public:
  GnnEvaluator(const Graph& g, Split split, TrainConfig cfg = {}) : graph_(g), split_(std::move(split)), cfg_(cfg) {}

  EvalResult evaluate(const ArchitectureParams& arch, std::uint64_t seed) const override {
    return train_model(arch, graph_, split_, seed, cfg_).result;
  }

  TrainedModel train(const ArchitectureParams& arch, std::uint64_t seed) const {
    return train_model(arch, graph_, split_, seed, cfg_);
  }

  const Graph& graph() const { return graph_; }
  const Split& split() const { return split_; }

 private:
  const Graph& graph_;
  Split split_;
  TrainConfig cfg_;
};

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Synthetic evaluator with a planted optimum:
/// score = 0.5 + 0.05 * (matched prefix parameters) + U(-noise, noise), clamped to [0, 1].
class PlantedMock : public Evaluator {
 public:
  struct Target {
    Component component;
    std::string value;  // as rendered by value_name()
  };

  PlantedMock(std::vector<Target> prefix, double noise, std::uint64_t seed)
      : prefix_(std::move(prefix)), noise_(noise), seed_(seed) {
    if (!(noise_ >= 0.0 && noise_ < 0.3)) throw std::invalid_argument("planted mock noise must lie in [0, 0.3)");
  }

  /// num_gnn_layers=2, pre_mlp=Use, pre_jknet=Use, jknet=Concat.
  static std::vector<Target> default_prefix() {
    return {{{ComponentKind::NumGnnLayers}, "2"},
            {{ComponentKind::PreMlp}, "Use"},
            {{ComponentKind::PreJknet}, "Use"},
            {{ComponentKind::Jknet}, "Concat"}};
  }

  int matches(const ArchitectureParams& arch) const {
    int m = 0;
    for (const auto& t : prefix_) m += value_name(arch, t.component) == t.value;
    return m;
  }

  double score(const ArchitectureParams& arch, std::uint64_t seed) const {
    double s = 0.5 + 0.05 * matches(arch);
    if (noise_ > 0.0) {
      const std::uint64_t h = splitmix64(fnv1a(describe(arch)) ^ splitmix64(seed ^ seed_));
      const double u = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
      s += noise_ * (2.0 * u - 1.0);
    }
    return std::clamp(s, 0.0, 1.0);
  }

  EvalResult evaluate(const ArchitectureParams& arch, std::uint64_t seed) const override {
    EvalResult r;
    r.val_auc = r.test_auc = score(arch, seed);
    return r;
  }

  const std::vector<Target>& prefix() const { return prefix_; }

 private:
  std::vector<Target> prefix_;
  double noise_;
  std::uint64_t seed_;
};

}  // namespace exgnas
