#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "exgnas/graph.hpp"

namespace exgnas::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("exgnas_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  void write(const std::string& name, const std::string& body) const {
    std::ofstream(path_ / name, std::ios::binary) << body;
  }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

/// Erdos-Renyi graph with random features and labels.
inline Graph random_graph(std::size_t n, double p, int labels, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (coin(rng) < p) edges.emplace_back(u, v);
  std::vector<int> y(n);
  std::uniform_int_distribution<int> pick(0, labels - 1);
  for (auto& l : y) l = pick(rng);
  return Graph::from_edges(n, edges, random_matrix(n, d, rng), y, labels);
}

}  // namespace exgnas::testing
