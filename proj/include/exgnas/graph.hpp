#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exgnas/tensor.hpp"

namespace exgnas {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undirected attributed graph with one label per node.
///
/// Adjacency is stored in both directions with unit values and no diagonal.
/// Self-loops are injected by the model layer, never stored here.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph from an undirected edge list. Duplicate and reversed
  /// edges collapse to one undirected edge.
  static Graph from_edges(std::size_t num_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                          Matrix features, std::vector<int> labels, int num_labels) {
    if (features.rows() != num_nodes)
      throw GraphError("feature row count " + std::to_string(features.rows()) + " != n " +
                       std::to_string(num_nodes));
    if (labels.size() != num_nodes)
      throw GraphError("label count " + std::to_string(labels.size()) + " != n " +
                       std::to_string(num_nodes));
    if (num_labels < 1) throw GraphError("number of labels must be positive");
    for (std::size_t u = 0; u < num_nodes; ++u)
      if (labels[u] < 0 || labels[u] >= num_labels)
        throw GraphError("label out of range at row " + std::to_string(u));

    std::vector<std::vector<std::size_t>> nbrs(num_nodes);
    for (auto [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes)
        throw GraphError("node index out of range in edge " + std::to_string(u) + "-" +
                         std::to_string(v));
      if (u == v) throw GraphError("self-loop at node " + std::to_string(u));
      nbrs[u].push_back(v);
      nbrs[v].push_back(u);
    }
    Graph g;
    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    g.num_labels_ = num_labels;
    g.adj_.rows = g.adj_.cols = num_nodes;
    g.adj_.row_ptr.assign(1, 0);
    g.degrees_.resize(num_nodes);
    for (std::size_t u = 0; u < num_nodes; ++u) {
      auto& list = nbrs[u];
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      g.adj_.col_idx.insert(g.adj_.col_idx.end(), list.begin(), list.end());
      g.adj_.row_ptr.push_back(g.adj_.col_idx.size());
      g.degrees_[u] = static_cast<int>(list.size());
    }
    g.adj_.values.assign(g.adj_.col_idx.size(), 1.0);
    return g;
  }

  std::size_t num_nodes() const { return adj_.rows; }
  std::size_t num_features() const { return features_.cols(); }
  int num_labels() const { return num_labels_; }
  /// Number of stored (directed) adjacency entries, i.e. twice the undirected edge count.
  std::size_t num_entries() const { return adj_.nnz(); }

  const CsrMatrix& adjacency() const { return adj_; }
  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& degrees() const { return degrees_; }

  std::span<const std::size_t> neighbors(std::size_t u) const {
    return {adj_.col_idx.data() + adj_.row_ptr[u], adj_.row_ptr[u + 1] - adj_.row_ptr[u]};
  }

  /// Undirected edges (u < v), in row order.
  std::vector<std::pair<std::size_t, std::size_t>> edge_list() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t u = 0; u < num_nodes(); ++u)
      for (auto v : neighbors(u))
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  bool operator==(const Graph& o) const {
    return adj_.row_ptr == o.adj_.row_ptr && adj_.col_idx == o.adj_.col_idx &&
           features_ == o.features_ && labels_ == o.labels_ && num_labels_ == o.num_labels_;
  }

 private:
  CsrMatrix adj_;
  Matrix features_;
  std::vector<int> labels_;
  std::vector<int> degrees_;
  int num_labels_ = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  bool operator==(const Split&) const = default;
};

/// Counts reported while reading a graph directory.
struct LoadWarnings {
  std::size_t duplicate_edges = 0;
  /// Edges listed in one direction only in a file that otherwise lists both.
  std::size_t symmetrized_edges = 0;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, const std::string& where) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw GraphError("non-numeric token '" + std::string(tok) + "' in " + where);
  return value;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("missing file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

/// Reads edges.tsv, features.tsv, labels.tsv and meta.tsv from a directory.
inline Graph load_graph(const std::filesystem::path& dir, LoadWarnings* warnings = nullptr) {
  namespace fs = std::filesystem;
  auto meta = detail::read_lines(dir / "meta.tsv");
  if (meta.size() != 1) throw GraphError("meta.tsv must contain exactly one line");
  auto mt = detail::split_tabs(meta[0]);
  if (mt.size() != 3) throw GraphError("meta.tsv must be n<TAB>d<TAB>y");
  const auto n = detail::parse_number<std::size_t>(mt[0], "meta.tsv");
  const auto d = detail::parse_number<std::size_t>(mt[1], "meta.tsv");
  const auto y = detail::parse_number<int>(mt[2], "meta.tsv");

  auto feature_lines = detail::read_lines(dir / "features.tsv");
  if (feature_lines.size() != n)
    throw GraphError("features.tsv has " + std::to_string(feature_lines.size()) + " rows, expected " +
                     std::to_string(n));
  Matrix x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    auto toks = detail::split_tabs(feature_lines[r]);
    if (toks.size() != d) throw GraphError("feature arity mismatch at row " + std::to_string(r));
    for (std::size_t c = 0; c < d; ++c)
      x(r, c) = detail::parse_number<double>(toks[c], "features.tsv row " + std::to_string(r));
  }

  auto label_lines = detail::read_lines(dir / "labels.tsv");
  if (label_lines.size() != n)
    throw GraphError("labels.tsv has " + std::to_string(label_lines.size()) + " rows, expected " +
                     std::to_string(n));
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r)
    labels[r] = detail::parse_number<int>(label_lines[r], "labels.tsv row " + std::to_string(r));

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::set<std::pair<std::size_t, std::size_t>> directed;
  LoadWarnings w;
  for (const auto& line : detail::read_lines(dir / "edges.tsv")) {
    auto toks = detail::split_tabs(line);
    if (toks.size() != 2) throw GraphError("edges.tsv line must be u<TAB>v: '" + line + "'");
    auto u = detail::parse_number<std::size_t>(toks[0], "edges.tsv");
    auto v = detail::parse_number<std::size_t>(toks[1], "edges.tsv");
    if (u >= n || v >= n)
      throw GraphError("node index " + std::to_string(std::max(u, v)) + " >= n in edges.tsv");
    if (!directed.emplace(u, v).second) ++w.duplicate_edges;
    edges.emplace_back(u, v);
  }
  std::size_t one_way = 0, both_ways = 0;
  for (auto [u, v] : directed) {
    if (directed.count({v, u}))
      ++both_ways;
    else
      ++one_way;
  }
  if (both_ways > 0) w.symmetrized_edges = one_way;
  if (warnings) *warnings = w;
  return Graph::from_edges(n, edges, std::move(x), std::move(labels), y);
}

/// Writes the directory format read by load_graph. Files are written to a
/// temporary name and renamed into place.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& body) {
    auto tmp = dir / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw GraphError("cannot write " + tmp.string());
      out << body;
    }
    fs::rename(tmp, dir / name);
  };
  std::ostringstream meta, edges, feats, labels;
  meta << g.num_nodes() << '\t' << g.num_features() << '\t' << g.num_labels() << '\n';
  for (auto [u, v] : g.edge_list()) edges << u << '\t' << v << '\n';
  char buf[32];
  for (std::size_t r = 0; r < g.num_nodes(); ++r) {
    auto row = g.features().row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      // Shortest text that parses back to the same double.
      const auto res = std::to_chars(buf, buf + sizeof buf, row[c]);
      feats << (c ? "\t" : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    feats << '\n';
  }
  for (int l : g.labels()) labels << l << '\n';
  write("meta.tsv", meta.str());
  write("edges.tsv", edges.str());
  write("features.tsv", feats.str());
  write("labels.tsv", labels.str());
}

/// Seeded uniform 0.5/0.25/0.25 split. Train gets ceil(n/2), validation ceil(n/4).
inline Split make_split(const Graph& g, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (n < 4) throw GraphError("graph too small to split");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = (n + 1) / 2;
  const std::size_t n_val = (n + 3) / 4;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  return s;
}

/// Fraction of stored (ordered) adjacency entries whose endpoints share a label.
inline double edge_homophily(const Graph& g) {
  if (g.num_entries() == 0) throw GraphError("homophily undefined");
  std::size_t same = 0;
  const auto& labels = g.labels();
  for (std::size_t u = 0; u < g.num_nodes(); ++u)
    for (auto v : g.neighbors(u)) same += labels[u] == labels[v];
  return static_cast<double>(same) / static_cast<double>(g.num_entries());
}

}  // namespace exgnas
