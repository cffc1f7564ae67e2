#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "exgnas/architecture.hpp"
#include "exgnas/autodiff.hpp"
#include "exgnas/graph.hpp"

namespace exgnas {

/// Interpretation switches for details the architecture space leaves open.
struct ModelOptions {
  /// Aggregate over N(u) plus u itself; GCN degrees become d+1.
  bool self_loops = true;
  /// Normalize GAT scores with a softmax over the neighborhood.
  bool gat_softmax = true;
  double gat_slope = 0.2;
  /// Nonlinearity after the single preMLP affine layer.
  Activation pre_mlp_activation = Activation::Tanh;
  /// Nonlinearity after each postMLP hidden layer.
  Activation post_mlp_activation = Activation::Tanh;
};

/// Sparse propagation operators derived once per graph.
struct Propagation {
  CsrMatrix ones;  // unit weights over the aggregation neighborhood
  CsrMatrix gcn;   // symmetric degree normalization of `ones`
};

inline Propagation make_propagation(const Graph& g, bool self_loops = true) {
  const std::size_t n = g.num_nodes();
  Propagation p;
  p.ones.rows = p.ones.cols = n;
  for (std::size_t u = 0; u < n; ++u) {
    bool placed = !self_loops;
    for (auto v : g.neighbors(u)) {
      if (!placed && v > u) {
        p.ones.col_idx.push_back(u);
        placed = true;
      }
      p.ones.col_idx.push_back(v);
    }
    if (!placed) p.ones.col_idx.push_back(u);
    p.ones.row_ptr.push_back(p.ones.col_idx.size());
  }
  p.ones.values.assign(p.ones.col_idx.size(), 1.0);

  std::vector<double> inv_sqrt(n);
  for (std::size_t u = 0; u < n; ++u) {
    const double deg = static_cast<double>(p.ones.row_ptr[u + 1] - p.ones.row_ptr[u]);
    inv_sqrt[u] = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  p.gcn = p.ones;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t e = p.gcn.row_ptr[u]; e < p.gcn.row_ptr[u + 1]; ++e)
      p.gcn.values[e] = inv_sqrt[u] * inv_sqrt[p.gcn.col_idx[e]];
  return p;
}

/// Coefficient e(u,v) of one GNN layer. `projected` holds W z for every node;
/// `att_src` / `att_dst` are the GAT attention vectors (ignored otherwise).
inline double attention_coeff(Attention kind, std::size_t u, std::size_t v, const Graph& g, const Matrix& projected,
                              const Matrix& att_src, const Matrix& att_dst, const ModelOptions& opt = {}) {
  switch (kind) {
    case Attention::Constant:
      return 1.0;
    case Attention::Gcn: {
      const double extra = opt.self_loops ? 1.0 : 0.0;
      return 1.0 / std::sqrt((g.degrees()[u] + extra) * (g.degrees()[v] + extra));
    }
    case Attention::Gat: {
      auto score = [&](std::size_t w) {
        double s = 0.0;
        for (std::size_t k = 0; k < projected.cols(); ++k)
          s += att_src[k] * projected(u, k) + att_dst[k] * projected(w, k);
        return s > 0.0 ? s : opt.gat_slope * s;
      };
      if (!opt.gat_softmax) return score(v);
      std::vector<std::size_t> hood(g.neighbors(u).begin(), g.neighbors(u).end());
      if (opt.self_loops) hood.push_back(u);
      double mx = score(hood.front());
      for (auto w : hood) mx = std::max(mx, score(w));
      double z = 0.0;
      for (auto w : hood) z += std::exp(score(w) - mx);
      return std::exp(score(v) - mx) / z;
    }
  }
  return 0.0;
}

struct DenseLayer {
  Parameter weight;
  std::optional<Parameter> bias;
};

struct GnnLayer {
  Attention attention;
  Activation activation;
  Parameter weight;
  std::optional<Parameter> att_src;
  std::optional<Parameter> att_dst;
};

namespace detail {

template <typename Rng>
Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

template <typename Rng>
DenseLayer dense(std::size_t in, std::size_t out, bool bias, Rng& rng) {
  DenseLayer d{Parameter(glorot(in, out, rng)), std::nullopt};
  if (bias) d.bias.emplace(Matrix(1, out));
  return d;
}

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::None: return x;
    case Activation::Relu: return ops::relu(x);
    case Activation::Sigmoid: return ops::sigmoid(x);
    case Activation::Tanh: return ops::tanh(x);
  }
  return x;
}

inline Var apply_dense(Tape& t, DenseLayer& d, Var x) {
  Var y = ops::matmul(x, t.parameter(d.weight));
  if (d.bias) y = ops::add_bias(y, t.parameter(*d.bias));
  return y;
}

}  // namespace detail

/// A trainable network built from one canonical architecture:
/// preMLP? -> GNN layers -> JK merge -> postMLP -> linear head to y logits.
class GnnModel {
 public:
  GnnModel(const ArchitectureParams& arch, std::size_t in_features, int num_labels, std::uint64_t seed,
           ModelOptions opt = {})
      : arch_(canonicalize(arch)), opt_(opt), in_features_(in_features), num_labels_(num_labels) {
    std::mt19937_64 rng(seed);
    std::size_t width = in_features;
    if (arch_.pre_mlp) {
      const auto w = static_cast<std::size_t>(arch_.pre_mlp_emb->resolve(num_labels));
      pre_mlp_.emplace(detail::dense(width, w, true, rng));
      width = w;
    }
    const std::size_t skip_width = width;
    std::vector<std::size_t> layer_widths;
    for (const auto& lp : arch_.layers) {
      const auto w = static_cast<std::size_t>(lp.emb_size.resolve(num_labels));
      GnnLayer layer{lp.attention, lp.activation, Parameter(detail::glorot(width, w, rng)), std::nullopt, std::nullopt};
      if (lp.attention == Attention::Gat) {
        layer.att_src.emplace(detail::glorot(w, 1, rng));
        layer.att_dst.emplace(detail::glorot(w, 1, rng));
      }
      layers_.push_back(std::move(layer));
      layer_widths.push_back(w);
      width = w;
    }

    if (arch_.jknet == JkMode::Max) {
      merged_width_ = layer_widths.front();
      if (arch_.pre_jknet && skip_width != merged_width_)
        skip_projection_.emplace(detail::dense(skip_width, merged_width_, false, rng));
    } else {
      merged_width_ = arch_.pre_jknet ? skip_width : 0;
      if (arch_.jknet == JkMode::Concat)
        for (auto w : layer_widths) merged_width_ += w;
      else
        merged_width_ += layer_widths.back();
    }

    width = merged_width_;
    for (int k = 0; k < arch_.post_mlp_layers; ++k) {
      const auto h = static_cast<std::size_t>(*arch_.post_mlp_hidden);
      post_mlp_.push_back(detail::dense(width, h, true, rng));
      width = h;
    }
    head_.emplace(detail::dense(width, static_cast<std::size_t>(num_labels), true, rng));
  }

  const ArchitectureParams& architecture() const { return arch_; }
  std::size_t merged_width() const { return merged_width_; }
  std::size_t in_features() const { return in_features_; }
  int num_labels() const { return num_labels_; }
  std::vector<GnnLayer>& layers() { return layers_; }
  std::optional<DenseLayer>& pre_mlp() { return pre_mlp_; }
  std::vector<DenseLayer>& post_mlp() { return post_mlp_; }
  DenseLayer& head() { return *head_; }

  /// Every trainable tensor, each exactly once, in a fixed order.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    auto add = [&](DenseLayer& d) {
      out.push_back(&d.weight);
      if (d.bias) out.push_back(&*d.bias);
    };
    if (pre_mlp_) add(*pre_mlp_);
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      if (l.att_src) out.push_back(&*l.att_src);
      if (l.att_dst) out.push_back(&*l.att_dst);
    }
    if (skip_projection_) add(*skip_projection_);
    for (auto& d : post_mlp_) add(d);
    add(*head_);
    return out;
  }

  std::vector<Matrix> snapshot() {
    std::vector<Matrix> out;
    for (auto* p : parameters()) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Matrix>& values) {
    auto ps = parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
  }

  /// Records the forward pass on `t` and returns n x y logits.
  Var forward(Tape& t, const Graph& g, const Propagation& prop) {
    if (g.num_features() != in_features_)
      throw DimensionError("forward", g.num_nodes(), g.num_features(), g.num_nodes(), in_features_);
    return forward(t, t.constant(g.features()), prop);
  }

  Var forward(Tape& t, Var x, const Propagation& prop) {
    Var h = x;
    if (pre_mlp_) h = detail::activate(detail::apply_dense(t, *pre_mlp_, h), opt_.pre_mlp_activation);
    const Var skip = h;

    std::vector<Var> outputs;
    for (auto& layer : layers_) {
      Var projected = ops::matmul(h, t.parameter(layer.weight));
      Var agg;
      switch (layer.attention) {
        case Attention::Constant: agg = ops::spmm(prop.ones, projected); break;
        case Attention::Gcn: agg = ops::spmm(prop.gcn, projected); break;
        case Attention::Gat: {
          Var src = ops::matmul(projected, t.parameter(*layer.att_src));
          Var dst = ops::matmul(projected, t.parameter(*layer.att_dst));
          Var scores = ops::leaky_relu(ops::edge_scores(prop.ones, src, dst), opt_.gat_slope);
          Var coeff = opt_.gat_softmax ? ops::segment_softmax(prop.ones, scores) : scores;
          agg = ops::spmm_values(prop.ones, coeff, projected);
          break;
        }
      }
      h = detail::activate(agg, layer.activation);
      outputs.push_back(h);
    }

    std::vector<Var> merge;
    if (arch_.pre_jknet) merge.push_back(skip_projection_ ? detail::apply_dense(t, *skip_projection_, skip) : skip);
    if (arch_.jknet == JkMode::None)
      merge.push_back(outputs.back());
    else
      merge.insert(merge.end(), outputs.begin(), outputs.end());

    Var z = merge.size() == 1 ? merge.front()
            : arch_.jknet == JkMode::Max ? ops::rowwise_max(merge)
                                         : ops::concat_cols(merge);
    for (auto& d : post_mlp_) z = detail::activate(detail::apply_dense(t, d, z), opt_.post_mlp_activation);
    return detail::apply_dense(t, *head_, z);
  }

 private:
  ArchitectureParams arch_;
  ModelOptions opt_;
  std::size_t in_features_;
  int num_labels_;
  std::optional<DenseLayer> pre_mlp_;
  std::vector<GnnLayer> layers_;
  std::optional<DenseLayer> skip_projection_;
  std::vector<DenseLayer> post_mlp_;
  std::optional<DenseLayer> head_;
  std::size_t merged_width_ = 0;
};

}  // namespace exgnas
