#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace exgnas {

enum class Attention { Constant, Gcn, Gat };
enum class Activation { None, Relu, Sigmoid, Tanh };
enum class JkMode { None, Concat, Max };

inline const char* to_string(Attention a) {
  switch (a) {
    case Attention::Constant: return "Constant";
    case Attention::Gcn: return "GCN";
    case Attention::Gat: return "GAT";
  }
  return "?";
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::None: return "None";
    case Activation::Relu: return "Relu";
    case Activation::Sigmoid: return "Sigmoid";
    case Activation::Tanh: return "Tanh";
  }
  return "?";
}

inline const char* to_string(JkMode j) {
  switch (j) {
    case JkMode::None: return "None";
    case JkMode::Concat: return "Concat";
    case JkMode::Max: return "Max";
  }
  return "?";
}

/// An embedding width: either a fixed number of units or "the number of labels".
class EmbSize {
 public:
  constexpr EmbSize() = default;
  constexpr explicit EmbSize(int units) : units_(units) {}
  static constexpr EmbSize labels() { return EmbSize(0); }

  constexpr bool is_labels() const { return units_ == 0; }
  constexpr int units() const { return units_; }
  constexpr int resolve(int num_labels) const { return is_labels() ? num_labels : units_; }

  std::string str() const { return is_labels() ? "y" : std::to_string(units_); }

  constexpr auto operator<=>(const EmbSize&) const = default;

 private:
  int units_ = 0;
};

struct LayerParams {
  Attention attention = Attention::Constant;
  Activation activation = Activation::None;
  EmbSize emb_size{16};

  auto operator<=>(const LayerParams&) const = default;
};

/// One point of the architecture space. Call canonicalize() (or build it
/// through SearchSpace) before comparing: inactive fields become nullopt and
/// the JKNet-max width constraint is applied.
struct ArchitectureParams {
  std::vector<LayerParams> layers{LayerParams{}};
  JkMode jknet = JkMode::None;
  bool pre_jknet = false;
  bool pre_mlp = false;
  std::optional<EmbSize> pre_mlp_emb;
  int post_mlp_layers = 0;
  std::optional<int> post_mlp_hidden;

  int num_gnn_layers() const { return static_cast<int>(layers.size()); }

  auto operator<=>(const ArchitectureParams&) const = default;
};

class ArchitectureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Clears inactive fields and makes JKNet-max widths uniform: every GNN layer
/// (and the preMLP output when it is jumped) takes the first layer's width.
inline ArchitectureParams canonicalize(ArchitectureParams a) {
  if (a.layers.empty() || a.layers.size() > 3) throw ArchitectureError("num_gnn_layers must be 1, 2 or 3");
  if (!a.pre_mlp) a.pre_mlp_emb.reset();
  else if (!a.pre_mlp_emb) throw ArchitectureError("pre_mlp=Use requires pre_mlp_emb");
  if (a.post_mlp_layers < 0 || a.post_mlp_layers > 2) throw ArchitectureError("post_mlp_layers must be 0, 1 or 2");
  if (a.post_mlp_layers == 0) a.post_mlp_hidden.reset();
  else if (!a.post_mlp_hidden) throw ArchitectureError("post_mlp_layers >= 1 requires post_mlp_hidden");
  if (a.jknet == JkMode::Max) {
    const EmbSize w = a.layers.front().emb_size;
    for (auto& l : a.layers) l.emb_size = w;
    if (a.pre_jknet && a.pre_mlp) a.pre_mlp_emb = w;
  }
  return a;
}

// JSON ---------------------------------------------------------------------

namespace detail {

template <typename E, std::size_t N>
E parse_enum(const nlohmann::json& j, const std::array<E, N>& values, const char* key) {
  if (!j.is_string()) throw ArchitectureError(std::string("field '") + key + "' must be a string");
  const auto s = j.get<std::string>();
  for (E v : values)
    if (s == to_string(v)) return v;
  throw ArchitectureError(std::string("invalid value '") + s + "' for field '" + key + "'");
}

inline nlohmann::json emb_to_json(EmbSize e) {
  return e.is_labels() ? nlohmann::json("y") : nlohmann::json(e.units());
}

inline EmbSize emb_from_json(const nlohmann::json& j, const char* key) {
  if (j.is_string() && j.get<std::string>() == "y") return EmbSize::labels();
  if (j.is_number_integer() && j.get<int>() > 0) return EmbSize(j.get<int>());
  throw ArchitectureError(std::string("field '") + key + "' must be a positive integer or \"y\"");
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ArchitectureError("unknown key '" + it.key() + "'");
  }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ArchitectureError(std::string("missing key '") + key + "'");
  return *it;
}

}  // namespace detail

inline nlohmann::json to_json(const ArchitectureParams& a) {
  nlohmann::json j;
  j["num_gnn_layers"] = a.num_gnn_layers();
  auto layers = nlohmann::json::array();
  for (const auto& l : a.layers)
    layers.push_back({{"attention", to_string(l.attention)},
                      {"activation", to_string(l.activation)},
                      {"emb_size", detail::emb_to_json(l.emb_size)}});
  j["layers"] = layers;
  j["jknet"] = to_string(a.jknet);
  j["pre_jknet"] = a.pre_jknet ? "Use" : "None";
  j["pre_mlp"] = a.pre_mlp ? "Use" : "None";
  j["pre_mlp_emb"] = a.pre_mlp_emb ? detail::emb_to_json(*a.pre_mlp_emb) : nlohmann::json(nullptr);
  j["post_mlp_layers"] = a.post_mlp_layers;
  j["post_mlp_hidden"] = a.post_mlp_hidden ? nlohmann::json(*a.post_mlp_hidden) : nlohmann::json(nullptr);
  return j;
}

/// Strict reader: unknown keys, bad values and a layer count that disagrees
/// with num_gnn_layers are errors. The result is canonicalized.
inline ArchitectureParams architecture_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ArchitectureError("architecture must be a JSON object");
  reject_unknown(j, {"num_gnn_layers", "layers", "jknet", "pre_jknet", "pre_mlp", "pre_mlp_emb",
                     "post_mlp_layers", "post_mlp_hidden"});
  ArchitectureParams a;
  const auto& n = require(j, "num_gnn_layers");
  if (!n.is_number_integer()) throw ArchitectureError("field 'num_gnn_layers' must be an integer");
  const auto& layers = require(j, "layers");
  if (!layers.is_array() || layers.size() != n.get<std::size_t>())
    throw ArchitectureError("field 'layers' must be an array of num_gnn_layers entries");
  a.layers.clear();
  for (const auto& l : layers) {
    if (!l.is_object()) throw ArchitectureError("layer entries must be objects");
    reject_unknown(l, {"attention", "activation", "emb_size"});
    LayerParams p;
    p.attention = parse_enum(require(l, "attention"),
                             std::array{Attention::Constant, Attention::Gcn, Attention::Gat}, "attention");
    p.activation = parse_enum(require(l, "activation"),
                              std::array{Activation::None, Activation::Relu, Activation::Sigmoid, Activation::Tanh},
                              "activation");
    p.emb_size = emb_from_json(require(l, "emb_size"), "emb_size");
    a.layers.push_back(p);
  }
  a.jknet = parse_enum(require(j, "jknet"), std::array{JkMode::None, JkMode::Concat, JkMode::Max}, "jknet");
  auto use_flag = [](const nlohmann::json& v, const char* key) {
    if (v == "Use") return true;
    if (v == "None") return false;
    throw ArchitectureError(std::string("field '") + key + "' must be \"None\" or \"Use\"");
  };
  a.pre_jknet = use_flag(require(j, "pre_jknet"), "pre_jknet");
  a.pre_mlp = use_flag(require(j, "pre_mlp"), "pre_mlp");
  if (auto it = j.find("pre_mlp_emb"); it != j.end() && !it->is_null())
    a.pre_mlp_emb = emb_from_json(*it, "pre_mlp_emb");
  const auto& pl = require(j, "post_mlp_layers");
  if (!pl.is_number_integer()) throw ArchitectureError("field 'post_mlp_layers' must be an integer");
  a.post_mlp_layers = pl.get<int>();
  if (auto it = j.find("post_mlp_hidden"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<int>() <= 0)
      throw ArchitectureError("field 'post_mlp_hidden' must be a positive integer");
    a.post_mlp_hidden = it->get<int>();
  }
  return canonicalize(a);
}

/// Compact one-line rendering, stable across runs.
inline std::string describe(const ArchitectureParams& a) { return to_json(a).dump(); }

// Search space ---------------------------------------------------------------

/// Candidate lists for every architecture parameter. Defaults are the full space.
struct SearchSpace {
  std::vector<int> num_gnn_layers{1, 2, 3};
  std::vector<Attention> attention{Attention::Constant, Attention::Gcn, Attention::Gat};
  std::vector<Activation> activation{Activation::None, Activation::Relu, Activation::Sigmoid, Activation::Tanh};
  std::vector<EmbSize> emb_size{EmbSize(16), EmbSize(32), EmbSize(64), EmbSize(128), EmbSize(256), EmbSize::labels()};
  std::vector<JkMode> jknet{JkMode::None, JkMode::Concat, JkMode::Max};
  std::vector<bool> pre_jknet{false, true};
  std::vector<bool> pre_mlp{false, true};
  std::vector<EmbSize> pre_mlp_emb{EmbSize(16), EmbSize(32), EmbSize(64), EmbSize(128), EmbSize(256)};
  std::vector<int> post_mlp_layers{0, 1, 2};
  std::vector<int> post_mlp_hidden{64, 128, 256};

  /// Two GNN layers at most, two widths, no MLPs.
  static SearchSpace reduced() {
    SearchSpace s;
    s.num_gnn_layers = {1, 2};
    s.emb_size = {EmbSize(16), EmbSize(32)};
    s.pre_mlp = {false};
    s.post_mlp_layers = {0};
    return s;
  }
};

enum class ComponentKind {
  NumGnnLayers,
  PreMlp,
  PreJknet,
  Jknet,
  PreMlpEmb,
  PostMlpLayers,
  PostMlpHidden,
  Activation,
  Attention,
  EmbSize,
};

/// A tunable slot of the space; per-layer kinds carry a 1-based layer index.
struct Component {
  ComponentKind kind = ComponentKind::NumGnnLayers;
  int layer = 0;

  auto operator<=>(const Component&) const = default;

  bool per_layer() const {
    return kind == ComponentKind::Activation || kind == ComponentKind::Attention || kind == ComponentKind::EmbSize;
  }

  std::string name() const {
    std::string base;
    switch (kind) {
      case ComponentKind::NumGnnLayers: return "num_gnn_layers";
      case ComponentKind::PreMlp: return "pre_mlp";
      case ComponentKind::PreJknet: return "pre_jknet";
      case ComponentKind::Jknet: return "jknet";
      case ComponentKind::PreMlpEmb: return "pre_mlp_emb";
      case ComponentKind::PostMlpLayers: return "post_mlp_layers";
      case ComponentKind::PostMlpHidden: return "post_mlp_hidden";
      case ComponentKind::Activation: base = "activation"; break;
      case ComponentKind::Attention: base = "attention"; break;
      case ComponentKind::EmbSize: base = "emb_size"; break;
    }
    return base + "_" + std::to_string(layer);
  }
};

inline constexpr std::size_t kNumSlots = 16;

/// Stable slot index of a component in an Assignment.
inline std::size_t slot(Component c) {
  switch (c.kind) {
    case ComponentKind::NumGnnLayers: return 0;
    case ComponentKind::PreMlp: return 1;
    case ComponentKind::PreJknet: return 2;
    case ComponentKind::Jknet: return 3;
    case ComponentKind::PreMlpEmb: return 4;
    case ComponentKind::PostMlpLayers: return 5;
    case ComponentKind::PostMlpHidden: return 6;
    case ComponentKind::Activation: return 7 + 3 * static_cast<std::size_t>(c.layer - 1);
    case ComponentKind::Attention: return 8 + 3 * static_cast<std::size_t>(c.layer - 1);
    case ComponentKind::EmbSize: return 9 + 3 * static_cast<std::size_t>(c.layer - 1);
  }
  return kNumSlots;
}

inline std::vector<Component> all_components() {
  std::vector<Component> out{{ComponentKind::NumGnnLayers}, {ComponentKind::PreMlp},        {ComponentKind::PreJknet},
                             {ComponentKind::Jknet},        {ComponentKind::PreMlpEmb},     {ComponentKind::PostMlpLayers},
                             {ComponentKind::PostMlpHidden}};
  for (int l = 1; l <= 3; ++l) {
    out.push_back({ComponentKind::Activation, l});
    out.push_back({ComponentKind::Attention, l});
    out.push_back({ComponentKind::EmbSize, l});
  }
  return out;
}

inline std::size_t num_candidates(const SearchSpace& s, Component c) {
  switch (c.kind) {
    case ComponentKind::NumGnnLayers: return s.num_gnn_layers.size();
    case ComponentKind::PreMlp: return s.pre_mlp.size();
    case ComponentKind::PreJknet: return s.pre_jknet.size();
    case ComponentKind::Jknet: return s.jknet.size();
    case ComponentKind::PreMlpEmb: return s.pre_mlp_emb.size();
    case ComponentKind::PostMlpLayers: return s.post_mlp_layers.size();
    case ComponentKind::PostMlpHidden: return s.post_mlp_hidden.size();
    case ComponentKind::Activation: return s.activation.size();
    case ComponentKind::Attention: return s.attention.size();
    case ComponentKind::EmbSize: return s.emb_size.size();
  }
  return 0;
}

inline std::string candidate_name(const SearchSpace& s, Component c, std::size_t i) {
  auto flag = [](bool b) { return std::string(b ? "Use" : "None"); };
  switch (c.kind) {
    case ComponentKind::NumGnnLayers: return std::to_string(s.num_gnn_layers.at(i));
    case ComponentKind::PreMlp: return flag(s.pre_mlp.at(i));
    case ComponentKind::PreJknet: return flag(s.pre_jknet.at(i));
    case ComponentKind::Jknet: return to_string(s.jknet.at(i));
    case ComponentKind::PreMlpEmb: return s.pre_mlp_emb.at(i).str();
    case ComponentKind::PostMlpLayers: return std::to_string(s.post_mlp_layers.at(i));
    case ComponentKind::PostMlpHidden: return std::to_string(s.post_mlp_hidden.at(i));
    case ComponentKind::Activation: return to_string(s.activation.at(i));
    case ComponentKind::Attention: return to_string(s.attention.at(i));
    case ComponentKind::EmbSize: return s.emb_size.at(i).str();
  }
  return "?";
}

/// Candidate-list index chosen per slot; -1 means not fixed yet.
struct Assignment {
  std::array<int, kNumSlots> choice;
  Assignment() { choice.fill(-1); }

  bool is_set(Component c) const { return choice[slot(c)] >= 0; }
  int get(Component c) const { return choice[slot(c)]; }
  void set(Component c, int index) { choice[slot(c)] = index; }

  bool operator==(const Assignment&) const = default;
};

/// Whether a component can affect the architecture given what is already fixed.
/// Layer components beyond the fixed layer count, layer 2/3 widths under JKNet
/// max, the preMLP width without a preMLP (or when JKNet max ties it to the
/// layer width), and the postMLP width without postMLP layers are inactive.
inline bool is_active(const SearchSpace& s, const Assignment& a, Component c) {
  if (c.per_layer() && c.layer > 1) {
    Component n{ComponentKind::NumGnnLayers};
    if (a.is_set(n) && s.num_gnn_layers[static_cast<std::size_t>(a.get(n))] < c.layer) return false;
    if (c.kind == ComponentKind::EmbSize) {
      Component j{ComponentKind::Jknet};
      if (a.is_set(j) && s.jknet[static_cast<std::size_t>(a.get(j))] == JkMode::Max) return false;
    }
  }
  if (c.kind == ComponentKind::PreMlpEmb) {
    Component p{ComponentKind::PreMlp}, pj{ComponentKind::PreJknet}, j{ComponentKind::Jknet};
    if (a.is_set(p) && !s.pre_mlp[static_cast<std::size_t>(a.get(p))]) return false;
    if (a.is_set(pj) && a.is_set(j) && s.pre_jknet[static_cast<std::size_t>(a.get(pj))] &&
        s.jknet[static_cast<std::size_t>(a.get(j))] == JkMode::Max)
      return false;
  }
  if (c.kind == ComponentKind::PostMlpHidden) {
    Component k{ComponentKind::PostMlpLayers};
    if (a.is_set(k) && s.post_mlp_layers[static_cast<std::size_t>(a.get(k))] == 0) return false;
  }
  return true;
}

/// Builds the canonical architecture from a complete assignment.
inline ArchitectureParams to_architecture(const SearchSpace& s, const Assignment& a) {
  for (auto c : all_components())
    if (!a.is_set(c)) throw ArchitectureError("assignment incomplete at " + c.name());
  auto at = [&](ComponentKind k, int layer = 0) { return static_cast<std::size_t>(a.get({k, layer})); };
  ArchitectureParams p;
  const int n = s.num_gnn_layers[at(ComponentKind::NumGnnLayers)];
  p.layers.clear();
  for (int l = 1; l <= n; ++l)
    p.layers.push_back({s.attention[at(ComponentKind::Attention, l)], s.activation[at(ComponentKind::Activation, l)],
                        s.emb_size[at(ComponentKind::EmbSize, l)]});
  p.jknet = s.jknet[at(ComponentKind::Jknet)];
  p.pre_jknet = s.pre_jknet[at(ComponentKind::PreJknet)];
  p.pre_mlp = s.pre_mlp[at(ComponentKind::PreMlp)];
  if (p.pre_mlp) p.pre_mlp_emb = s.pre_mlp_emb[at(ComponentKind::PreMlpEmb)];
  p.post_mlp_layers = s.post_mlp_layers[at(ComponentKind::PostMlpLayers)];
  if (p.post_mlp_layers > 0) p.post_mlp_hidden = s.post_mlp_hidden[at(ComponentKind::PostMlpHidden)];
  return canonicalize(p);
}

/// Rendered value of a component in an architecture, matching candidate_name();
/// nullopt when the component does not exist or is inactive there.
inline std::optional<std::string> value_name(const ArchitectureParams& a, Component c) {
  auto flag = [](bool b) { return std::string(b ? "Use" : "None"); };
  if (c.per_layer()) {
    if (c.layer < 1 || c.layer > a.num_gnn_layers()) return std::nullopt;
    const auto& l = a.layers[static_cast<std::size_t>(c.layer - 1)];
    if (c.kind == ComponentKind::Activation) return to_string(l.activation);
    if (c.kind == ComponentKind::Attention) return to_string(l.attention);
    return l.emb_size.str();
  }
  switch (c.kind) {
    case ComponentKind::NumGnnLayers: return std::to_string(a.num_gnn_layers());
    case ComponentKind::PreMlp: return flag(a.pre_mlp);
    case ComponentKind::PreJknet: return flag(a.pre_jknet);
    case ComponentKind::Jknet: return to_string(a.jknet);
    case ComponentKind::PreMlpEmb:
      if (!a.pre_mlp_emb) return std::nullopt;
      return a.pre_mlp_emb->str();
    case ComponentKind::PostMlpLayers: return std::to_string(a.post_mlp_layers);
    case ComponentKind::PostMlpHidden:
      if (!a.post_mlp_hidden) return std::nullopt;
      return std::to_string(*a.post_mlp_hidden);
    default: return std::nullopt;
  }
}

/// Fills every unset slot uniformly at random and returns the canonical architecture.
template <typename Rng>
ArchitectureParams fill_random(const SearchSpace& s, Assignment a, Rng& rng) {
  for (auto c : all_components()) {
    if (a.is_set(c)) continue;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(num_candidates(s, c)) - 1);
    a.set(c, pick(rng));
  }
  return to_architecture(s, a);
}

/// Exact number of distinct canonical architectures, by closed-form counting.
inline std::uint64_t count_search_space(const SearchSpace& s = {}) {
  std::uint64_t post = 0;
  for (int k : s.post_mlp_layers) post += k >= 1 ? s.post_mlp_hidden.size() : 1;
  const std::uint64_t emb = s.emb_size.size();
  const std::uint64_t per_layer_free = s.attention.size() * s.activation.size() * emb;
  const std::uint64_t per_layer_shared = s.attention.size() * s.activation.size();

  std::uint64_t free_pre = 0;  // preMLP x preJKNet configurations with unconstrained widths
  std::uint64_t max_pre = 0;   // same under JKNet max, where a jumped preMLP width is tied to the layers
  for (bool pj : s.pre_jknet)
    for (bool pm : s.pre_mlp) {
      const std::uint64_t widths = pm ? s.pre_mlp_emb.size() : 1;
      free_pre += widths;
      max_pre += (pj && pm) ? 1 : widths;
    }

  std::uint64_t total = 0;
  for (int n : s.num_gnn_layers) {
    std::uint64_t free_layers = 1, shared_layers = 1;
    for (int l = 0; l < n; ++l) {
      free_layers *= per_layer_free;
      shared_layers *= per_layer_shared;
    }
    for (JkMode j : s.jknet) {
      if (j == JkMode::Max)
        total += max_pre * emb * shared_layers * post;
      else
        total += free_pre * free_layers * post;
    }
  }
  return total;
}

/// Counts distinct canonical architectures by canonicalizing every assignment
/// of the active components. Exponential; meant for reduced spaces.
inline std::uint64_t enumerate_search_space(const SearchSpace& s) {
  const auto comps = all_components();
  std::set<std::string> seen;
  Assignment a;
  auto visit = [&](auto& self, std::size_t i) -> void {
    if (i == comps.size()) {
      seen.insert(describe(to_architecture(s, a)));
      return;
    }
    if (!is_active(s, a, comps[i])) {
      a.set(comps[i], 0);
      self(self, i + 1);
    } else {
      for (std::size_t k = 0; k < num_candidates(s, comps[i]); ++k) {
        a.set(comps[i], static_cast<int>(k));
        self(self, i + 1);
      }
    }
    a.set(comps[i], -1);
  };
  visit(visit, 0);
  return seen.size();
}

}  // namespace exgnas
