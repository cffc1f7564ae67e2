#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "exgnas/exgnas.hpp"

namespace exgnas::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct RunConfig {
  std::string graph;
  std::uint64_t trials = 1000;
  double c = std::sqrt(2.0);
  std::uint64_t theta = 10;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::vector<std::string> arch;
  bool reduced = false;
  bool timing = false;
};

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << body;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// key=value lines with '#' comments.
inline std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_file(path));
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("config", "expected key=value, got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Splices config-file values in front of the command line for keys the
// command line does not set.
inline std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty() || args.size() < 2) return args;
  std::vector<std::string> extra;
  for (const auto& [key, value] : read_config(config_path)) {
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (given) continue;
    if (value == "true") {
      extra.push_back(flag);
    } else if (value != "false") {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

inline std::string format_metrics(const EvalResult& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "val_auc: " << r.val_auc << "\n";
  os << "test_auc: " << r.test_auc << "\n";
  os << "epochs_run: " << r.epochs_run << "\n";
  os << "final_epoch_loss: " << r.final_epoch_loss << "\n";
  os << "diverged: " << (r.diverged ? "true" : "false") << "\n";
  return os.str();
}

inline int cmd_search(const RunConfig& rc, std::ostream& out) {
  namespace fs = std::filesystem;
  const auto wall_start = std::chrono::steady_clock::now();
  const Graph g = load_graph(rc.graph);
  const GnnEvaluator ev(g, make_split(g, rc.seed));
  SearchConfig cfg;
  cfg.c = rc.c;
  cfg.theta = rc.theta;
  cfg.trials = rc.trials;
  cfg.seed = rc.seed;
  cfg.record_time = rc.timing;
  const SearchResult res = search(ev, cfg);
  const ImportanceReport imp = importance_report(res.tree, res.trials);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

  fs::create_directories(rc.out);
  const fs::path dir(rc.out);
  write_atomic(dir / "best_architecture.json", to_json(res.best_architecture).dump(2) + "\n");
  write_atomic(dir / "tree.json", export_tree_json(res.tree));
  write_atomic(dir / "tree.dot", export_tree_dot(res.tree));
  write_atomic(dir / "trials.jsonl", export_trials_jsonl(res.trials));

  std::ostringstream rep;
  rep << std::fixed << std::setprecision(4);
  rep << "homophily: " << edge_homophily(g) << "\n";
  rep << "trials: " << rc.trials << "\n";
  rep << "best_trial: " << res.best_trial << "\n";
  rep << "best_eval_seed: " << res.best_eval_seed << "\n";
  rep << "best_val_auc: " << res.best_result.val_auc << "\n";
  rep << "best_test_auc: " << res.best_result.test_auc << "\n";
  rep << "best_architecture: " << describe(res.best_architecture) << "\n";
  rep << "total_wall_seconds: " << wall << "\n";
  for (const auto& c : imp.components)
    for (const auto& [v, r] : c.ratios) rep << "ratio." << c.component << "." << v << ": " << r << "\n";
  write_atomic(dir / "report.txt", rep.str());
  out << rep.str();
  return kOk;
}

inline int cmd_homophily(const RunConfig& rc, std::ostream& out) {
  out << std::fixed << std::setprecision(4) << edge_homophily(load_graph(rc.graph)) << "\n";
  return kOk;
}

inline int cmd_train_fixed(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Graph g = load_graph(rc.graph);
  const Split split = make_split(g, rc.seed);
  for (const auto& path : rc.arch) {
    const auto arch = architecture_from_json(nlohmann::json::parse(read_file(path)));
    const auto trained = train_model(arch, g, split, rc.seed);
    out << "architecture: " << describe(arch) << "\n" << format_metrics(trained.result);
    err << "train_seconds: " << trained.result.train_seconds << "\n";
  }
  return kOk;
}

inline int cmd_count_space(const RunConfig& rc, std::ostream& out) {
  if (rc.reduced) {
    const auto space = SearchSpace::reduced();
    out << count_search_space(space) << "\n";
    out << "enumerated: " << enumerate_search_space(space) << "\n";
  } else {
    out << count_search_space() << "\n";
  }
  return kOk;
}

inline int cmd_export(const RunConfig& rc, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path dir(rc.out);
  const MctTree tree = parse_tree_json(read_file(dir / "tree.json"));
  write_atomic(dir / "tree.dot", export_tree_dot(tree));
  out << (dir / "tree.dot").string() << "\n";
  return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-search architecture selection for graph neural networks"};
  app.require_subcommand(1);
  RunConfig rc;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", rc.seed, "random seed");
    sub->add_option("--config", config_path, "key=value defaults file");
  };

  auto* search_cmd = app.add_subcommand("search", "run the tree search and write all artifacts");
  search_cmd->add_option("--graph", rc.graph, "graph directory")->required();
  search_cmd->add_option("--trials", rc.trials, "number of evaluated architectures")->check(CLI::Range(1ull, 100000000ull));
  search_cmd->add_option("--c", rc.c, "exploration constant")->check(CLI::NonNegativeNumber);
  search_cmd->add_option("--theta", rc.theta, "expansion threshold")->check(CLI::Range(1ull, 100000000ull));
  search_cmd->add_option("--out", rc.out, "output directory");
  search_cmd->add_flag("--timing", rc.timing, "accumulate wall-clock training time in the tree");
  add_common(search_cmd);

  auto* homophily_cmd = app.add_subcommand("homophily", "print edge homophily");
  homophily_cmd->add_option("--graph", rc.graph, "graph directory")->required();
  add_common(homophily_cmd);

  auto* train_cmd = app.add_subcommand("train-fixed", "train given architectures and print metrics");
  train_cmd->add_option("--graph", rc.graph, "graph directory")->required();
  train_cmd->add_option("--arch", rc.arch, "architecture JSON file (repeatable)")->required();
  add_common(train_cmd);

  auto* count_cmd = app.add_subcommand("count-space", "print the number of distinct architectures");
  count_cmd->add_flag("--reduced", rc.reduced, "use the reduced space and cross-check by enumeration");
  add_common(count_cmd);

  auto* export_cmd = app.add_subcommand("export", "re-render <out>/tree.json as <out>/tree.dot");
  export_cmd->add_option("--out", rc.out, "directory holding tree.json")->required();
  add_common(export_cmd);

  try {
    args = apply_config(std::move(args));
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (*search_cmd) return cmd_search(rc, out);
    if (*homophily_cmd) return cmd_homophily(rc, out);
    if (*train_cmd) return cmd_train_fixed(rc, out, err);
    if (*count_cmd) return cmd_count_space(rc, out);
    if (*export_cmd) return cmd_export(rc, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace exgnas::cli
