// Regenerates the bundled graphs under data/.
#include <iostream>

#include "exgnas/graph.hpp"
#include "exgnas/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_datasets <data-dir>\n";
    return 2;
  }
  const std::filesystem::path root(argv[1]);
  using exgnas::SyntheticGraphSpec;

  SyntheticGraphSpec toy{30, 3, 4, 0.8, 4.0, 2.0, 7};
  exgnas::save_graph(exgnas::make_synthetic_graph(toy), root / "toy30");

  SyntheticGraphSpec homophilic{300, 3, 8, 0.85, 6.0, 1.1, 11};
  exgnas::save_graph(exgnas::make_synthetic_graph(homophilic), root / "homophilic300");

  SyntheticGraphSpec heterophilic{300, 3, 8, 0.1, 6.0, 1.1, 13};
  exgnas::save_graph(exgnas::make_synthetic_graph(heterophilic), root / "heterophilic300");
  return 0;
}
