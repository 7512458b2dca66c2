// Writes a synthetic interaction log and item attribute file for demos and
// end-to-end checks: protorec-synth <out_dir> [seed]
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "protorec/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: protorec-synth <out_dir> [seed]\n";
    return 1;
  }
  protorec::SyntheticSpec spec;
  if (argc > 2) spec.seed = std::stoull(argv[2]);
  const auto data = protorec::make_synthetic(spec);
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "interactions.tsv") << data.interactions_tsv;
  std::ofstream(dir / "attributes.tsv") << data.attributes_tsv;
  std::ofstream(dir / "config.json") << R"({
  "seed": 0,
  "data": {
    "interactions": "interactions.tsv",
    "format": "tsv",
    "attributes": "attributes.tsv",
    "groups": {"head": "over", "tail": "under"}
  }
}
)";
  std::cout << "wrote " << dir.string() << "/{interactions,attributes}.tsv and config.json\n";
  return 0;
}
