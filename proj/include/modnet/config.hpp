#pragma once

#include <string>
#include <vector>

#include "modnet/synthetic.hpp"
#include "modnet/training.hpp"

namespace modnet {

// One experiment file drives every command. Unknown keys are rejected and no
// computation starts on an invalid file.
struct ExperimentConfig {
  AttributeSpec dataset;
  TrainConfig train;  // also carries the network shape and margins
  std::vector<std::string> compare_variants;
  std::vector<std::string> compare_from_blocks;  // ablation sweep over insertion depth
  std::vector<uint64_t> seeds;
  std::string output_dir = "out";
  std::string dataset_file;  // defaults to <output_dir>/dataset.bin
  int ucr_passes = 1;        // measurement passes for the ucr-report command
  std::string config_hash;   // hex FNV-1a of the canonical config text

  std::string dataset_path() const;
};

// overrides: "section.key=value" entries applied before parsing
// (flag > file precedence).
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});

uint64_t fnv1a64(const std::string& s);

}  // namespace modnet
