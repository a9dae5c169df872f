#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rulemine/subgraph.hpp"

namespace rulemine {

/// Resolved run settings. File format is line-based `key = value`; CLI flags
/// override file values. Defaults reproduce the reference setup (lr 1e-4,
/// dim 200, 2 layers, dropout 0.1, score floor 1e-20, caps 140/40).
struct RunConfig {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "out";
  std::string profile = "auto";  // auto | umls | fb15k-237 | wn18rr | custom

  int rule_len = 3;  // T
  int dim = 200;
  int layers = 2;
  int heads = 4;
  int ffn_hidden = 0;  // 0 = 2 * dim
  double dropout = 0.1;
  double lr = 1e-4;
  double gamma = 1e-20;  // score floor

  int max_context_entities = 140;
  int max_neighbors_per_relation = 40;
  int hops = 0;  // 0 = profile default

  int batch_size = 64;
  int max_epochs = 1000;
  int patience = 20;  // validation rounds without improvement
  int eval_every = 1;
  double rule_threshold = 0.1;
  uint64_t seed = 2024;
  int workers = 0;  // 0 = hardware concurrency

  SubgraphCaps caps() const {
    return SubgraphCaps{max_context_entities, max_neighbors_per_relation, hops};
  }
  int seq_len() const { return max_context_entities; }
  int ffn() const { return ffn_hidden > 0 ? ffn_hidden : 2 * dim; }

  /// Applies dataset-profile defaults and validates ranges.
  void resolve();
  void validate() const;
};

RunConfig load_config_file(const std::filesystem::path& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value,
                       const std::string& where);
void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace rulemine
