#pragma once

#include <iosfwd>
#include <map>

#include "rulemine/eval.hpp"
#include "rulemine/optim.hpp"

namespace rulemine {

struct TrainResult {
  double best_valid_mrr = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<double> epoch_losses;
  std::filesystem::path checkpoint_path;
};

/// Mini-batch loop over both directions of the train split with query-edge
/// masking, Adam updates per batch, and early stopping on validation MRR.
/// Parameters are rounded through 32-bit storage before every validation
/// pass, so a saved checkpoint reproduces the recorded metric exactly.
TrainResult train_model(Model& model, const KnowledgeGraph& kg, const RunConfig& cfg, std::ostream& log);

std::map<std::string, std::string> arch_meta(const Model& model, const KnowledgeGraph& kg);

/// Raises a checkpoint error if the sidecar's architecture does not match.
void check_arch_meta(const std::map<std::string, std::string>& meta, const Model& model,
                     const KnowledgeGraph& kg);

}  // namespace rulemine
