#pragma once

#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rulemine/reasoner.hpp"

namespace rulemine {

/// True tails per (head, augmented relation) over train+valid+test, used by
/// the filtered ranking protocol.
class AnswerIndex {
 public:
  explicit AnswerIndex(const KnowledgeGraph& kg);
  const std::vector<int>* find(int head, int rel) const;

 private:
  std::unordered_map<uint64_t, std::vector<int>> tails_;
};

/// Filtered rank with random placement among equal scores: known answers
/// other than the target leave the candidate list; the rank is
/// 1 + #strictly-better + U with U uniform over the target's tie group.
int filtered_rank(const std::vector<double>& scores, int target, const std::vector<int>& known_answers,
                  Rng& rng);

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  size_t count = 0;
};

Metrics metrics_from_ranks(const std::vector<int>& ranks);

struct RankedQuery {
  Query query;
  int rank = 0;
};

/// Both query directions for every triple, evaluated in parallel.
/// Tie randomness is seeded per query id from cfg.seed.
std::vector<RankedQuery> rank_split(const Model& model, const KnowledgeGraph& kg, const TripletList& split,
                                    const RunConfig& cfg, const AnswerIndex& answers);

Metrics evaluate_split(const Model& model, const KnowledgeGraph& kg, const TripletList& split,
                       const RunConfig& cfg, const AnswerIndex& answers,
                       std::vector<RankedQuery>* ranks_out = nullptr);

}  // namespace rulemine
