#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rulemine/config.hpp"
#include "rulemine/kg.hpp"
#include "rulemine/model.hpp"
#include "rulemine/tape.hpp"

namespace rulemine {

/// Tail query with the edge to hide from training-time reasoning. Inverse
/// direction queries carry the inverse relation id but mask the base edge.
struct Query {
  int head = 0;
  int rel = 0;  // augmented relation id
  int tail = 0;
  Triplet mask;   // original triple, masked together with its inverse
  uint32_t qid = 0;
};

/// Expands triples into both query directions ((h,r,?t) and (t,r^-1,?h)).
std::vector<Query> expand_queries(const TripletList& triples, const KnowledgeGraph& kg);

/// All 2|R|+1 relation views, self-loop last.
std::vector<SparseView> all_views(const KnowledgeGraph& kg, const std::optional<Triplet>& exclude = std::nullopt);

/// phi = log(max(z[target], gamma)).
double score(const std::vector<double>& z, int target, double gamma);
ad::Var score(ad::Tape& tape, ad::Var z, int target, double gamma);

/// Plain (non-differentiable) reasoning chain: z_0 one-hot at head, then
/// T mixed sparse steps.
std::vector<double> reason_chain(const KnowledgeGraph& kg, int head,
                                 const std::vector<RelationDistribution>& omegas,
                                 const std::optional<Triplet>& exclude = std::nullopt);

/// Full forward for one query on the given tape (training form: query edge
/// masked out of both the subgraph and the reasoning views). Returns -phi.
ad::Var query_loss(ad::Tape& tape, const Model& model, const KnowledgeGraph& kg, const Query& q,
                   const RunConfig& cfg, uint64_t subgraph_seed);

/// Serial reference batch objective: sum of -phi over queries; gradients
/// accumulate into `grads` when given.
double batch_loss(const std::vector<Query>& queries, const KnowledgeGraph& kg, const Model& model,
                  const RunConfig& cfg, int epoch, ad::GradBuffer* grads);

struct Prediction {
  std::vector<double> scores;  // z_T over all entities
  std::vector<RelationDistribution> dists;
  std::vector<int> chosen;
};

/// Evaluation-time forward with unmasked train adjacency.
Prediction predict_all(const Model& model, const KnowledgeGraph& kg, int head, int rel,
                       const RunConfig& cfg, uint64_t seed);

}  // namespace rulemine
