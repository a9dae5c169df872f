#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rulemine/kg.hpp"
#include "rulemine/model.hpp"

namespace rulemine {

/// A mined chain rule: head(X,Y) <- body_1(X,Z_1) & ... & body_m(Z_{m-1},Y).
/// Body atoms are augmented relation ids (inverses allowed, self-loop
/// entries already stripped).
struct Rule {
  int head_rel = 0;
  std::vector<int> body;
  double confidence = 0.0;
};

struct ParsedRule {
  std::vector<int> body;
  double confidence = 0.0;
};

/// Decodes grounded rule bodies from the per-step distributions of one query.
/// Per step the distribution is scaled by its max; relations strictly above
/// `thr` extend every live path through each reachable entity, multiplying
/// the path confidence; paths that cannot extend die. After the last step,
/// bodies are emitted per surviving path with self-loop atoms removed; empty
/// bodies are dropped. Live paths are capped, pruning lowest confidence first.
std::vector<ParsedRule> parse_rules(const std::vector<RelationDistribution>& omegas, int head_entity,
                                    const KnowledgeGraph& kg, double thr, size_t max_paths = 10000);

struct AggregatedRule {
  int head_rel = 0;
  std::vector<int> body;
  double confidence = 0.0;  // mean of observations
  size_t support = 0;       // observation count
};

/// Confidence observations per (head relation, body).
class RuleTable {
 public:
  void add(int head_rel, const std::vector<int>& body, double confidence);
  void merge(const RuleTable& other);
  /// Mean confidence per rule, ranked by confidence desc, then support desc,
  /// then lexicographic body.
  std::vector<AggregatedRule> aggregate() const;
  size_t distinct_rules() const { return obs_.size(); }

 private:
  std::map<std::pair<int, std::vector<int>>, std::vector<double>> obs_;
};

/// Closed-world rule quality: among entity pairs connected by the body path,
/// the fraction whose head triple is present in the train graph. Undefined
/// (nullopt) when the body grounds nowhere.
std::optional<double> standard_confidence(int head_rel, const std::vector<int>& body,
                                          const KnowledgeGraph& kg);

struct ScoredRule {
  AggregatedRule rule;
  std::optional<double> sc;
};

struct TopkSc {
  double value = 0.0;
  size_t rules_used = 0;   // rules with defined SC among the top K
  bool truncated = false;  // fewer than K rules were available
};

/// Mean SC over the top-K ranked rules that have a defined SC.
TopkSc topk_average_sc(const std::vector<ScoredRule>& ranked, size_t k);

/// Rule file: one rule per line, `confidence<TAB>head<TAB>r1,r2,...` with
/// vocabulary relation names, inverses prefixed inv_.
void write_rule_file(const std::filesystem::path& path, const std::vector<AggregatedRule>& rules,
                     const KnowledgeGraph& kg);
std::vector<AggregatedRule> read_rule_file(const std::filesystem::path& path, const KnowledgeGraph& kg);

}  // namespace rulemine
