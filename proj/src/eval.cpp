#include "rulemine/eval.hpp"

#include <algorithm>
#include <cassert>
#include <mutex>
#include <thread>

#include "rulemine/errors.hpp"

namespace rulemine {

namespace {
uint64_t pair_key(int head, int rel) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(head)) << 32) | static_cast<uint32_t>(rel);
}
}  // namespace

AnswerIndex::AnswerIndex(const KnowledgeGraph& kg) {
  auto insert = [&](const TripletList& split) {
    for (const Triplet& t : split) {
      tails_[pair_key(t.head, t.rel)].push_back(t.tail);
      tails_[pair_key(t.tail, kg.inverse(t.rel))].push_back(t.head);
    }
  };
  insert(kg.train);
  insert(kg.valid);
  insert(kg.test);
  for (auto& [k, v] : tails_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

const std::vector<int>* AnswerIndex::find(int head, int rel) const {
  auto it = tails_.find(pair_key(head, rel));
  return it == tails_.end() ? nullptr : &it->second;
}

int filtered_rank(const std::vector<double>& scores, int target, const std::vector<int>& known_answers,
                  Rng& rng) {
  const double target_score = scores[static_cast<size_t>(target)];
  std::vector<char> filtered(scores.size(), 0);
  for (int a : known_answers) {
    if (a != target) filtered[static_cast<size_t>(a)] = 1;
  }
  int greater = 0, equal = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (filtered[i] || static_cast<int>(i) == target) continue;
    if (scores[i] > target_score) {
      ++greater;
    } else if (scores[i] == target_score) {
      ++equal;
    }
  }
  const int u = equal > 0 ? rng.below(equal + 1) : 0;
  return 1 + greater + u;
}

Metrics metrics_from_ranks(const std::vector<int>& ranks) {
  if (ranks.empty()) fail(ErrorCategory::data, "no ranks to aggregate");
  Metrics m;
  m.count = ranks.size();
  for (int r : ranks) {
    m.mrr += 1.0 / static_cast<double>(r);
    if (r <= 1) m.hits1 += 1.0;
    if (r <= 3) m.hits3 += 1.0;
    if (r <= 10) m.hits10 += 1.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

std::vector<RankedQuery> rank_split(const Model& model, const KnowledgeGraph& kg, const TripletList& split,
                                    const RunConfig& cfg, const AnswerIndex& answers) {
  const std::vector<Query> queries = expand_queries(split, kg);
  std::vector<RankedQuery> out(queries.size());
  int workers = cfg.workers > 0 ? cfg.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(queries.size())));

  std::exception_ptr first_error;
  std::mutex error_mu;
  auto run = [&](int w) {
    try {
      for (size_t i = static_cast<size_t>(w); i < queries.size(); i += static_cast<size_t>(workers)) {
        const Query& q = queries[i];
        const Prediction pred =
            predict_all(model, kg, q.head, q.rel, cfg, mix_seed(cfg.seed, 0xE5A1u, q.qid));
        const std::vector<int>* known = answers.find(q.head, q.rel);
        static const std::vector<int> kNone;
        Rng tie_rng(mix_seed(cfg.seed, 0x71Eu, q.qid));
        out[i].query = q;
        out[i].rank = filtered_rank(pred.scores, q.tail, known != nullptr ? *known : kNone, tie_rng);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

Metrics evaluate_split(const Model& model, const KnowledgeGraph& kg, const TripletList& split,
                       const RunConfig& cfg, const AnswerIndex& answers,
                       std::vector<RankedQuery>* ranks_out) {
  std::vector<RankedQuery> ranked = rank_split(model, kg, split, cfg, answers);
  std::vector<int> ranks;
  ranks.reserve(ranked.size());
  for (const RankedQuery& r : ranked) ranks.push_back(r.rank);
  if (ranks_out != nullptr) *ranks_out = std::move(ranked);
  return metrics_from_ranks(ranks);
}

}  // namespace rulemine
