#include "rulemine/reasoner.hpp"

#include <cassert>
#include <cmath>

#include "rulemine/errors.hpp"

namespace rulemine {

std::vector<Query> expand_queries(const TripletList& triples, const KnowledgeGraph& kg) {
  std::vector<Query> out;
  out.reserve(triples.size() * 2);
  uint32_t qid = 0;
  for (const Triplet& t : triples) {
    out.push_back({t.head, t.rel, t.tail, t, qid++});
    out.push_back({t.tail, kg.inverse(t.rel), t.head, t, qid++});
  }
  return out;
}

std::vector<SparseView> all_views(const KnowledgeGraph& kg, const std::optional<Triplet>& exclude) {
  std::vector<SparseView> views;
  views.reserve(static_cast<size_t>(kg.augmented_count()));
  for (int r = 0; r < kg.augmented_count(); ++r) views.push_back(kg.view(r, exclude));
  return views;
}

double score(const std::vector<double>& z, int target, double gamma) {
  assert(gamma > 0.0);
  return std::log(std::max(z[static_cast<size_t>(target)], gamma));
}

ad::Var score(ad::Tape& tape, ad::Var z, int target, double gamma) {
  return tape.clamp_log(tape.pick(z, target), gamma);
}

std::vector<double> reason_chain(const KnowledgeGraph& kg, int head,
                                 const std::vector<RelationDistribution>& omegas,
                                 const std::optional<Triplet>& exclude) {
  const int E = kg.num_entities();
  const std::vector<SparseView> views = all_views(kg, exclude);
  std::vector<double> z(static_cast<size_t>(E), 0.0);
  z[static_cast<size_t>(head)] = 1.0;
  std::vector<double> next(static_cast<size_t>(E));
  for (const RelationDistribution& omega : omegas) {
    assert(static_cast<int>(omega.p.size()) == kg.augmented_count());
    std::fill(next.begin(), next.end(), 0.0);
    for (int r = 0; r < kg.augmented_count(); ++r) {
      const double w = omega.p[static_cast<size_t>(r)];
      if (w == 0.0) continue;
      const SparseView& vw = views[static_cast<size_t>(r)];
      for (int i = 0; i < E; ++i) {
        const double zi = z[static_cast<size_t>(i)];
        if (zi == 0.0) continue;
        const double wz = w * zi;
        vw.for_row(i, [&](int j) { next[static_cast<size_t>(j)] += wz; });
      }
    }
    z.swap(next);
  }
  return z;
}

namespace {

struct ForwardParts {
  Model::EncodeResult ctx;
  Model::UnrollResult unrolled;
  Subgraph sub;
};

ForwardParts run_encoder_decoder(ad::Tape& tape, const Model& model, const KnowledgeGraph& kg, int head,
                                 int rel, const RunConfig& cfg, const std::optional<Triplet>& mask,
                                 uint64_t subgraph_seed) {
  ForwardParts parts;
  parts.sub = extract_subgraph(kg, head, cfg.caps(), mask, subgraph_seed);
  const NodeSequence seq = to_node_sequence(parts.sub, cfg.seq_len());
  parts.ctx = model.encode(tape, seq, parts.sub);
  parts.unrolled = model.unroll(tape, rel, parts.ctx, cfg.rule_len);
  return parts;
}

}  // namespace

ad::Var query_loss(ad::Tape& tape, const Model& model, const KnowledgeGraph& kg, const Query& q,
                   const RunConfig& cfg, uint64_t subgraph_seed) {
  const std::optional<Triplet> mask(q.mask);
  ForwardParts parts = run_encoder_decoder(tape, model, kg, q.head, q.rel, cfg, mask, subgraph_seed);
  const std::vector<SparseView> views = all_views(kg, mask);

  Mat z0(1, kg.num_entities());
  z0(0, q.head) = 1.0;
  ad::Var z = tape.put(std::move(z0));
  for (ad::Var omega : parts.unrolled.omegas) z = tape.reason_step(z, omega, views);
  ad::Var phi = score(tape, z, q.tail, cfg.gamma);
  return tape.scale(phi, -1.0);
}

double batch_loss(const std::vector<Query>& queries, const KnowledgeGraph& kg, const Model& model,
                  const RunConfig& cfg, int epoch, ad::GradBuffer* grads) {
  double total = 0.0;
  for (const Query& q : queries) {
    Rng drop_rng(mix_seed(cfg.seed, 0xD0u, (static_cast<uint64_t>(epoch) << 32) | q.qid));
    ad::Tape tape(grads, /*training=*/grads != nullptr, &drop_rng);
    const uint64_t sg_seed = mix_seed(cfg.seed, 0x5B6u, (static_cast<uint64_t>(epoch) << 32) | q.qid);
    ad::Var loss = query_loss(tape, model, kg, q, cfg, sg_seed);
    total += tape.val(loss)(0, 0);
    if (grads != nullptr) tape.backward(loss);
  }
  return total;
}

Prediction predict_all(const Model& model, const KnowledgeGraph& kg, int head, int rel,
                       const RunConfig& cfg, uint64_t seed) {
  ad::Tape tape(nullptr);
  ForwardParts parts = run_encoder_decoder(tape, model, kg, head, rel, cfg, std::nullopt, seed);
  Prediction pred;
  pred.dists = std::move(parts.unrolled.dists);
  pred.chosen = std::move(parts.unrolled.chosen);
  pred.scores = reason_chain(kg, head, pred.dists, std::nullopt);
  return pred;
}

}  // namespace rulemine
