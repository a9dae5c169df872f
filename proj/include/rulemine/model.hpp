#pragma once

#include <cstdint>
#include <vector>

#include "rulemine/kg.hpp"
#include "rulemine/subgraph.hpp"
#include "rulemine/tape.hpp"

namespace rulemine {

struct ModelConfig {
  int dim = 200;
  int layers = 2;
  int heads = 4;
  int ffn_hidden = 400;
  int rule_len = 3;
  int hops = 3;  // largest hop label the position table must cover
  int seq_len = 140;
  double dropout = 0.1;

  void validate() const;
};

/// Probability vector over the augmented relations for one reasoning step.
struct RelationDistribution {
  std::vector<double> p;

  /// Enforces the distribution contract (entries >= 0, sum within 1e-6 of 1)
  /// and bumps the global check counter.
  void validate() const;
  int argmax_lowest_id() const;
};

uint64_t distribution_checks();
void reset_distribution_checks();

/// Encoder/decoder network: type-aggregated entity embeddings in, one
/// relation distribution per reasoning step out.
class Model {
 public:
  Model(const KnowledgeGraph& kg, const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  /// Per-entity type-mix weights (base relation id, normalized count).
  const std::vector<std::pair<int, double>>& domain_mix(int entity) const {
    return dom_mix_[static_cast<size_t>(entity)];
  }
  const std::vector<std::pair<int, double>>& range_mix(int entity) const {
    return ran_mix_[static_cast<size_t>(entity)];
  }

  /// Entity embedding by itself (type mixes plus free embedding), no tape.
  Mat embed_entity(int entity) const;

  struct EncodeResult {
    ad::Var context;
    std::vector<uint8_t> key_valid;
  };
  /// Embeds a node sequence (entity + position) and runs the encoder stack
  /// with relation-aware attention over the subgraph edges.
  EncodeResult encode(ad::Tape& tape, const NodeSequence& seq, const Subgraph& sub) const;

  /// One decoder pass over the current rule prefix; returns the distribution
  /// over augmented relations for the next step.
  ad::Var decode_step(ad::Tape& tape, const std::vector<int>& rule_seq, const EncodeResult& ctx) const;

  struct UnrollResult {
    std::vector<ad::Var> omegas;
    std::vector<RelationDistribution> dists;
    std::vector<int> chosen;  // greedy argmax per step, lowest id on ties
  };
  UnrollResult unroll(ad::Tape& tape, int head_rel, const EncodeResult& ctx, int steps) const;

  int augmented_count() const { return augmented_; }

 private:
  struct CrossCache {
    std::vector<ad::Var> keys, values;  // per decoder layer, projected context
  };
  struct EncoderLayer {
    ad::Param *wq, *wk, *wkr, *wv, *wvr;
    ad::Param *ln1_g, *ln1_b;
    ad::Param *ffn_w1, *ffn_b1, *ffn_w2, *ffn_b2;
    ad::Param *ln2_g, *ln2_b;
  };
  struct DecoderLayer {
    ad::Param *self_wq, *self_wk, *self_wv;
    ad::Param *ln1_g, *ln1_b;
    ad::Param *cross_wq, *cross_wk, *cross_wv;
    ad::Param *ln2_g, *ln2_b;
    ad::Param *ffn_w1, *ffn_b1, *ffn_w2, *ffn_b2;
    ad::Param *ln3_g, *ln3_b;
  };

  ad::Var embed_sequence(ad::Tape& tape, const NodeSequence& seq) const;
  ad::Var feed_forward(ad::Tape& tape, ad::Var x, ad::Param* w1, ad::Param* b1, ad::Param* w2,
                       ad::Param* b2) const;
  CrossCache build_cross_cache(ad::Tape& tape, const EncodeResult& ctx) const;
  ad::Var decode_step_cached(ad::Tape& tape, const std::vector<int>& rule_seq, const EncodeResult& ctx,
                             const CrossCache& cache) const;

  ModelConfig cfg_;
  int num_entities_ = 0;
  int num_base_ = 0;
  int augmented_ = 0;
  ad::ParamStore params_;
  ad::Param* y_e_ = nullptr;   // (E+1) x d, last row is the BLANK token
  ad::Param* r_dom_ = nullptr;
  ad::Param* r_ran_ = nullptr;
  ad::Param* x_r_ = nullptr;   // (2R+1) x d
  ad::Param* pos_ = nullptr;   // (hops+2) x d, last row is the BLANK label
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  ad::Param *mlp_w1_, *mlp_b1_, *mlp_w2_;
  std::vector<std::vector<std::pair<int, double>>> dom_mix_, ran_mix_;
};

}  // namespace rulemine
