#include "rulemine/model.hpp"

#include <atomic>
#include <cassert>
#include <cmath>

#include "rulemine/errors.hpp"

namespace rulemine {

namespace {
std::atomic<uint64_t> g_distribution_checks{0};
}

void ModelConfig::validate() const {
  // layers == 0 is legal (identity stacks), useful for isolating the embeddings
  if (dim <= 0 || layers < 0 || heads <= 0 || ffn_hidden <= 0 || rule_len < 1 || hops < 1 || seq_len <= 0) {
    fail(ErrorCategory::config, "model configuration fields must be positive");
  }
  if (dim % heads != 0) fail(ErrorCategory::config, "dim must be divisible by heads");
  if (dropout < 0 || dropout >= 1) fail(ErrorCategory::config, "dropout must be in [0,1)");
}

void RelationDistribution::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) fail(ErrorCategory::numeric, "relation distribution has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    fail(ErrorCategory::numeric, "relation distribution sums to " + std::to_string(sum));
  }
  g_distribution_checks.fetch_add(1, std::memory_order_relaxed);
}

int RelationDistribution::argmax_lowest_id() const {
  int best = 0;
  for (int i = 1; i < static_cast<int>(p.size()); ++i) {
    if (p[static_cast<size_t>(i)] > p[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

uint64_t distribution_checks() { return g_distribution_checks.load(std::memory_order_relaxed); }
void reset_distribution_checks() { g_distribution_checks.store(0, std::memory_order_relaxed); }

Model::Model(const KnowledgeGraph& kg, const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  num_entities_ = kg.num_entities();
  num_base_ = kg.num_base();
  augmented_ = kg.augmented_count();
  const int d = cfg_.dim;
  const int f = cfg_.ffn_hidden;

  y_e_ = &params_.create("y_e", num_entities_ + 1, d);
  r_dom_ = &params_.create("r_dom", num_base_, d);
  r_ran_ = &params_.create("r_ran", num_base_, d);
  x_r_ = &params_.create("x_r", augmented_, d);
  pos_ = &params_.create("pos", cfg_.hops + 2, d);

  enc_.resize(static_cast<size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "enc" + std::to_string(l) + ".";
    EncoderLayer& e = enc_[static_cast<size_t>(l)];
    e.wq = &params_.create(pre + "wq", d, d);
    e.wk = &params_.create(pre + "wk", d, d);
    e.wkr = &params_.create(pre + "wkr", d, d);
    e.wv = &params_.create(pre + "wv", d, d);
    e.wvr = &params_.create(pre + "wvr", d, d);
    e.ln1_g = &params_.create(pre + "ln1.g", 1, d);
    e.ln1_b = &params_.create(pre + "ln1.b", 1, d);
    e.ffn_w1 = &params_.create(pre + "ffn.w1", d, f);
    e.ffn_b1 = &params_.create(pre + "ffn.b1", 1, f);
    e.ffn_w2 = &params_.create(pre + "ffn.w2", f, d);
    e.ffn_b2 = &params_.create(pre + "ffn.b2", 1, d);
    e.ln2_g = &params_.create(pre + "ln2.g", 1, d);
    e.ln2_b = &params_.create(pre + "ln2.b", 1, d);
  }
  dec_.resize(static_cast<size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string pre = "dec" + std::to_string(l) + ".";
    DecoderLayer& e = dec_[static_cast<size_t>(l)];
    e.self_wq = &params_.create(pre + "self.wq", d, d);
    e.self_wk = &params_.create(pre + "self.wk", d, d);
    e.self_wv = &params_.create(pre + "self.wv", d, d);
    e.ln1_g = &params_.create(pre + "ln1.g", 1, d);
    e.ln1_b = &params_.create(pre + "ln1.b", 1, d);
    e.cross_wq = &params_.create(pre + "cross.wq", d, d);
    e.cross_wk = &params_.create(pre + "cross.wk", d, d);
    e.cross_wv = &params_.create(pre + "cross.wv", d, d);
    e.ln2_g = &params_.create(pre + "ln2.g", 1, d);
    e.ln2_b = &params_.create(pre + "ln2.b", 1, d);
    e.ffn_w1 = &params_.create(pre + "ffn.w1", d, f);
    e.ffn_b1 = &params_.create(pre + "ffn.b1", 1, f);
    e.ffn_w2 = &params_.create(pre + "ffn.w2", f, d);
    e.ffn_b2 = &params_.create(pre + "ffn.b2", 1, d);
    e.ln3_g = &params_.create(pre + "ln3.g", 1, d);
    e.ln3_b = &params_.create(pre + "ln3.b", 1, d);
  }
  mlp_w1_ = &params_.create("mlp.w1", d, d);
  mlp_b1_ = &params_.create("mlp.b1", 1, d);
  mlp_w2_ = &params_.create("mlp.w2", d, augmented_);

  // init: small normal embeddings, Xavier projections, unit LN gains
  Rng rng(seed);
  auto fill_normal = [&](ad::Param* p, double sigma) {
    for (double& v : p->value.a) v = sigma * rng.normal();
  };
  auto fill_xavier = [&](ad::Param* p, double gain = 1.0) {
    const double sigma = gain * std::sqrt(2.0 / (p->value.rows + p->value.cols));
    for (double& v : p->value.a) v = sigma * rng.normal();
  };
  auto fill_ones = [](ad::Param* p) {
    for (double& v : p->value.a) v = 1.0;
  };
  // residual branches (value projections, second feed-forward layers) start
  // small so token identity survives the stack early in training
  const double kBranchGain = 0.1;
  fill_normal(y_e_, 0.1);
  fill_normal(r_dom_, 0.1);
  fill_normal(r_ran_, 0.1);
  fill_normal(x_r_, 0.1);
  fill_normal(pos_, 0.1);
  for (auto& e : enc_) {
    fill_xavier(e.wq);
    fill_xavier(e.wk);
    fill_xavier(e.wkr);
    fill_xavier(e.wv, kBranchGain);
    fill_xavier(e.wvr, kBranchGain);
    fill_ones(e.ln1_g);
    fill_ones(e.ln2_g);
    fill_xavier(e.ffn_w1);
    fill_xavier(e.ffn_w2, kBranchGain);
  }
  for (auto& e : dec_) {
    fill_xavier(e.self_wq);
    fill_xavier(e.self_wk);
    fill_xavier(e.self_wv, kBranchGain);
    fill_xavier(e.cross_wq);
    fill_xavier(e.cross_wk);
    fill_xavier(e.cross_wv, kBranchGain);
    fill_ones(e.ln1_g);
    fill_ones(e.ln2_g);
    fill_ones(e.ln3_g);
    fill_xavier(e.ffn_w1);
    fill_xavier(e.ffn_w2, kBranchGain);
  }
  fill_xavier(mlp_w1_);
  fill_normal(mlp_w2_, 0.1);

  // type-mix coefficients from train adjacency, computed once
  dom_mix_.resize(static_cast<size_t>(num_entities_));
  ran_mix_.resize(static_cast<size_t>(num_entities_));
  for (int e = 0; e < num_entities_; ++e) {
    double dom_total = 0.0, ran_total = 0.0;
    for (int r = 0; r < num_base_; ++r) {
      dom_total += kg.adjacency[static_cast<size_t>(r)].row_nnz(e);
      ran_total += kg.adjacency[static_cast<size_t>(r + num_base_)].row_nnz(e);
    }
    for (int r = 0; r < num_base_; ++r) {
      const int nd = kg.adjacency[static_cast<size_t>(r)].row_nnz(e);
      const int nr = kg.adjacency[static_cast<size_t>(r + num_base_)].row_nnz(e);
      if (nd > 0) dom_mix_[static_cast<size_t>(e)].emplace_back(r, nd / dom_total);
      if (nr > 0) ran_mix_[static_cast<size_t>(e)].emplace_back(r, nr / ran_total);
    }
  }
}

Mat Model::embed_entity(int entity) const {
  const int d = cfg_.dim;
  Mat out(1, d);
  for (const auto& [r, b] : dom_mix_[static_cast<size_t>(entity)]) {
    const double* row = r_dom_->value.row(r);
    for (int j = 0; j < d; ++j) out(0, j) += b * row[j];
  }
  for (const auto& [r, b] : ran_mix_[static_cast<size_t>(entity)]) {
    const double* row = r_ran_->value.row(r);
    for (int j = 0; j < d; ++j) out(0, j) += b * row[j];
  }
  const double* ye = y_e_->value.row(entity);
  for (int j = 0; j < d; ++j) out(0, j) += ye[j];
  return out;
}

ad::Var Model::embed_sequence(ad::Tape& tape, const NodeSequence& seq) const {
  const int n = static_cast<int>(seq.tokens.size());
  std::vector<int> y_ids(static_cast<size_t>(n));
  std::vector<int> pos_ids(static_cast<size_t>(n));
  std::vector<std::vector<std::pair<int, double>>> dom_rows(static_cast<size_t>(n));
  std::vector<std::vector<std::pair<int, double>>> ran_rows(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int tok = seq.tokens[static_cast<size_t>(i)];
    if (tok == kBlankToken) {
      y_ids[static_cast<size_t>(i)] = num_entities_;  // BLANK row
      pos_ids[static_cast<size_t>(i)] = cfg_.hops + 1;
    } else {
      y_ids[static_cast<size_t>(i)] = tok;
      const int dist = seq.distances[static_cast<size_t>(i)];
      assert(dist >= 0 && dist <= cfg_.hops);
      pos_ids[static_cast<size_t>(i)] = dist;
      dom_rows[static_cast<size_t>(i)] = dom_mix_[static_cast<size_t>(tok)];
      ran_rows[static_cast<size_t>(i)] = ran_mix_[static_cast<size_t>(tok)];
    }
  }
  ad::Var x = tape.add(tape.mix_rows(std::move(dom_rows), *r_dom_), tape.mix_rows(std::move(ran_rows), *r_ran_));
  x = tape.add(x, tape.gather_rows(*y_e_, std::move(y_ids)));
  x = tape.add(x, tape.gather_rows(*pos_, std::move(pos_ids)));
  return x;
}

ad::Var Model::feed_forward(ad::Tape& tape, ad::Var x, ad::Param* w1, ad::Param* b1, ad::Param* w2,
                            ad::Param* b2) const {
  ad::Var h = tape.gelu(tape.bias_add(tape.linear(x, *w1), *b1));
  h = tape.dropout(h, cfg_.dropout);
  return tape.bias_add(tape.linear(h, *w2), *b2);
}

Model::EncodeResult Model::encode(ad::Tape& tape, const NodeSequence& seq, const Subgraph& sub) const {
  EncodeResult res;
  res.key_valid = seq.mask;

  // both orientations of every subgraph edge inform attention
  std::vector<ad::AttnEdge> edges;
  edges.reserve(sub.edges.size() * 2);
  for (const SubgraphEdge& e : sub.edges) {
    edges.push_back({e.src, e.rel, e.dst});
    edges.push_back({e.dst, e.rel + num_base_, e.src});
  }

  ad::Var x = embed_sequence(tape, seq);
  for (const EncoderLayer& layer : enc_) {
    ad::AttnOptions opt;
    opt.heads = cfg_.heads;
    opt.dropout_p = cfg_.dropout;
    opt.key_valid = &res.key_valid;
    if (!edges.empty()) {
      opt.edges = &edges;
      opt.rel_k = tape.param_matmul(*x_r_, *layer.wkr);
      opt.rel_v = tape.param_matmul(*x_r_, *layer.wvr);
    }
    ad::Var attn = tape.attention(tape.linear(x, *layer.wq), tape.linear(x, *layer.wk),
                                  tape.linear(x, *layer.wv), opt);
    ad::Var x1 = tape.layer_norm(tape.add(x, attn), *layer.ln1_g, *layer.ln1_b);
    ad::Var ff = feed_forward(tape, x1, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2, layer.ffn_b2);
    x = tape.layer_norm(tape.add(x1, ff), *layer.ln2_g, *layer.ln2_b);
  }
  res.context = x;
  return res;
}

Model::CrossCache Model::build_cross_cache(ad::Tape& tape, const EncodeResult& ctx) const {
  CrossCache cache;
  cache.keys.reserve(dec_.size());
  cache.values.reserve(dec_.size());
  for (const DecoderLayer& layer : dec_) {
    cache.keys.push_back(tape.linear(ctx.context, *layer.cross_wk));
    cache.values.push_back(tape.linear(ctx.context, *layer.cross_wv));
  }
  return cache;
}

ad::Var Model::decode_step_cached(ad::Tape& tape, const std::vector<int>& rule_seq,
                                  const EncodeResult& ctx, const CrossCache& cache) const {
  assert(!rule_seq.empty());
  ad::Var y = tape.gather_rows(*x_r_, rule_seq);
  for (size_t l = 0; l < dec_.size(); ++l) {
    const DecoderLayer& layer = dec_[l];
    ad::AttnOptions self_opt;
    self_opt.heads = cfg_.heads;
    self_opt.causal = true;
    self_opt.dropout_p = cfg_.dropout;
    ad::Var sa = tape.attention(tape.linear(y, *layer.self_wq), tape.linear(y, *layer.self_wk),
                                tape.linear(y, *layer.self_wv), self_opt);
    ad::Var y1 = tape.layer_norm(tape.add(y, sa), *layer.ln1_g, *layer.ln1_b);

    ad::AttnOptions cross_opt;
    cross_opt.heads = cfg_.heads;
    cross_opt.dropout_p = cfg_.dropout;
    cross_opt.key_valid = &ctx.key_valid;
    ad::Var ca = tape.attention(tape.linear(y1, *layer.cross_wq), cache.keys[l], cache.values[l],
                                cross_opt);
    ad::Var y2 = tape.layer_norm(tape.add(y1, ca), *layer.ln2_g, *layer.ln2_b);
    ad::Var ff = feed_forward(tape, y2, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2, layer.ffn_b2);
    y = tape.layer_norm(tape.add(y2, ff), *layer.ln3_g, *layer.ln3_b);
  }
  ad::Var last = tape.slice_row(y, static_cast<int>(rule_seq.size()) - 1);
  ad::Var h = tape.tanh_act(tape.bias_add(tape.linear(last, *mlp_w1_), *mlp_b1_));
  h = tape.dropout(h, cfg_.dropout);
  // no bias on the logits layer: the step distribution must come from the
  // conditioned readout, not a shared offset
  ad::Var logits = tape.linear(h, *mlp_w2_);
  return tape.softmax_row(logits);
}

ad::Var Model::decode_step(ad::Tape& tape, const std::vector<int>& rule_seq, const EncodeResult& ctx) const {
  return decode_step_cached(tape, rule_seq, ctx, build_cross_cache(tape, ctx));
}

Model::UnrollResult Model::unroll(ad::Tape& tape, int head_rel, const EncodeResult& ctx, int steps) const {
  assert(steps >= 1);
  const CrossCache cache = build_cross_cache(tape, ctx);
  UnrollResult res;
  std::vector<int> rule_seq{head_rel};
  for (int t = 0; t < steps; ++t) {
    ad::Var omega = decode_step_cached(tape, rule_seq, ctx, cache);
    RelationDistribution dist;
    dist.p = tape.val(omega).a;
    dist.validate();
    const int next = dist.argmax_lowest_id();
    res.omegas.push_back(omega);
    res.dists.push_back(std::move(dist));
    res.chosen.push_back(next);
    rule_seq.push_back(next);
  }
  return res;
}

}  // namespace rulemine
