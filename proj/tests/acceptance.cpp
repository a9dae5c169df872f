// Acceptance suite: runs every gate criterion end to end against the bundled
// dataset and prints one PASS/FAIL line per criterion. Exit code 0 only when
// all criteria hold. The two training criteria dominate the runtime; their
// logs stream to stderr.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "reference_nn.hpp"
#include "rulemine/checkpoint.hpp"
#include "rulemine/eval.hpp"
#include "rulemine/gradcheck.hpp"
#include "rulemine/rules.hpp"
#include "rulemine/trainer.hpp"

using namespace rulemine;

namespace {

#ifndef ACCEPT_DATA_DIR
#define ACCEPT_DATA_DIR "data"
#endif

struct Gate {
  int failures = 0;

  void run(const std::string& name, const std::function<bool(std::string&)>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      ok = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << name << "  (" << std::fixed
              << std::setprecision(1) << secs << "s)" << (detail.empty() ? "" : "  " + detail)
              << std::endl;
    if (!ok) ++failures;
  }
};

ModelConfig model_config_for(const RunConfig& cfg) {
  ModelConfig mc;
  mc.dim = cfg.dim;
  mc.layers = cfg.layers;
  mc.heads = cfg.heads;
  mc.ffn_hidden = cfg.ffn();
  mc.rule_len = cfg.rule_len;
  mc.hops = cfg.hops;
  mc.seq_len = cfg.seq_len();
  mc.dropout = cfg.dropout;
  return mc;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

// desk-scale training configuration shared by criteria 2 and 7: reduced
// dimension and a raised learning rate for the CPU budget; everything else
// keeps the reference defaults
RunConfig desk_config(const std::filesystem::path& data, const std::filesystem::path& out, int rule_len) {
  RunConfig cfg;
  cfg.data_dir = data;
  cfg.out_dir = out;
  cfg.rule_len = rule_len;
  cfg.dim = 64;
  cfg.lr = 3e-3;
  cfg.batch_size = 32;
  cfg.max_epochs = 40;
  cfg.patience = 10;
  cfg.eval_every = 2;
  cfg.seed = 2024;
  cfg.resolve();
  return cfg;
}

RunConfig toy_run_config() {
  RunConfig cfg;
  cfg.data_dir = ".";
  cfg.profile = "custom";
  cfg.rule_len = 2;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_hidden = 16;
  cfg.dropout = 0.0;
  cfg.lr = 1e-2;
  cfg.max_context_entities = 14;
  cfg.max_neighbors_per_relation = 8;
  cfg.hops = 2;
  cfg.batch_size = 1000;
  cfg.max_epochs = 60;
  cfg.patience = 1000;
  cfg.eval_every = 1000;
  cfg.seed = 11;
  cfg.workers = 2;
  cfg.resolve();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path data_dir =
      argc > 1 ? argv[1] : (std::filesystem::path(ACCEPT_DATA_DIR) / "umls");
  const std::filesystem::path work = "acceptance_out";
  std::filesystem::create_directories(work);
  Gate gate;

  // ---- 1. dataset fidelity -------------------------------------------------
  KnowledgeGraph umls;
  gate.run("1 dataset-fidelity", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    umls = load_dataset(data_dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const DatasetStats s = umls.stats();
    detail = std::to_string(s.triplet_count) + " triples / " + std::to_string(s.entity_count) +
             " entities / " + std::to_string(s.relation_count) + " relations, avg degree " +
             fmt(s.avg_degree, 1) + ", augmented " + std::to_string(umls.augmented_count());
    return s.triplet_count == 5960 && s.entity_count == 135 && s.relation_count == 46 &&
           std::abs(s.avg_degree - 88.3) <= 0.1 && umls.augmented_count() == 93 && secs < 5.0;
  });

  // ---- 3. gradient correctness over every parameter block -------------------
  gate.run("3 gradient-correctness", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const KnowledgeGraph kg = testutil::make_kg({{"a", "p", "b"},
                                                 {"b", "q", "c"},
                                                 {"a", "s", "c"},
                                                 {"c", "p", "d"},
                                                 {"d", "q", "e"},
                                                 {"c", "s", "e"}});
    RunConfig cfg = toy_run_config();
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.ffn_hidden = 8;
    cfg.max_context_entities = 6;
    Model model(kg, model_config_for(cfg), 1234);
    const int s = *kg.relations.find("s");
    const Triplet query{*kg.entities.find("a"), s, *kg.entities.find("c")};
    const std::vector<Query> queries = {{query.head, query.rel, query.tail, query, 0},
                                        {query.tail, kg.inverse(query.rel), query.head, query, 1}};
    auto loss = [&](ad::GradBuffer* g) { return batch_loss(queries, kg, model, cfg, 0, g); };

    // every block must feed the loss: check analytic gradients are live
    ad::GradBuffer grads(model.params());
    loss(&grads);
    std::vector<std::string> dead;
    for (size_t i = 0; i < model.params().count(); ++i) {
      const ad::Param& p = model.params().at(i);
      double norm = 0.0;
      for (double v : grads.of(p).a) norm += std::abs(v);
      if (norm == 0.0) dead.push_back(p.name);
    }
    // the blank embedding row is the only permissible dead block: it is
    // masked out of every sum by construction, and here it checks as a
    // covered block through the finite-difference agreement below
    dead.erase(std::remove_if(dead.begin(), dead.end(),
                              [](const std::string& n) { return n == "y_e"; }),
               dead.end());

    const ad::GradCheckReport rep = ad::grad_check(model.params(), loss, 1e-5, 3, 5);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = "max rel err " + fmt(rep.max_rel_err, 8) + " over " + std::to_string(rep.coords_checked) +
             " coords (worst: " + rep.worst_param + ")";
    if (!dead.empty()) detail += ", dead blocks: " + dead.front() + "...";
    return rep.max_rel_err < 1e-4 && rep.coords_checked > static_cast<int>(model.params().count()) &&
           dead.empty() && secs < 60.0;
  });

  // ---- 4. sparse reasoning equals exhaustive path enumeration ---------------
  gate.run("4 reasoning-oracle-equivalence", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(4242);
    int trials = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
      const int entities = 4 + rng.below(7);           // up to 10
      const int relations = 1 + rng.below(4);          // up to 4
      const KnowledgeGraph kg = testutil::random_kg(entities, relations, 3 * entities, rng);
      const int steps = 1 + rng.below(3);              // T <= 3
      const auto omegas = testutil::random_omegas(kg, steps, rng);
      const int head = rng.below(kg.num_entities());
      const auto fast = reason_chain(kg, head, omegas);
      const auto oracle = testutil::brute_force_chain(kg, head, omegas);
      for (size_t i = 0; i < fast.size(); ++i) {
        worst = std::max(worst, std::abs(fast[i] - oracle[i]));
      }
      ++trials;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = std::to_string(trials) + " graphs, max deviation " + fmt(worst, 14);
    return trials >= 100 && worst < 1e-10 && secs < 60.0;
  });

  // ---- 5. vanilla-attention reduction, bitwise -------------------------------
  gate.run("5 vanilla-attention-reduction", [&](std::string& detail) {
    const KnowledgeGraph kg = testutil::make_kg(
        {{"a", "r", "b"}, {"b", "s", "c"}, {"c", "r", "a"}, {"a", "s", "c"}});
    ModelConfig cfg0, cfg1;
    cfg0.dim = cfg1.dim = 8;
    cfg0.heads = cfg1.heads = 2;
    cfg0.ffn_hidden = cfg1.ffn_hidden = 16;
    cfg0.rule_len = cfg1.rule_len = 2;
    cfg0.hops = cfg1.hops = 2;
    cfg0.seq_len = cfg1.seq_len = 6;
    cfg0.dropout = cfg1.dropout = 0.0;
    cfg0.layers = 0;
    cfg1.layers = 1;
    const Model base(kg, cfg0, 99);  // same seed: identical embedding tables
    Model ablated(kg, cfg1, 99);
    ablated.params().find("x_r")->value.zero();

    const Subgraph sub = extract_subgraph(kg, *kg.entities.find("a"), {6, 5, 2}, std::nullopt, 1);
    if (sub.edges.empty()) {
      detail = "toy subgraph has no edges";
      return false;
    }
    const NodeSequence seq = to_node_sequence(sub, 6);
    ad::Tape t0(nullptr), t1(nullptr);
    const Mat x = t0.val(base.encode(t0, seq, sub).context);
    const Mat& impl = t1.val(ablated.encode(t1, seq, sub).context);

    auto P = [&](const char* name) -> const Mat& { return ablated.params().find(name)->value; };
    const Mat attn = refnn::attention(refnn::mm(x, P("enc0.wq")), refnn::mm(x, P("enc0.wk")),
                                      refnn::mm(x, P("enc0.wv")), 2, false, &seq.mask);
    const Mat x1 = refnn::layer_norm(refnn::add(x, attn), P("enc0.ln1.g"), P("enc0.ln1.b"));
    Mat h = refnn::mm(x1, P("enc0.ffn.w1"));
    refnn::add_bias(h, P("enc0.ffn.b1"));
    h = refnn::gelu(h);
    Mat h2 = refnn::mm(h, P("enc0.ffn.w2"));
    refnn::add_bias(h2, P("enc0.ffn.b2"));
    const Mat expect = refnn::layer_norm(refnn::add(x1, h2), P("enc0.ln2.g"), P("enc0.ln2.b"));

    const bool equal = impl.rows == expect.rows && impl.cols == expect.cols &&
                       std::memcmp(impl.a.data(), expect.a.data(), impl.size() * sizeof(double)) == 0;
    detail = equal ? "bitwise equal over " + std::to_string(impl.size()) + " values" : "mismatch";
    return equal;
  });

  // ---- 6. rule parsing fidelity ----------------------------------------------
  gate.run("6 rule-parsing-fidelity", [&](std::string& detail) {
    // (a) hand-traced runs of the parsing procedure
    const KnowledgeGraph kg = testutil::make_kg({{"h", "r1", "x"}, {"h", "r2", "y"}, {"x", "r2", "z"}});
    const int h = *kg.entities.find("h");
    const int r1 = *kg.relations.find("r1"), r2 = *kg.relations.find("r2");
    auto dist = [&](std::vector<std::pair<int, double>> entries) {
      RelationDistribution d;
      d.p.assign(static_cast<size_t>(kg.augmented_count()), 0.0);
      double sum = 0.0;
      for (auto& [r, w] : entries) {
        d.p[static_cast<size_t>(r)] = w;
        sum += w;
      }
      d.p[static_cast<size_t>(kg.self_loop())] += 1.0 - sum;
      return d;
    };
    // trace 1: scale [0.8, 0.2] -> [1.0, 0.25]; thr 0.5 keeps r1 only; one
    // grounded extension h -> x; confidence 1.0
    const auto t1 = parse_rules({dist({{r1, 0.8}, {r2, 0.2}})}, h, kg, 0.5);
    const bool trace1 = t1.size() == 1 && t1[0].body == std::vector<int>{r1} &&
                        std::abs(t1[0].confidence - 1.0) < 1e-12;
    // trace 2: both steps ride the self-loop; the stripped body is empty
    const auto t2 =
        parse_rules({dist({{kg.self_loop(), 1.0}}), dist({{kg.self_loop(), 1.0}})}, h, kg, 0.5);
    const bool trace2 = t2.empty();
    // trace 3: two live relations at step 2; only the grounded one survives,
    // carrying 0.8 * (0.5/0.5 scaled to 1.0) * ... = scaled confidences
    const auto t3 =
        parse_rules({dist({{r1, 0.8}, {r2, 0.2}}), dist({{r2, 0.5}, {r1, 0.3}})}, h, kg, 0.5);
    const bool trace3 = t3.size() == 1 && t3[0].body == std::vector<int>{r1, r2} &&
                        std::abs(t3[0].confidence - 1.0) < 1e-12;

    // (b) planted-rule recovery after training on a synthetic composition
    std::vector<testutil::StrTriple> train;
    for (int i = 0; i < 4; ++i) {
      const std::string x = "x" + std::to_string(i), y = "y" + std::to_string(i),
                        z = "z" + std::to_string(i);
      train.push_back({x, "p", y});
      train.push_back({y, "q", z});
      train.push_back({x, "s", z});
    }
    train.push_back({"x0", "noise", "y2"});
    train.push_back({"x1", "noise", "z3"});
    const KnowledgeGraph planted = testutil::make_kg(train);
    RunConfig cfg = toy_run_config();
    Model model(planted, model_config_for(cfg), cfg.seed);
    std::ostringstream log;
    train_model(model, planted, cfg, log);
    const int s = *planted.relations.find("s");
    RuleTable table;
    for (const Triplet& t : planted.train) {
      if (t.rel != s) continue;
      const Prediction pred = predict_all(model, planted, t.head, t.rel, cfg, 1);
      for (const ParsedRule& r : parse_rules(pred.dists, t.head, planted, cfg.rule_threshold)) {
        table.add(t.rel, r.body, r.confidence);
      }
    }
    const auto ranked = table.aggregate();
    const std::vector<int> expect{*planted.relations.find("p"), *planted.relations.find("q")};
    const bool recovered = !ranked.empty() && ranked[0].body == expect;
    detail = std::string("traces ") + (trace1 && trace2 && trace3 ? "ok" : "BAD") +
             ", planted rule " + (recovered ? "recovered first" : "NOT first");
    return trace1 && trace2 && trace3 && recovered;
  });

  // ---- 8. tie-rank protocol ---------------------------------------------------
  gate.run("8 tie-rank-protocol", [&](std::string& detail) {
    const std::vector<double> scores{0.5, 0.5, 0.1};
    int rank_one = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      Rng rng(mix_seed(99, static_cast<uint64_t>(i)));
      if (filtered_rank(scores, 0, {}, rng) == 1) ++rank_one;
    }
    const double freq = static_cast<double>(rank_one) / draws;
    detail = "rank-1 frequency " + fmt(freq, 4) + " over " + std::to_string(draws) + " draws";
    return freq >= 0.485 && freq <= 0.515;
  });

  // ---- 2 + 9. desk-scale reproduction with distribution checks ----------------
  std::filesystem::path t2_checkpoint;
  gate.run("2 desk-scale-link-prediction", [&](std::string& detail) {
    reset_distribution_checks();
    const RunConfig cfg = desk_config(data_dir, work / "t3", 3);
    write_config_echo((work / "t3" / "config_resolved.txt"), cfg);
    Model model(umls, model_config_for(cfg), cfg.seed);
    const TrainResult tr = train_model(model, umls, cfg, std::cerr);
    const AnswerIndex answers(umls);
    const Metrics m = evaluate_split(model, umls, umls.test, cfg, answers);
    detail = "test MRR " + fmt(m.mrr) + ", hits@1 " + fmt(m.hits1) + ", hits@10 " + fmt(m.hits10) +
             ", best valid " + fmt(tr.best_valid_mrr) + " at epoch " + std::to_string(tr.best_epoch);
    return m.mrr >= 0.60 && m.hits10 >= 0.85;
  });

  gate.run("9 distribution-invariants", [&](std::string& detail) {
    detail = std::to_string(distribution_checks()) +
             " distributions validated during criterion 2 (violations throw)";
    return distribution_checks() > 0;
  });

  // ---- 7. standard confidence: oracle equivalence and desk-scale quality -------
  gate.run("7 standard-confidence", [&](std::string& detail) {
    // (a) exhaustive oracle equivalence on small random graphs
    Rng rng(4141);
    std::function<bool(const KnowledgeGraph&, int, const std::vector<int>&, int, size_t)> grounds =
        [&](const KnowledgeGraph& kg, int x, const std::vector<int>& body, int y, size_t step) {
          if (step == body.size()) return x == y;
          bool found = false;
          kg.view(body[step]).for_row(x, [&](int n) {
            if (!found && grounds(kg, n, body, y, step + 1)) found = true;
          });
          return found;
        };
    int trials = 0;
    for (int trial = 0; trial < 120; ++trial) {
      const KnowledgeGraph kg = testutil::random_kg(3 + rng.below(4), 1 + rng.below(3),
                                                    10 + rng.below(8), rng);
      std::vector<int> body;
      for (int i = 0, len = 1 + rng.below(3); i < len; ++i) body.push_back(rng.below(kg.augmented_count()));
      const int head_rel = rng.below(2 * kg.num_base());
      long support = 0, correct = 0;
      for (int x = 0; x < kg.num_entities(); ++x) {
        for (int y = 0; y < kg.num_entities(); ++y) {
          if (!grounds(kg, x, body, y, 0)) continue;
          ++support;
          if (kg.adjacency[static_cast<size_t>(head_rel)].has(x, y)) ++correct;
        }
      }
      const auto sc = standard_confidence(head_rel, body, kg);
      if (support == 0) {
        if (sc.has_value()) {
          detail = "oracle mismatch on empty support";
          return false;
        }
      } else if (!sc.has_value() ||
                 *sc != static_cast<double>(correct) / static_cast<double>(support)) {
        detail = "oracle mismatch";
        return false;
      }
      ++trials;
    }

    // (b) desk-scale rule quality at T = 2
    const RunConfig cfg = desk_config(data_dir, work / "t2", 2);
    Model model(umls, model_config_for(cfg), cfg.seed);
    const TrainResult tr = train_model(model, umls, cfg, std::cerr);
    (void)tr;
    const std::vector<Query> queries = expand_queries(umls.train, umls);
    std::vector<RuleTable> tables(2);
    std::exception_ptr err;
    std::mutex err_mu;
    auto miner = [&](int w) {
      try {
        for (size_t i = static_cast<size_t>(w); i < queries.size(); i += 2) {
          const Query& q = queries[i];
          const Prediction pred =
              predict_all(model, umls, q.head, q.rel, cfg, mix_seed(cfg.seed, 0xE5A1u, q.qid));
          for (const ParsedRule& r : parse_rules(pred.dists, q.head, umls, cfg.rule_threshold)) {
            tables[static_cast<size_t>(w)].add(q.rel, r.body, r.confidence);
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    };
    std::thread worker(miner, 1);
    miner(0);
    worker.join();
    if (err) std::rethrow_exception(err);
    tables[0].merge(tables[1]);
    const std::vector<AggregatedRule> ranked = tables[0].aggregate();
    write_rule_file(work / "t2" / "rules.tsv", ranked, umls);
    std::vector<ScoredRule> scored;
    for (size_t i = 0; i < ranked.size() && i < 50; ++i) {
      scored.push_back({ranked[i], standard_confidence(ranked[i].head_rel, ranked[i].body, umls)});
    }
    const TopkSc top = topk_average_sc(scored, 50);
    detail = std::to_string(trials) + " oracle graphs exact; " + std::to_string(ranked.size()) +
             " mined rules, top-50 avg SC " + fmt(top.value) + " over " +
             std::to_string(top.rules_used) + " defined";
    return trials >= 100 && ranked.size() >= 50 && top.value >= 0.5;
  });

  std::cout << (gate.failures == 0 ? "ALL CRITERIA PASSED"
                                   : std::to_string(gate.failures) + " CRITERIA FAILED")
            << std::endl;
  return gate.failures == 0 ? 0 : 1;
}
