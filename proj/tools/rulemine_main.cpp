// rulemine: train, evaluate and mine rules over knowledge graph datasets.
//
// Subcommands: prepare, train, evaluate, mine-rules, score-rules,
// export-attention. Every run writes its fully resolved configuration next
// to its outputs. Failures print one machine-parseable line to stderr:
//   error category=<category>: <message>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "rulemine/checkpoint.hpp"
#include "rulemine/errors.hpp"
#include "rulemine/export.hpp"
#include "rulemine/rules.hpp"
#include "rulemine/trainer.hpp"

namespace rm = rulemine;

namespace {

int exit_code(rm::ErrorCategory cat) {
  switch (cat) {
    case rm::ErrorCategory::usage: return 2;
    case rm::ErrorCategory::config: return 3;
    case rm::ErrorCategory::io: return 4;
    case rm::ErrorCategory::parse: return 5;
    case rm::ErrorCategory::data: return 6;
    case rm::ErrorCategory::numeric: return 7;
    case rm::ErrorCategory::checkpoint: return 8;
    case rm::ErrorCategory::internal: return 9;
  }
  return 9;
}

struct CliOverrides {
  std::string config_file;
  std::string data_dir, out_dir, profile;
  std::optional<int> rule_len, dim, layers, heads, ffn_hidden, max_context, max_neighbors, hops;
  std::optional<int> batch_size, max_epochs, patience, eval_every, workers;
  std::optional<double> dropout, lr, gamma, thr;
  std::optional<uint64_t> seed;
};

void add_common_options(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_file, "key = value config file");
  cmd->add_option("--data", o.data_dir, "dataset directory (train/valid/test.txt)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--profile", o.profile, "dataset profile: auto|umls|fb15k-237|wn18rr|custom");
  cmd->add_option("--rule-len", o.rule_len, "rule length T");
  cmd->add_option("--dim", o.dim, "embedding dimension");
  cmd->add_option("--layers", o.layers, "encoder/decoder layers");
  cmd->add_option("--heads", o.heads, "attention heads");
  cmd->add_option("--ffn-hidden", o.ffn_hidden, "feed-forward hidden width (0 = 2*dim)");
  cmd->add_option("--dropout", o.dropout, "dropout probability");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--gamma", o.gamma, "score floor");
  cmd->add_option("--max-context-entities", o.max_context, "subgraph size cap");
  cmd->add_option("--max-neighbors", o.max_neighbors, "per-relation neighbour cap");
  cmd->add_option("--hops", o.hops, "subgraph radius (0 = profile default)");
  cmd->add_option("--batch-size", o.batch_size, "queries per optimizer step");
  cmd->add_option("--max-epochs", o.max_epochs, "epoch limit");
  cmd->add_option("--patience", o.patience, "validation rounds without improvement before stopping");
  cmd->add_option("--eval-every", o.eval_every, "epochs between validation passes");
  cmd->add_option("--thr", o.thr, "rule parsing threshold");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--workers", o.workers, "worker threads (0 = hardware)");
}

rm::RunConfig resolve_config(const CliOverrides& o) {
  rm::RunConfig cfg;
  if (!o.config_file.empty()) cfg = rm::load_config_file(o.config_file);
  if (!o.data_dir.empty()) cfg.data_dir = o.data_dir;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.profile.empty()) cfg.profile = o.profile;
  if (o.rule_len) cfg.rule_len = *o.rule_len;
  if (o.dim) cfg.dim = *o.dim;
  if (o.layers) cfg.layers = *o.layers;
  if (o.heads) cfg.heads = *o.heads;
  if (o.ffn_hidden) cfg.ffn_hidden = *o.ffn_hidden;
  if (o.dropout) cfg.dropout = *o.dropout;
  if (o.lr) cfg.lr = *o.lr;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.max_context) cfg.max_context_entities = *o.max_context;
  if (o.max_neighbors) cfg.max_neighbors_per_relation = *o.max_neighbors;
  if (o.hops) cfg.hops = *o.hops;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.max_epochs) cfg.max_epochs = *o.max_epochs;
  if (o.patience) cfg.patience = *o.patience;
  if (o.eval_every) cfg.eval_every = *o.eval_every;
  if (o.thr) cfg.rule_threshold = *o.thr;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (cfg.data_dir.empty()) rm::fail(rm::ErrorCategory::usage, "--data is required");
  cfg.resolve();
  return cfg;
}

rm::ModelConfig model_config(const rm::RunConfig& cfg) {
  rm::ModelConfig mc;
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

void echo_config(const rm::RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  rm::write_config_echo(cfg.out_dir / "config_resolved.txt", cfg);
}

rm::Model load_model(const rm::RunConfig& cfg, const rm::KnowledgeGraph& kg,
                     const std::string& checkpoint) {
  rm::Model model(kg, model_config(cfg), cfg.seed);
  rm::check_arch_meta(rm::read_meta(checkpoint + ".meta"), model, kg);
  rm::load_checkpoint(checkpoint, model.params());
  return model;
}

int cmd_prepare(const CliOverrides& o) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  rm::write_vocab(cfg.out_dir / "entities.txt", kg.entities);
  rm::write_vocab(cfg.out_dir / "relations.txt", kg.relations);
  const rm::DatasetStats s = kg.stats();
  std::ofstream stats(cfg.out_dir / "stats.txt");
  stats << "triplets = " << s.triplet_count << "\n"
        << "entities = " << s.entity_count << "\n"
        << "relations = " << s.relation_count << "\n"
        << "avg_degree = " << std::fixed << std::setprecision(1) << s.avg_degree << "\n"
        << "train = " << kg.train.size() << "\n"
        << "valid = " << kg.valid.size() << "\n"
        << "test = " << kg.test.size() << "\n";
  std::cout << "prepared " << cfg.data_dir.string() << ": " << s.triplet_count << " triplets, "
            << s.entity_count << " entities, " << s.relation_count << " relations\n";
  return 0;
}

// mirrors epoch lines to stdout and the log file
struct TeeBuf : std::streambuf {
  std::streambuf* a = nullptr;
  std::streambuf* b = nullptr;
  int overflow(int c) override {
    if (c != EOF) {
      a->sputc(static_cast<char>(c));
      b->sputc(static_cast<char>(c));
    }
    return c;
  }
  int sync() override {
    a->pubsync();
    b->pubsync();
    return 0;
  }
};

int cmd_train(const CliOverrides& o, const std::string& init_checkpoint) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  rm::Model model(kg, model_config(cfg), cfg.seed);
  if (!init_checkpoint.empty()) {
    rm::check_arch_meta(rm::read_meta(init_checkpoint + ".meta"), model, kg);
    rm::load_checkpoint(init_checkpoint, model.params());
  }
  std::ofstream log(cfg.out_dir / "train_log.txt");
  TeeBuf tee;
  tee.a = std::cout.rdbuf();
  tee.b = log.rdbuf();
  std::ostream both(&tee);
  const rm::TrainResult result = rm::train_model(model, kg, cfg, both);
  std::cout << "best_valid_mrr=" << result.best_valid_mrr << " best_epoch=" << result.best_epoch
            << " checkpoint=" << result.checkpoint_path.string() << "\n";
  return 0;
}

int cmd_evaluate(const CliOverrides& o, const std::string& checkpoint) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  const rm::Model model = load_model(cfg, kg, checkpoint);
  const rm::AnswerIndex answers(kg);
  std::vector<rm::RankedQuery> ranked;
  const rm::Metrics m = rm::evaluate_split(model, kg, kg.test, cfg, answers, &ranked);
  std::ofstream ranks(cfg.out_dir / "ranks.tsv");
  for (const rm::RankedQuery& r : ranked) {
    ranks << kg.entities.name(r.query.head) << '\t' << kg.relation_name(r.query.rel) << '\t'
          << kg.entities.name(r.query.tail) << '\t' << r.rank << '\n';
  }
  std::ofstream out(cfg.out_dir / "metrics.txt");
  out << std::fixed << std::setprecision(6);
  out << "mrr = " << m.mrr << "\nhits1 = " << m.hits1 << "\nhits3 = " << m.hits3
      << "\nhits10 = " << m.hits10 << "\nqueries = " << m.count << "\n";
  std::cout << std::fixed << std::setprecision(4) << "mrr=" << m.mrr << " hits1=" << m.hits1
            << " hits3=" << m.hits3 << " hits10=" << m.hits10 << " queries=" << m.count << "\n";
  return 0;
}

int cmd_mine_rules(const CliOverrides& o, const std::string& checkpoint, const std::string& split) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  const rm::Model model = load_model(cfg, kg, checkpoint);
  const rm::TripletList* triples = nullptr;
  if (split == "train") triples = &kg.train;
  else if (split == "valid") triples = &kg.valid;
  else if (split == "test") triples = &kg.test;
  else rm::fail(rm::ErrorCategory::usage, "unknown split '" + split + "'");

  rm::RuleTable table;
  const std::vector<rm::Query> queries = rm::expand_queries(*triples, kg);
  for (const rm::Query& q : queries) {
    const rm::Prediction pred =
        rm::predict_all(model, kg, q.head, q.rel, cfg, rm::mix_seed(cfg.seed, 0xE5A1u, q.qid));
    for (const rm::ParsedRule& r : rm::parse_rules(pred.dists, q.head, kg, cfg.rule_threshold)) {
      table.add(q.rel, r.body, r.confidence);
    }
  }
  const std::vector<rm::AggregatedRule> rules = table.aggregate();
  rm::write_rule_file(cfg.out_dir / "rules.tsv", rules, kg);
  std::cout << "mined " << rules.size() << " distinct rules from " << queries.size() << " queries\n";
  return 0;
}

int cmd_score_rules(const CliOverrides& o, const std::string& rule_file, std::vector<int> topk) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  const std::vector<rm::AggregatedRule> rules = rm::read_rule_file(rule_file, kg);
  std::vector<rm::ScoredRule> scored;
  scored.reserve(rules.size());
  for (const rm::AggregatedRule& r : rules) {
    scored.push_back({r, rm::standard_confidence(r.head_rel, r.body, kg)});
  }

  std::ofstream per_rule(cfg.out_dir / "rule_sc.tsv");
  per_rule << std::fixed << std::setprecision(6);
  for (const rm::ScoredRule& s : scored) {
    per_rule << (s.sc ? std::to_string(*s.sc) : "undefined") << '\t' << kg.relation_name(s.rule.head_rel)
             << '\t';
    for (size_t i = 0; i < s.rule.body.size(); ++i) {
      if (i > 0) per_rule << ',';
      per_rule << kg.relation_name(s.rule.body[i]);
    }
    per_rule << '\n';
  }

  if (topk.empty()) topk = {50, 100, 200, 500};
  std::ofstream report(cfg.out_dir / "sc_report.txt");
  report << std::fixed << std::setprecision(6);
  report << "rules_scored = " << scored.size() << "\n";
  for (int k : topk) {
    const rm::TopkSc res = rm::topk_average_sc(scored, static_cast<size_t>(k));
    report << "top" << k << "_avg_sc = " << res.value << "\n";
    report << "top" << k << "_rules_used = " << res.rules_used << "\n";
    if (res.truncated) {
      report << "top" << k << "_warning = fewer than " << k << " rules available\n";
      std::cerr << "warning: fewer than " << k << " rules available; averaged over " << res.rules_used
                << "\n";
    }
    std::cout << "top" << k << "_avg_sc=" << res.value << "\n";
  }
  return 0;
}

int cmd_export_attention(const CliOverrides& o, const std::string& checkpoint,
                         const std::string& triples_file) {
  const rm::RunConfig cfg = resolve_config(o);
  const rm::KnowledgeGraph kg = rm::load_dataset(cfg.data_dir);
  echo_config(cfg);
  const rm::Model model = load_model(cfg, kg, checkpoint);
  const std::vector<rm::Triplet> triples = rm::read_triple_names(triples_file, kg);
  std::vector<rm::AttentionRecord> records;
  records.reserve(triples.size());
  uint32_t qid = 0;
  for (const rm::Triplet& t : triples) {
    const rm::Prediction pred =
        rm::predict_all(model, kg, t.head, t.rel, cfg, rm::mix_seed(cfg.seed, 0xE5A1u, qid++));
    records.push_back({t, pred.dists});
  }
  rm::write_attention_tsv(cfg.out_dir / "attention.tsv", records, kg);
  std::cout << "exported " << records.size() << " triples to " << (cfg.out_dir / "attention.tsv").string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable rule mining over knowledge graphs"};
  app.require_subcommand(1);

  CliOverrides o;
  std::string init_checkpoint, checkpoint, split = "train", rule_file, triples_file;
  std::vector<int> topk;

  CLI::App* prepare = app.add_subcommand("prepare", "load a dataset, dump vocabularies and statistics");
  add_common_options(prepare, o);

  CLI::App* train = app.add_subcommand("train", "train a model with early stopping on validation MRR");
  add_common_options(train, o);
  train->add_option("--init-checkpoint", init_checkpoint, "resume from an existing checkpoint");

  CLI::App* evaluate = app.add_subcommand("evaluate", "filtered link-prediction metrics on the test split");
  add_common_options(evaluate, o);
  evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  CLI::App* mine = app.add_subcommand("mine-rules", "decode, aggregate and rank symbolic rules");
  add_common_options(mine, o);
  mine->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  mine->add_option("--split", split, "query split: train|valid|test");

  CLI::App* score = app.add_subcommand("score-rules", "standard confidence for a mined rule file");
  add_common_options(score, o);
  score->add_option("--rules", rule_file, "rule file")->required();
  score->add_option("--topk", topk, "top-K cutoffs (repeatable)");

  CLI::App* export_att = app.add_subcommand("export-attention", "per-step relation distributions as TSV");
  add_common_options(export_att, o);
  export_att->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  export_att->add_option("--triples", triples_file, "triple list file (names)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error category=usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(o);
    if (train->parsed()) return cmd_train(o, init_checkpoint);
    if (evaluate->parsed()) return cmd_evaluate(o, checkpoint);
    if (mine->parsed()) return cmd_mine_rules(o, checkpoint, split);
    if (score->parsed()) return cmd_score_rules(o, rule_file, topk);
    if (export_att->parsed()) return cmd_export_attention(o, checkpoint, triples_file);
  } catch (const rm::Error& e) {
    std::cerr << "error category=" << rm::to_string(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error category=internal: " << e.what() << "\n";
    return 9;
  }
  return 0;
}
