#include "rulemine/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "rulemine/checkpoint.hpp"
#include "rulemine/errors.hpp"

namespace rulemine {

namespace {

void write_diagnostic_dump(const std::filesystem::path& path, const Model& model,
                           const std::vector<Query>& batch, int epoch, double loss) {
  std::ofstream out(path);
  if (!out) return;
  out << "event = non_finite_loss\n";
  out << "epoch = " << epoch << "\n";
  out << "loss = " << loss << "\n";
  out << "batch_queries =";
  for (const Query& q : batch) out << " (" << q.head << "," << q.rel << "," << q.tail << ")";
  out << "\n";
  const ad::ParamStore& params = model.params();
  for (size_t i = 0; i < params.count(); ++i) {
    const ad::Param& p = params.at(i);
    double norm = 0.0;
    for (double v : p.value.a) norm += v * v;
    out << "param_norm." << p.name << " = " << std::sqrt(norm) << "\n";
  }
}

}  // namespace

std::map<std::string, std::string> arch_meta(const Model& model, const KnowledgeGraph& kg) {
  const ModelConfig& mc = model.config();
  std::map<std::string, std::string> kv;
  kv["dim"] = std::to_string(mc.dim);
  kv["layers"] = std::to_string(mc.layers);
  kv["heads"] = std::to_string(mc.heads);
  kv["ffn_hidden"] = std::to_string(mc.ffn_hidden);
  kv["rule_len"] = std::to_string(mc.rule_len);
  kv["hops"] = std::to_string(mc.hops);
  kv["seq_len"] = std::to_string(mc.seq_len);
  kv["entities"] = std::to_string(kg.num_entities());
  kv["base_relations"] = std::to_string(kg.num_base());
  return kv;
}

void check_arch_meta(const std::map<std::string, std::string>& meta, const Model& model,
                     const KnowledgeGraph& kg) {
  const auto expected = arch_meta(model, kg);
  for (const auto& [k, v] : expected) {
    auto it = meta.find(k);
    if (it == meta.end() || it->second != v) {
      fail(ErrorCategory::checkpoint,
           "checkpoint/config architecture mismatch on '" + k + "' (config " + v + ", checkpoint " +
               (it == meta.end() ? std::string("<missing>") : it->second) + ")");
    }
  }
}

TrainResult train_model(Model& model, const KnowledgeGraph& kg, const RunConfig& cfg, std::ostream& log) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path ckpt_path = cfg.out_dir / "checkpoint.rf1";

  std::vector<Query> queries = expand_queries(kg.train, kg);
  const AnswerIndex answers(kg);

  ad::AdamState opt;
  opt.lr = cfg.lr;
  opt.init(model.params());

  int workers = cfg.workers > 0 ? cfg.workers : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, workers);
  std::vector<ad::GradBuffer> worker_grads;
  worker_grads.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) worker_grads.emplace_back(model.params());

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  double best_mrr = -1.0;
  int rounds_since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5Fu, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(queries);

    double epoch_loss = 0.0;
    for (size_t start = 0; start < queries.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(queries.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<double> worker_loss(static_cast<size_t>(workers), 0.0);
      std::exception_ptr first_error;
      std::mutex error_mu;
      auto run = [&](int w) {
        try {
          worker_grads[static_cast<size_t>(w)].clear();
          for (size_t i = start + static_cast<size_t>(w); i < end; i += static_cast<size_t>(workers)) {
            const Query& q = queries[i];
            Rng drop_rng(mix_seed(cfg.seed, 0xD0u, (static_cast<uint64_t>(epoch) << 32) | q.qid));
            ad::Tape tape(&worker_grads[static_cast<size_t>(w)], /*training=*/true, &drop_rng);
            const uint64_t sg_seed =
                mix_seed(cfg.seed, 0x5B6u, (static_cast<uint64_t>(epoch) << 32) | q.qid);
            const ad::Var loss = query_loss(tape, model, kg, q, cfg, sg_seed);
            worker_loss[static_cast<size_t>(w)] += tape.val(loss)(0, 0);
            tape.backward(loss);
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

      double batch_total = 0.0;
      for (double l : worker_loss) batch_total += l;
      if (!std::isfinite(batch_total)) {
        const std::vector<Query> batch(queries.begin() + static_cast<long>(start),
                                       queries.begin() + static_cast<long>(end));
        write_diagnostic_dump(cfg.out_dir / "diagnostic_dump.txt", model, batch, epoch, batch_total);
        fail(ErrorCategory::numeric, "non-finite training loss; diagnostic dump written");
      }
      epoch_loss += batch_total;
      for (int w = 1; w < workers; ++w) worker_grads[0].add(worker_grads[static_cast<size_t>(w)]);
      adam_step(model.params(), worker_grads[0], opt);
    }
    result.epoch_losses.push_back(epoch_loss);
    result.epochs_run = epoch + 1;

    bool improved = false;
    double valid_mrr = std::nan("");
    if ((epoch + 1) % cfg.eval_every == 0 && !kg.valid.empty()) {
      // storage precision first, so the saved checkpoint reproduces this metric
      quantize_params(model.params());
      valid_mrr = evaluate_split(model, kg, kg.valid, cfg, answers).mrr;
      if (valid_mrr > best_mrr) {
        best_mrr = valid_mrr;
        result.best_valid_mrr = valid_mrr;
        result.best_epoch = epoch;
        rounds_since_best = 0;
        improved = true;
        save_checkpoint(ckpt_path, model.params());
        auto meta = arch_meta(model, kg);
        char mrr_text[32];
        std::snprintf(mrr_text, sizeof(mrr_text), "%.17g", valid_mrr);
        meta["valid_mrr"] = mrr_text;
        meta["epoch"] = std::to_string(epoch);
        write_meta(ckpt_path.string() + ".meta", meta);
      } else {
        ++rounds_since_best;
      }
    }

    log << "epoch=" << epoch << " loss=" << std::fixed << std::setprecision(4) << epoch_loss;
    if (!std::isnan(valid_mrr)) {
      log << " valid_mrr=" << std::setprecision(4) << valid_mrr << " best=" << std::setprecision(4)
          << best_mrr << (improved ? " *" : "");
    }
    log << std::endl;

    if (rounds_since_best >= cfg.patience) break;
  }

  if (best_mrr < 0.0) {
    // no validation rounds happened; persist the final parameters
    quantize_params(model.params());
    save_checkpoint(ckpt_path, model.params());
    auto meta = arch_meta(model, kg);
    meta["epoch"] = std::to_string(result.epochs_run - 1);
    write_meta(ckpt_path.string() + ".meta", meta);
  } else {
    // leave the best parameters loaded
    load_checkpoint(ckpt_path, model.params());
  }
  return result;
}

}  // namespace rulemine
