#include "rulemine/config.hpp"

#include <fstream>
#include <sstream>

#include "rulemine/errors.hpp"

namespace rulemine {

void RunConfig::resolve() {
  std::string p = profile;
  if (p == "auto") {
    const std::string base = data_dir.filename().string();
    if (base == "umls" || base == "fb15k-237" || base == "wn18rr") {
      p = base;
    } else {
      p = "custom";
    }
  }
  if (p == "umls") {
    // dense graph; neighbourhood radius tracks the rule length
    if (hops == 0) hops = rule_len;
  } else if (p == "fb15k-237") {
    if (max_context_entities == 140) max_context_entities = 70;
    if (hops == 0) hops = 1;
  } else if (p == "wn18rr") {
    if (max_context_entities == 140) max_context_entities = 40;
    if (max_neighbors_per_relation == 40) max_neighbors_per_relation = 10;
    if (hops == 0) hops = 2;
  } else {
    if (hops == 0) hops = rule_len;
  }
  profile = p;
  validate();
}

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) fail(ErrorCategory::config, std::string(name) + " must be positive");
  };
  if (rule_len < 1) fail(ErrorCategory::config, "rule_len must be >= 1");
  positive(dim, "dim");
  positive(layers, "layers");
  positive(heads, "heads");
  if (dim % heads != 0) fail(ErrorCategory::config, "dim must be divisible by heads");
  if (dropout < 0 || dropout >= 1) fail(ErrorCategory::config, "dropout must be in [0,1)");
  if (lr < 0) fail(ErrorCategory::config, "lr must be non-negative");
  positive(gamma, "gamma");
  positive(max_context_entities, "max_context_entities");
  positive(max_neighbors_per_relation, "max_neighbors_per_relation");
  positive(hops, "hops");
  positive(batch_size, "batch_size");
  positive(max_epochs, "max_epochs");
  positive(patience, "patience");
  positive(eval_every, "eval_every");
  if (!(rule_threshold > 0 && rule_threshold < 1)) {
    fail(ErrorCategory::config, "rule_threshold must be in (0,1)");
  }
  if (workers < 0) fail(ErrorCategory::config, "workers must be >= 0");
}

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value,
                       const std::string& where) {
  auto to_int = [&](const std::string& v) {
    try {
      return std::stoi(v);
    } catch (...) {
      fail(ErrorCategory::config, where + ": bad integer for " + key);
    }
  };
  auto to_double = [&](const std::string& v) {
    try {
      return std::stod(v);
    } catch (...) {
      fail(ErrorCategory::config, where + ": bad number for " + key);
    }
  };
  if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "profile") cfg.profile = value;
  else if (key == "rule_len") cfg.rule_len = to_int(value);
  else if (key == "dim") cfg.dim = to_int(value);
  else if (key == "layers") cfg.layers = to_int(value);
  else if (key == "heads") cfg.heads = to_int(value);
  else if (key == "ffn_hidden") cfg.ffn_hidden = to_int(value);
  else if (key == "dropout") cfg.dropout = to_double(value);
  else if (key == "lr") cfg.lr = to_double(value);
  else if (key == "gamma") cfg.gamma = to_double(value);
  else if (key == "max_context_entities") cfg.max_context_entities = to_int(value);
  else if (key == "max_neighbors_per_relation") cfg.max_neighbors_per_relation = to_int(value);
  else if (key == "hops") cfg.hops = to_int(value);
  else if (key == "batch_size") cfg.batch_size = to_int(value);
  else if (key == "max_epochs") cfg.max_epochs = to_int(value);
  else if (key == "patience") cfg.patience = to_int(value);
  else if (key == "eval_every") cfg.eval_every = to_int(value);
  else if (key == "rule_threshold") cfg.rule_threshold = to_double(value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
  else if (key == "workers") cfg.workers = to_int(value);
  else fail(ErrorCategory::config, where + ": unknown key '" + key + "'");
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t");
      const size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCategory::config, path.filename().string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
                      path.filename().string() + ":" + std::to_string(line_no));
  }
  return cfg;
}

void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  std::ostringstream s;
  s << "data_dir = " << cfg.data_dir.string() << '\n'
    << "out_dir = " << cfg.out_dir.string() << '\n'
    << "profile = " << cfg.profile << '\n'
    << "rule_len = " << cfg.rule_len << '\n'
    << "dim = " << cfg.dim << '\n'
    << "layers = " << cfg.layers << '\n'
    << "heads = " << cfg.heads << '\n'
    << "ffn_hidden = " << cfg.ffn() << '\n'
    << "dropout = " << cfg.dropout << '\n'
    << "lr = " << cfg.lr << '\n'
    << "gamma = " << cfg.gamma << '\n'
    << "max_context_entities = " << cfg.max_context_entities << '\n'
    << "max_neighbors_per_relation = " << cfg.max_neighbors_per_relation << '\n'
    << "hops = " << cfg.hops << '\n'
    << "batch_size = " << cfg.batch_size << '\n'
    << "max_epochs = " << cfg.max_epochs << '\n'
    << "patience = " << cfg.patience << '\n'
    << "eval_every = " << cfg.eval_every << '\n'
    << "rule_threshold = " << cfg.rule_threshold << '\n'
    << "seed = " << cfg.seed << '\n'
    << "workers = " << cfg.workers << '\n';
  out << s.str();
}

}  // namespace rulemine
