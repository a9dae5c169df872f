#include "rulemine/rules.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <sstream>

#include "rulemine/errors.hpp"

namespace rulemine {

namespace {

struct PathState {
  std::vector<int> rels;      // P_r
  std::vector<int> entities;  // P_e, head first
  double w = 1.0;
};

}  // namespace

std::vector<ParsedRule> parse_rules(const std::vector<RelationDistribution>& omegas, int head_entity,
                                    const KnowledgeGraph& kg, double thr, size_t max_paths) {
  assert(thr > 0.0 && thr < 1.0);
  std::vector<PathState> paths;
  paths.push_back({{}, {head_entity}, 1.0});

  for (const RelationDistribution& omega : omegas) {
    double mx = 0.0;
    for (double v : omega.p) mx = std::max(mx, v);
    if (mx <= 0.0) return {};
    std::vector<std::pair<int, double>> live;  // relations with scaled weight > thr
    for (int r = 0; r < static_cast<int>(omega.p.size()); ++r) {
      const double scaled = omega.p[static_cast<size_t>(r)] / mx;
      if (scaled > thr) live.emplace_back(r, scaled);
    }
    std::vector<PathState> next;
    for (const PathState& p : paths) {
      const int last = p.entities.back();
      for (const auto& [r, scaled] : live) {
        kg.view(r).for_row(last, [&](int n) {
          PathState np;
          np.rels = p.rels;
          np.rels.push_back(r);
          np.entities = p.entities;
          np.entities.push_back(n);
          np.w = p.w * scaled;
          next.push_back(std::move(np));
        });
      }
    }
    if (next.size() > max_paths) {
      // keep the strongest paths; stable ordering keeps the trace deterministic
      std::stable_sort(next.begin(), next.end(),
                       [](const PathState& a, const PathState& b) { return a.w > b.w; });
      next.resize(max_paths);
    }
    paths = std::move(next);
    if (paths.empty()) return {};
  }

  std::vector<ParsedRule> out;
  out.reserve(paths.size());
  const int self_loop = kg.self_loop();
  for (const PathState& p : paths) {
    ParsedRule r;
    for (int rel : p.rels) {
      if (rel != self_loop) r.body.push_back(rel);
    }
    if (r.body.empty()) continue;  // pure self-loop path
    r.confidence = p.w;
    out.push_back(std::move(r));
  }
  return out;
}

void RuleTable::add(int head_rel, const std::vector<int>& body, double confidence) {
  obs_[{head_rel, body}].push_back(confidence);
}

void RuleTable::merge(const RuleTable& other) {
  for (const auto& [key, vals] : other.obs_) {
    auto& dst = obs_[key];
    dst.insert(dst.end(), vals.begin(), vals.end());
  }
}

std::vector<AggregatedRule> RuleTable::aggregate() const {
  std::vector<AggregatedRule> out;
  out.reserve(obs_.size());
  for (const auto& [key, vals] : obs_) {
    AggregatedRule r;
    r.head_rel = key.first;
    r.body = key.second;
    r.support = vals.size();
    double sum = 0.0;
    for (double v : vals) sum += v;
    r.confidence = sum / static_cast<double>(vals.size());
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const AggregatedRule& a, const AggregatedRule& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.support != b.support) return a.support > b.support;
    if (a.body != b.body) return a.body < b.body;
    return a.head_rel < b.head_rel;
  });
  return out;
}

std::optional<double> standard_confidence(int head_rel, const std::vector<int>& body,
                                          const KnowledgeGraph& kg) {
  assert(!body.empty());
  const int E = kg.num_entities();
  long support = 0, correct = 0;
  std::vector<char> reach(static_cast<size_t>(E));
  std::vector<char> next(static_cast<size_t>(E));
  const SparseRelationMatrix& head_adj = kg.adjacency[static_cast<size_t>(head_rel)];
  for (int x = 0; x < E; ++x) {
    std::fill(reach.begin(), reach.end(), 0);
    reach[static_cast<size_t>(x)] = 1;
    bool alive = true;
    for (int rel : body) {
      std::fill(next.begin(), next.end(), 0);
      const SparseView vw = kg.view(rel);
      bool any = false;
      for (int i = 0; i < E; ++i) {
        if (!reach[static_cast<size_t>(i)]) continue;
        vw.for_row(i, [&](int j) {
          next[static_cast<size_t>(j)] = 1;
          any = true;
        });
      }
      if (!any) {
        alive = false;
        break;
      }
      reach.swap(next);
    }
    if (!alive) continue;
    for (int y = 0; y < E; ++y) {
      if (!reach[static_cast<size_t>(y)]) continue;
      ++support;
      if (head_adj.has(x, y)) ++correct;
    }
  }
  if (support == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(support);
}

TopkSc topk_average_sc(const std::vector<ScoredRule>& ranked, size_t k) {
  TopkSc res;
  res.truncated = ranked.size() < k;
  const size_t limit = std::min(k, ranked.size());
  double sum = 0.0;
  for (size_t i = 0; i < limit; ++i) {
    if (!ranked[i].sc.has_value()) continue;
    sum += *ranked[i].sc;
    ++res.rules_used;
  }
  res.value = res.rules_used > 0 ? sum / static_cast<double>(res.rules_used) : 0.0;
  return res;
}

void write_rule_file(const std::filesystem::path& path, const std::vector<AggregatedRule>& rules,
                     const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  out.precision(6);
  out << std::fixed;
  for (const AggregatedRule& r : rules) {
    out << r.confidence << '\t' << kg.relation_name(r.head_rel) << '\t';
    for (size_t i = 0; i < r.body.size(); ++i) {
      if (i > 0) out << ',';
      out << kg.relation_name(r.body[i]);
    }
    out << '\n';
  }
}

std::vector<AggregatedRule> read_rule_file(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::vector<AggregatedRule> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      fail(ErrorCategory::parse, where + ": expected confidence<TAB>head<TAB>body");
    }
    AggregatedRule r;
    try {
      r.confidence = std::stod(line.substr(0, t1));
    } catch (...) {
      fail(ErrorCategory::parse, where + ": bad confidence value");
    }
    const std::string head_name = line.substr(t1 + 1, t2 - t1 - 1);
    const auto head_id = kg.relation_id_from_name(head_name);
    if (!head_id) fail(ErrorCategory::parse, where + ": unknown relation '" + head_name + "'");
    r.head_rel = *head_id;
    std::stringstream body(line.substr(t2 + 1));
    std::string atom;
    while (std::getline(body, atom, ',')) {
      const auto id = kg.relation_id_from_name(atom);
      if (!id) fail(ErrorCategory::parse, where + ": unknown relation '" + atom + "'");
      r.body.push_back(*id);
    }
    if (r.body.empty()) fail(ErrorCategory::parse, where + ": empty rule body");
    r.support = 1;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rulemine
