#include "rulemine/kg.hpp"

#include <cassert>
#include <fstream>

#include "rulemine/errors.hpp"

namespace rulemine {

std::string KnowledgeGraph::relation_name(int r) const {
  if (r == self_loop()) return "self_loop";
  if (is_inverse(r)) return "inv_" + relations.name(r - num_base());
  return relations.name(r);
}

std::optional<int> KnowledgeGraph::relation_id_from_name(const std::string& name) const {
  if (name == "self_loop") return self_loop();
  if (name.rfind("inv_", 0) == 0) {
    auto base = relations.find(name.substr(4));
    if (base) return *base + num_base();
    // fall through: a base relation could itself start with "inv_"
  }
  return relations.find(name);
}

SparseView KnowledgeGraph::view(int rel, const std::optional<Triplet>& exclude) const {
  assert(rel >= 0 && rel < augmented_count());
  SparseView v;
  v.m = &adjacency[static_cast<size_t>(rel)];
  if (exclude && rel != self_loop()) {
    if (rel == exclude->rel) {
      v.skip_src = exclude->head;
      v.skip_dst = exclude->tail;
    } else if (rel == inverse(exclude->rel)) {
      v.skip_src = exclude->tail;
      v.skip_dst = exclude->head;
    }
  }
  return v;
}

DatasetStats KnowledgeGraph::stats() const {
  DatasetStats s;
  s.triplet_count = static_cast<long>(train.size() + valid.size() + test.size());
  s.entity_count = entities.size();
  s.relation_count = relations.size();
  s.avg_degree = s.entity_count > 0 ? 2.0 * static_cast<double>(s.triplet_count) / s.entity_count : 0.0;
  return s;
}

TripletList load_split(const std::filesystem::path& path, Vocab& entities, Vocab& relations) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  TripletList out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    const size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos) {
      fail(ErrorCategory::parse,
           path.filename().string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    Triplet t;
    t.head = entities.add(line.substr(0, t1));
    t.rel = relations.add(line.substr(t1 + 1, t2 - t1 - 1));
    t.tail = entities.add(line.substr(t2 + 1));
    out.push_back(t);
  }
  return out;
}

void build_graph(KnowledgeGraph& g) {
  const int E = g.num_entities();
  const int R = g.num_base();
  if (g.train.empty()) fail(ErrorCategory::data, "train split is empty");

  g.entity_in_train.assign(static_cast<size_t>(E), false);
  g.relation_in_train.assign(static_cast<size_t>(R), false);
  std::vector<std::vector<std::pair<int, int>>> cells(static_cast<size_t>(R));
  for (const Triplet& t : g.train) {
    assert(t.head >= 0 && t.head < E && t.tail >= 0 && t.tail < E && t.rel >= 0 && t.rel < R);
    cells[static_cast<size_t>(t.rel)].emplace_back(t.head, t.tail);
    g.entity_in_train[static_cast<size_t>(t.head)] = true;
    g.entity_in_train[static_cast<size_t>(t.tail)] = true;
    g.relation_in_train[static_cast<size_t>(t.rel)] = true;
  }

  g.adjacency.clear();
  g.adjacency.resize(static_cast<size_t>(2 * R + 1));
  for (int r = 0; r < R; ++r) {
    g.adjacency[static_cast<size_t>(r)] = SparseRelationMatrix::from_pairs(E, std::move(cells[static_cast<size_t>(r)]));
    g.adjacency[static_cast<size_t>(r + R)] = g.adjacency[static_cast<size_t>(r)].transposed();
  }
  g.adjacency[static_cast<size_t>(2 * R)] = SparseRelationMatrix::identity(E);
}

KnowledgeGraph load_dataset(const std::filesystem::path& dir) {
  KnowledgeGraph g;
  g.train = load_split(dir / "train.txt", g.entities, g.relations);
  g.valid = load_split(dir / "valid.txt", g.entities, g.relations);
  g.test = load_split(dir / "test.txt", g.entities, g.relations);
  build_graph(g);
  return g;
}

void write_vocab(const std::filesystem::path& path, const Vocab& v) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  for (const std::string& s : v.names) out << s << '\n';
}

Vocab read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.add(line);
  }
  return v;
}

}  // namespace rulemine
