#include "rulemine/export.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "rulemine/errors.hpp"

namespace rulemine {

void write_attention_tsv(const std::filesystem::path& path, const std::vector<AttentionRecord>& records,
                         const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  out << "head\trelation\ttail\tstep";
  for (int r = 0; r < kg.augmented_count(); ++r) out << '\t' << kg.relation_name(r);
  out << '\n';
  out << std::fixed << std::setprecision(8);
  for (const AttentionRecord& rec : records) {
    for (size_t step = 0; step < rec.dists.size(); ++step) {
      out << kg.entities.name(rec.triple.head) << '\t' << kg.relation_name(rec.triple.rel) << '\t'
          << kg.entities.name(rec.triple.tail) << '\t' << (step + 1);
      for (double v : rec.dists[step].p) out << '\t' << v;
      out << '\n';
    }
  }
}

std::vector<AttentionRecord> read_attention_tsv(const std::filesystem::path& path,
                                                const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::parse, path.string() + ": missing header");
  std::vector<AttentionRecord> out;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    std::stringstream ss(line);
    std::string head, rel, tail, step;
    if (!std::getline(ss, head, '\t') || !std::getline(ss, rel, '\t') || !std::getline(ss, tail, '\t') ||
        !std::getline(ss, step, '\t')) {
      fail(ErrorCategory::parse, where + ": short row");
    }
    const auto h = kg.entities.find(head);
    const auto r = kg.relation_id_from_name(rel);
    const auto t = kg.entities.find(tail);
    if (!h || !r || !t) fail(ErrorCategory::parse, where + ": unknown name");
    RelationDistribution dist;
    std::string cell;
    while (std::getline(ss, cell, '\t')) dist.p.push_back(std::stod(cell));
    if (static_cast<int>(dist.p.size()) != kg.augmented_count()) {
      fail(ErrorCategory::parse, where + ": wrong column count");
    }
    if (step == "1" || out.empty() || !(out.back().triple == Triplet{*h, *r, *t})) {
      out.push_back({{*h, *r, *t}, {}});
    }
    out.back().dists.push_back(std::move(dist));
  }
  return out;
}

std::vector<Triplet> read_triple_names(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::vector<Triplet> out;
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
      fail(ErrorCategory::parse, where + ": expected 3 tab-separated fields");
    }
    const auto h = kg.entities.find(line.substr(0, t1));
    const auto r = kg.relation_id_from_name(line.substr(t1 + 1, t2 - t1 - 1));
    const auto t = kg.entities.find(line.substr(t2 + 1));
    if (!h) fail(ErrorCategory::data, where + ": unknown entity '" + line.substr(0, t1) + "'");
    if (!r) fail(ErrorCategory::data, where + ": unknown relation '" + line.substr(t1 + 1, t2 - t1 - 1) + "'");
    if (!t) fail(ErrorCategory::data, where + ": unknown entity '" + line.substr(t2 + 1) + "'");
    out.push_back({*h, *r, *t});
  }
  return out;
}

}  // namespace rulemine
