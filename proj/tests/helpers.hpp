#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rulemine/kg.hpp"
#include "rulemine/model.hpp"
#include "rulemine/rng.hpp"

namespace testutil {

using StrTriple = std::tuple<std::string, std::string, std::string>;

/// In-memory graph from name triples; adjacency built from train.
inline rulemine::KnowledgeGraph make_kg(const std::vector<StrTriple>& train,
                                        const std::vector<StrTriple>& valid = {},
                                        const std::vector<StrTriple>& test = {}) {
  rulemine::KnowledgeGraph kg;
  auto convert = [&kg](const std::vector<StrTriple>& src) {
    rulemine::TripletList out;
    for (const auto& [h, r, t] : src) {
      out.push_back({kg.entities.add(h), kg.relations.add(r), kg.entities.add(t)});
    }
    return out;
  };
  kg.train = convert(train);
  kg.valid = convert(valid);
  kg.test = convert(test);
  rulemine::build_graph(kg);
  return kg;
}

/// Random graph over `entities` entities and `relations` base relations with
/// `edges` distinct train edges.
inline rulemine::KnowledgeGraph random_kg(int entities, int relations, int edges, rulemine::Rng& rng) {
  std::vector<StrTriple> train;
  std::set<std::tuple<int, int, int>> seen;
  // ensure vocabularies reach full size
  for (int e = 0; e < entities; ++e) {
    const int r = rng.below(relations);
    const int t = rng.below(entities);
    if (seen.insert({e, r, t}).second) {
      train.emplace_back("e" + std::to_string(e), "r" + std::to_string(r), "e" + std::to_string(t));
    }
  }
  for (int r = 0; r < relations; ++r) {
    const int h = rng.below(entities);
    const int t = rng.below(entities);
    if (seen.insert({h, r, t}).second) {
      train.emplace_back("e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t));
    }
  }
  int guard = 0;
  while (static_cast<int>(train.size()) < edges && guard++ < edges * 50) {
    const int h = rng.below(entities);
    const int r = rng.below(relations);
    const int t = rng.below(entities);
    if (seen.insert({h, r, t}).second) {
      train.emplace_back("e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t));
    }
  }
  return make_kg(train);
}

/// Random step distributions over the augmented relations.
inline std::vector<rulemine::RelationDistribution> random_omegas(const rulemine::KnowledgeGraph& kg,
                                                                 int steps, rulemine::Rng& rng) {
  std::vector<rulemine::RelationDistribution> out;
  for (int t = 0; t < steps; ++t) {
    rulemine::RelationDistribution d;
    double sum = 0.0;
    for (int r = 0; r < kg.augmented_count(); ++r) {
      d.p.push_back(rng.real01() + 1e-3);
      sum += d.p.back();
    }
    for (double& v : d.p) v /= sum;
    out.push_back(std::move(d));
  }
  return out;
}

/// Exhaustive weighted-path enumeration: the independent oracle for the
/// sparse reasoning chain. Walks every relation sequence and grounded path,
/// multiplying step weights.
inline std::vector<double> brute_force_chain(const rulemine::KnowledgeGraph& kg, int head,
                                             const std::vector<rulemine::RelationDistribution>& omegas,
                                             size_t step = 0, double weight = 1.0) {
  std::vector<double> z(static_cast<size_t>(kg.num_entities()), 0.0);
  if (step == omegas.size()) {
    z[static_cast<size_t>(head)] = weight;
    return z;
  }
  for (int r = 0; r < kg.augmented_count(); ++r) {
    const double w = omegas[step].p[static_cast<size_t>(r)];
    if (w == 0.0) continue;
    kg.view(r).for_row(head, [&](int next) {
      const std::vector<double> sub = brute_force_chain(kg, next, omegas, step + 1, weight * w);
      for (size_t i = 0; i < z.size(); ++i) z[i] += sub[i];
    });
  }
  return z;
}

/// Scratch directory under the test working dir, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / ("rulemine_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace testutil
