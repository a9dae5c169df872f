#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rulemine/sparse.hpp"

namespace rulemine {

/// Insertion-ordered string <-> id table.
struct Vocab {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;

  int add(const std::string& s) {
    auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(names.size());
    names.push_back(s);
    ids.emplace(s, id);
    return id;
  }
  std::optional<int> find(const std::string& s) const {
    auto it = ids.find(s);
    if (it == ids.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(int id) const { return names[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(names.size()); }
};

struct Triplet {
  int head = 0;
  int rel = 0;
  int tail = 0;
  bool operator==(const Triplet&) const = default;
};

using TripletList = std::vector<Triplet>;

struct DatasetStats {
  long triplet_count = 0;
  int entity_count = 0;
  int relation_count = 0;
  double avg_degree = 0.0;  // 2 * triplets / entities
};

/// Immutable triple store over train/valid/test splits. The relation
/// vocabulary is augmented with one inverse per base relation plus a
/// self-loop relation whose adjacency is the identity; adjacency is built
/// from the train split only. Safe for shared reads once built.
struct KnowledgeGraph {
  Vocab entities;
  Vocab relations;  // base relations only
  TripletList train, valid, test;
  std::vector<bool> entity_in_train;    // false = only seen in valid/test
  std::vector<bool> relation_in_train;
  std::vector<SparseRelationMatrix> adjacency;  // size 2|R|+1, self-loop last

  int num_entities() const { return entities.size(); }
  int num_base() const { return relations.size(); }
  int augmented_count() const { return 2 * num_base() + 1; }
  int self_loop() const { return 2 * num_base(); }
  bool is_inverse(int r) const { return r >= num_base() && r < 2 * num_base(); }
  int inverse(int r) const {
    if (r == self_loop()) return r;
    return is_inverse(r) ? r - num_base() : r + num_base();
  }

  std::string relation_name(int r) const;
  std::optional<int> relation_id_from_name(const std::string& name) const;

  /// Relation matrix view; when `exclude` matches this relation (directly or
  /// through its inverse) the single cell is treated as absent. The self-loop
  /// view is never masked.
  SparseView view(int rel, const std::optional<Triplet>& exclude = std::nullopt) const;

  DatasetStats stats() const;
};

/// Parses one split file (head<TAB>relation<TAB>tail per nonempty line),
/// registering names in the shared vocabularies in order of appearance.
TripletList load_split(const std::filesystem::path& path, Vocab& entities, Vocab& relations);

/// Builds the augmented adjacency from the train split. Any triples already
/// present in `g.train/valid/test` must use ids from `g.entities/relations`.
void build_graph(KnowledgeGraph& g);

/// Loads train.txt / valid.txt / test.txt from a directory and builds the graph.
KnowledgeGraph load_dataset(const std::filesystem::path& dir);

/// Vocabulary dump: one token per line, line position = id.
void write_vocab(const std::filesystem::path& path, const Vocab& v);
Vocab read_vocab(const std::filesystem::path& path);

}  // namespace rulemine
