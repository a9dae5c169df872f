#pragma once

#include <filesystem>
#include <vector>

#include "rulemine/model.hpp"

namespace rulemine {

/// Step distributions for one triple, as produced by the decoder unroll.
/// triple.rel is an augmented relation id (inverse queries allowed).
struct AttentionRecord {
  Triplet triple;
  std::vector<RelationDistribution> dists;
};

/// TSV with a header row of augmented relation names; one row per
/// (triple, step). Probabilities carry 8 decimals, so a parse-back matches
/// the in-memory values well within 1e-6.
void write_attention_tsv(const std::filesystem::path& path, const std::vector<AttentionRecord>& records,
                         const KnowledgeGraph& kg);
std::vector<AttentionRecord> read_attention_tsv(const std::filesystem::path& path,
                                                const KnowledgeGraph& kg);

/// Triple list file: head<TAB>relation<TAB>tail per line, names resolved
/// against the vocabularies (relation may be inv_-prefixed). Unknown names
/// raise a data error.
std::vector<Triplet> read_triple_names(const std::filesystem::path& path, const KnowledgeGraph& kg);

}  // namespace rulemine
