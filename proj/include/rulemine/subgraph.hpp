#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rulemine/kg.hpp"

namespace rulemine {

struct SubgraphCaps {
  int max_context_entities = 140;
  int max_neighbors_per_relation = 40;
  int hops = 3;
};

/// Edge between node positions (not entity ids); rel is a base relation id.
/// The inverse orientation is implied and expanded by the attention layer.
struct SubgraphEdge {
  int src = 0;
  int rel = 0;
  int dst = 0;
};

/// Capped k-hop neighbourhood of a query head. nodes[0] is the head;
/// distance[i] is the BFS layer the node was discovered in.
struct Subgraph {
  std::vector<int> nodes;
  std::vector<int> distance;
  std::vector<SubgraphEdge> edges;
};

constexpr int kBlankToken = -1;

/// Fixed-length linearization of a subgraph: real tokens first (head at
/// position 0, rest in discovery order), then BLANK padding.
struct NodeSequence {
  std::vector<int> tokens;     // entity id or kBlankToken
  std::vector<int> distances;  // hop label; -1 at BLANK positions
  std::vector<uint8_t> mask;   // 1 where token != BLANK
  int valid_count = 0;
};

/// Breadth-first expansion from `head`. At each node and relation, when the
/// neighbour count exceeds the per-relation cap a seeded uniform subset of
/// that size is taken; when the context cap truncates mid-frontier a seeded
/// uniform subset of the frontier fills the remaining slots. All train edges
/// among retained nodes are included, except the query-masked edge.
Subgraph extract_subgraph(const KnowledgeGraph& kg, int head, const SubgraphCaps& caps,
                          const std::optional<Triplet>& query_mask, uint64_t seed);

NodeSequence to_node_sequence(const Subgraph& sub, int seq_len);

}  // namespace rulemine
