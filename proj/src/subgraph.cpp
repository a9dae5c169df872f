#include "rulemine/subgraph.hpp"

#include <cassert>

#include "rulemine/errors.hpp"
#include "rulemine/rng.hpp"

namespace rulemine {

Subgraph extract_subgraph(const KnowledgeGraph& kg, int head, const SubgraphCaps& caps,
                          const std::optional<Triplet>& query_mask, uint64_t seed) {
  assert(head >= 0 && head < kg.num_entities());
  const int E = kg.num_entities();
  const int traversable = 2 * kg.num_base();  // base + inverse, no self-loop

  Rng rng(seed);
  Subgraph sub;
  std::vector<char> visited(static_cast<size_t>(E), 0);
  std::vector<char> in_frontier(static_cast<size_t>(E), 0);
  visited[static_cast<size_t>(head)] = 1;
  sub.nodes.push_back(head);
  sub.distance.push_back(0);

  std::vector<int> frontier{head};
  std::vector<int> scratch;
  for (int hop = 1; hop <= caps.hops; ++hop) {
    if (static_cast<int>(sub.nodes.size()) >= caps.max_context_entities) break;
    std::vector<int> next;
    for (int u : frontier) {
      for (int r = 0; r < traversable; ++r) {
        const SparseView view = kg.view(r, query_mask);
        int count = view.m->row_nnz(u);
        if (view.skip_src == u && view.m->has(u, view.skip_dst)) --count;
        auto discover = [&](int v) {
          if (!visited[static_cast<size_t>(v)] && !in_frontier[static_cast<size_t>(v)]) {
            in_frontier[static_cast<size_t>(v)] = 1;
            next.push_back(v);
          }
        };
        if (count <= caps.max_neighbors_per_relation) {
          view.for_row(u, discover);
        } else {
          scratch.clear();
          view.for_row(u, [&](int v) { scratch.push_back(v); });
          for (int k : rng.sample_indices(count, caps.max_neighbors_per_relation)) {
            discover(scratch[static_cast<size_t>(k)]);
          }
        }
      }
    }
    const int room = caps.max_context_entities - static_cast<int>(sub.nodes.size());
    if (static_cast<int>(next.size()) > room) {
      const std::vector<int> keep = rng.sample_indices(static_cast<int>(next.size()), room);
      std::vector<int> trimmed;
      trimmed.reserve(keep.size());
      for (int k : keep) trimmed.push_back(next[static_cast<size_t>(k)]);
      next = std::move(trimmed);
    }
    for (int v : next) {
      visited[static_cast<size_t>(v)] = 1;
      sub.nodes.push_back(v);
      sub.distance.push_back(hop);
    }
    // nodes dropped by sampling stay unvisited and may be rediscovered later
    std::fill(in_frontier.begin(), in_frontier.end(), 0);
    if (next.empty()) break;
    frontier = std::move(next);
  }

  // every base-relation edge among retained nodes, minus the masked cell
  std::vector<int> pos(static_cast<size_t>(E), -1);
  for (size_t i = 0; i < sub.nodes.size(); ++i) pos[static_cast<size_t>(sub.nodes[i])] = static_cast<int>(i);
  for (size_t i = 0; i < sub.nodes.size(); ++i) {
    const int u = sub.nodes[i];
    for (int r = 0; r < kg.num_base(); ++r) {
      kg.view(r, query_mask).for_row(u, [&](int v) {
        if (pos[static_cast<size_t>(v)] >= 0) {
          sub.edges.push_back({static_cast<int>(i), r, pos[static_cast<size_t>(v)]});
        }
      });
    }
  }
  return sub;
}

NodeSequence to_node_sequence(const Subgraph& sub, int seq_len) {
  const int n = static_cast<int>(sub.nodes.size());
  if (n > seq_len) {
    fail(ErrorCategory::config, "subgraph has " + std::to_string(n) + " nodes but sequence length is " +
                                    std::to_string(seq_len));
  }
  NodeSequence seq;
  seq.tokens.assign(static_cast<size_t>(seq_len), kBlankToken);
  seq.distances.assign(static_cast<size_t>(seq_len), -1);
  seq.mask.assign(static_cast<size_t>(seq_len), 0);
  seq.valid_count = n;
  for (int i = 0; i < n; ++i) {
    seq.tokens[static_cast<size_t>(i)] = sub.nodes[static_cast<size_t>(i)];
    seq.distances[static_cast<size_t>(i)] = sub.distance[static_cast<size_t>(i)];
    seq.mask[static_cast<size_t>(i)] = 1;
  }
  return seq;
}

}  // namespace rulemine
