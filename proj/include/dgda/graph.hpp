#pragma once

#include "dgda/tensor.hpp"

#include <array>
#include <cstdint>

namespace dgda {

enum class Modality : int { kText = 0, kAudio = 1, kVisual = 2 };

enum class Relation : int {
  kTemporalPast,
  kTemporalFuture,
  kSameSpeaker,
  kCrossModal,
};

struct Edge {
  int from = 0;
  int to = 0;
  Relation relation = Relation::kTemporalPast;
};

/// Per-dialogue interaction graph over 3N modality nodes. Node i*3+m carries
/// (utterance i, modality m). Edge pairs are unique; when a same-speaker pair
/// also falls inside the temporal window the temporal tag wins.
struct DialogueGraph {
  int num_utterances = 0;
  int num_nodes = 0;
  int context_window = 0;
  std::vector<Edge> edges;                  // sorted by (from, to)
  std::vector<std::vector<int>> adjacency;  // successors, ascending

  static int node_id(int utterance, Modality m) {
    return utterance * 3 + static_cast<int>(m);
  }
  static int utterance_of(int node) { return node / 3; }
  static Modality modality_of(int node) { return static_cast<Modality>(node % 3); }
};

/// Node-hyperedge incidence with one hyperedge per utterance (its 3 modality
/// nodes) plus, when N >= 2, one hyperedge per modality (all N nodes of that
/// modality). weight_slot maps each hyperedge to a learnable weight; with
/// shared slots all utterance hyperedges use slot 0 and modality hyperedges
/// use slots 1..3 so the parameter count is independent of N.
struct Hypergraph {
  Matrix incidence;  // |V| x |E|, entries 0/1
  Eigen::VectorXd hyperedge_weights;  // snapshot, all ones at build
  Eigen::VectorXd node_degree;        // D_vv = sum_e w(e) H_ve
  Eigen::VectorXd hyperedge_degree;   // B_ee = sum_v H_ve
  std::vector<int> weight_slot;
  int num_slots = 0;

  Index num_vertices() const { return incidence.rows(); }
  Index num_hyperedges() const { return incidence.cols(); }
  Eigen::VectorXd recompute_node_degree(const Eigen::VectorXd& w) const;
  Eigen::VectorXd recompute_hyperedge_degree() const;
};

/// Simple paths of up to max_len nodes, indexed by their start node (and by
/// their end node for the optional endpoint-injection mode; trivial paths are
/// listed only under their start).
struct PathSet {
  std::vector<std::vector<int>> paths;
  std::vector<std::vector<int>> by_start;
  std::vector<std::vector<int>> by_end;
  int max_len = 0;
};

/// Temporal edges join same-modality nodes within the context window, both
/// directions; same-speaker edges join each utterance's modality nodes to the
/// previous and next utterance of the same speaker; cross-modal edges join
/// the 3 nodes of one utterance pairwise. No self loops.
DialogueGraph build_emotion_graph(const std::vector<int>& speakers,
                                  int context_window,
                                  bool cross_modal_edges = true);

Hypergraph build_hypergraph(int num_utterances, bool shared_slots = false);

/// Depth-first enumeration of simple paths from every node, ascending node
/// and successor order, every prefix included (so each node always has at
/// least its trivial path). Nodes whose path count exceeds per_node_cap keep
/// a seeded uniform subsample of that size, in enumeration order.
PathSet enumerate_paths(const DialogueGraph& graph, int max_len,
                        int per_node_cap, std::uint64_t seed);

}  // namespace dgda
