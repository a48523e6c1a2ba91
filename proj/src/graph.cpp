#include "dgda/graph.hpp"

#include <algorithm>
#include <map>

namespace dgda {

Eigen::VectorXd Hypergraph::recompute_node_degree(const Eigen::VectorXd& w) const {
  return incidence * w;
}

Eigen::VectorXd Hypergraph::recompute_hyperedge_degree() const {
  return incidence.transpose() * Eigen::VectorXd::Ones(incidence.rows());
}

DialogueGraph build_emotion_graph(const std::vector<int>& speakers,
                                  int context_window, bool cross_modal_edges) {
  int n = static_cast<int>(speakers.size());
  if (n < 1) throw ContractViolation("build_emotion_graph: empty dialogue");
  if (context_window < 0)
    throw ContractViolation("build_emotion_graph: negative context window");

  std::map<std::pair<int, int>, Relation> edge_map;
  auto put = [&](int from, int to, Relation rel) {
    if (from == to) return;
    edge_map.emplace(std::make_pair(from, to), rel);  // first tag wins
  };

  for (int m = 0; m < 3; ++m) {
    for (int i = 0; i < n; ++i) {
      int lo = std::max(0, i - context_window);
      int hi = std::min(n - 1, i + context_window);
      for (int j = lo; j <= hi; ++j) {
        if (j == i) continue;
        put(i * 3 + m, j * 3 + m,
            j < i ? Relation::kTemporalPast : Relation::kTemporalFuture);
      }
    }
  }
  // previous and next occurrence of the same speaker
  for (int i = 0; i < n; ++i) {
    int prev = -1, next = -1;
    for (int j = i - 1; j >= 0; --j)
      if (speakers[j] == speakers[i]) {
        prev = j;
        break;
      }
    for (int j = i + 1; j < n; ++j)
      if (speakers[j] == speakers[i]) {
        next = j;
        break;
      }
    for (int m = 0; m < 3; ++m) {
      if (prev >= 0) put(i * 3 + m, prev * 3 + m, Relation::kSameSpeaker);
      if (next >= 0) put(i * 3 + m, next * 3 + m, Relation::kSameSpeaker);
    }
  }
  if (cross_modal_edges) {
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (a != b) put(i * 3 + a, i * 3 + b, Relation::kCrossModal);
  }

  DialogueGraph g;
  g.num_utterances = n;
  g.num_nodes = 3 * n;
  g.context_window = context_window;
  g.edges.reserve(edge_map.size());
  g.adjacency.assign(static_cast<std::size_t>(g.num_nodes), {});
  for (const auto& [key, rel] : edge_map) {
    g.edges.push_back({key.first, key.second, rel});
    g.adjacency[static_cast<std::size_t>(key.first)].push_back(key.second);
  }
  return g;  // map iteration already gives sorted edges and adjacency
}

Hypergraph build_hypergraph(int num_utterances, bool shared_slots) {
  if (num_utterances < 1)
    throw ContractViolation("build_hypergraph: empty dialogue");
  int n = num_utterances;
  int vertices = 3 * n;
  int edges = n + (n >= 2 ? 3 : 0);

  Hypergraph hg;
  hg.incidence = Matrix::Zero(vertices, edges);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < 3; ++m) hg.incidence(i * 3 + m, i) = 1.0;
  if (n >= 2)
    for (int m = 0; m < 3; ++m)
      for (int i = 0; i < n; ++i) hg.incidence(i * 3 + m, n + m) = 1.0;

  hg.weight_slot.resize(static_cast<std::size_t>(edges));
  if (shared_slots) {
    for (int e = 0; e < edges; ++e)
      hg.weight_slot[static_cast<std::size_t>(e)] = e < n ? 0 : 1 + (e - n);
    hg.num_slots = 4;  // fixed so the parameter shape is dialogue-independent
  } else {
    for (int e = 0; e < edges; ++e) hg.weight_slot[static_cast<std::size_t>(e)] = e;
    hg.num_slots = edges;
  }

  hg.hyperedge_weights = Eigen::VectorXd::Ones(edges);
  hg.node_degree = hg.recompute_node_degree(hg.hyperedge_weights);
  hg.hyperedge_degree = hg.recompute_hyperedge_degree();
  return hg;
}

namespace {

void dfs_paths(const DialogueGraph& g, std::vector<int>& path,
               std::vector<char>& on_path, int max_len,
               std::vector<std::vector<int>>& out) {
  out.push_back(path);
  if (static_cast<int>(path.size()) == max_len) return;
  for (int nb : g.adjacency[static_cast<std::size_t>(path.back())]) {
    if (on_path[static_cast<std::size_t>(nb)]) continue;
    path.push_back(nb);
    on_path[static_cast<std::size_t>(nb)] = 1;
    dfs_paths(g, path, on_path, max_len, out);
    on_path[static_cast<std::size_t>(nb)] = 0;
    path.pop_back();
  }
}

}  // namespace

PathSet enumerate_paths(const DialogueGraph& graph, int max_len,
                        int per_node_cap, std::uint64_t seed) {
  if (max_len < 1) throw ContractViolation("enumerate_paths: max_len < 1");
  if (per_node_cap < 1)
    throw ContractViolation("enumerate_paths: per_node_cap < 1");

  PathSet ps;
  ps.max_len = max_len;
  ps.by_start.assign(static_cast<std::size_t>(graph.num_nodes), {});
  ps.by_end.assign(static_cast<std::size_t>(graph.num_nodes), {});

  for (int v = 0; v < graph.num_nodes; ++v) {
    std::vector<std::vector<int>> local;
    std::vector<int> path = {v};
    std::vector<char> on_path(static_cast<std::size_t>(graph.num_nodes), 0);
    on_path[static_cast<std::size_t>(v)] = 1;
    dfs_paths(graph, path, on_path, max_len, local);

    if (static_cast<int>(local.size()) > per_node_cap) {
      // uniform subsample without replacement, kept in enumeration order
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(v) + 1);
      std::vector<int> ids(local.size());
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
      for (int i = 0; i < per_node_cap; ++i) {
        std::uniform_int_distribution<int> pick(i, static_cast<int>(ids.size()) - 1);
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
      }
      ids.resize(static_cast<std::size_t>(per_node_cap));
      std::sort(ids.begin(), ids.end());
      std::vector<std::vector<int>> kept;
      kept.reserve(ids.size());
      for (int id : ids) kept.push_back(std::move(local[static_cast<std::size_t>(id)]));
      local = std::move(kept);
    }

    for (auto& p : local) {
      int id = static_cast<int>(ps.paths.size());
      ps.by_start[static_cast<std::size_t>(v)].push_back(id);
      if (p.size() >= 2) ps.by_end[static_cast<std::size_t>(p.back())].push_back(id);
      ps.paths.push_back(std::move(p));
    }
  }
  return ps;
}

}  // namespace dgda
