#include "dgda/pathnn.hpp"

#include <algorithm>
#include <map>

namespace dgda {

PathnnParams make_pathnn_params(Rng& rng, Index embed,
                                const PathnnConfig& config,
                                const std::string& prefix) {
  PathnnParams p;
  p.config = config;
  p.w = Parameter(prefix + ".w", init_uniform(rng, embed, embed, embed),
                  TensorShape::matrix(embed, embed));
  p.a = Parameter(prefix + ".a", init_uniform(rng, 2 * embed, 1, 2 * embed),
                  TensorShape::vector(2 * embed));
  return p;
}

std::vector<Parameter*> params_of(PathnnParams& p) { return {&p.w, &p.a}; }

namespace {

Tensor projected_rows(Tape& tape, PathnnParams& params, const Tensor& features,
                      const std::vector<int>& path) {
  if (path.empty()) throw ContractViolation("pathnn: empty path");
  return matmul(select_rows(features, path), transpose(tape.watch(params.w)));
}

Tensor col_mean(const Tensor& m) {
  return scalar_mul(row_sum(transpose(m)), 1.0 / static_cast<double>(m.rows()));
}

}  // namespace

Tensor path_context(Tape& tape, PathnnParams& params, const Tensor& features,
                    const std::vector<int>& path) {
  return col_mean(projected_rows(tape, params, features, path));
}

Tensor path_attention(Tape& tape, PathnnParams& params, const Tensor& features,
                      const std::vector<int>& path, const Tensor& context) {
  Tensor proj = projected_rows(tape, params, features, path);
  Tensor ctx_rows = block_repeat(transpose(context), static_cast<Index>(path.size()));
  Tensor scores = leaky_relu(matmul(concat_lastdim(proj, ctx_rows),
                                    tape.watch(params.a)),
                             params.config.leaky_slope);
  return softmax(scores);
}

Tensor path_embed(Tape& tape, PathnnParams& params, const Tensor& features,
                  const std::vector<int>& path, const Tensor& alpha) {
  if (alpha.rank() != 1 || alpha.rows() != static_cast<Index>(path.size()))
    throw ContractViolation("path_embed: alpha " + alpha.shape().str() +
                            " does not match path length " +
                            std::to_string(path.size()));
  Tensor proj = projected_rows(tape, params, features, path);
  return row_sum(transpose(scale_rows(proj, alpha)));
}

PathPlan make_path_plan(const PathSet& paths, int num_nodes,
                        bool inject_endpoints) {
  PathPlan plan;
  plan.num_nodes = num_nodes;
  plan.num_paths = static_cast<int>(paths.paths.size());

  std::map<int, std::vector<int>> by_len;  // length -> path ids, stable order
  for (int pid = 0; pid < plan.num_paths; ++pid)
    by_len[static_cast<int>(paths.paths[static_cast<std::size_t>(pid)].size())]
        .push_back(pid);

  std::vector<int> position(static_cast<std::size_t>(plan.num_paths), -1);
  int at = 0;
  for (auto& [len, ids] : by_len) {
    PathPlan::LengthGroup g;
    g.len = len;
    g.count = static_cast<int>(ids.size());
    g.flat_node_ids.reserve(ids.size() * static_cast<std::size_t>(len));
    for (int pid : ids) {
      position[static_cast<std::size_t>(pid)] = at++;
      for (int v : paths.paths[static_cast<std::size_t>(pid)])
        g.flat_node_ids.push_back(v);
    }
    plan.groups.push_back(std::move(g));
  }

  plan.agg_offsets.push_back(0);
  for (int v = 0; v < num_nodes; ++v) {
    const auto& starts = paths.by_start[static_cast<std::size_t>(v)];
    if (starts.empty())
      throw ContractViolation("pathnn: node " + std::to_string(v) +
                              " has no paths");
    for (int pid : starts)
      plan.agg_positions.push_back(position[static_cast<std::size_t>(pid)]);
    if (inject_endpoints)
      for (int pid : paths.by_end[static_cast<std::size_t>(v)])
        plan.agg_positions.push_back(position[static_cast<std::size_t>(pid)]);
    plan.agg_offsets.push_back(static_cast<int>(plan.agg_positions.size()));
  }
  return plan;
}

Tensor pathnn_forward(Tape& tape, const PathPlan& plan, PathnnParams& params,
                      const Tensor& features) {
  if (features.rank() != 2 || features.rows() != plan.num_nodes)
    throw ContractViolation("pathnn_forward: features " +
                            features.shape().str() + " do not cover " +
                            std::to_string(plan.num_nodes) + " nodes");
  Tensor x = features;
  for (int round = 0; round < params.config.rounds; ++round) {
    Tensor proj_all = matmul(x, transpose(tape.watch(params.w)));
    std::vector<Tensor> embeds;
    embeds.reserve(plan.groups.size());
    for (const auto& g : plan.groups) {
      Tensor rows = select_rows(proj_all, g.flat_node_ids);
      Tensor ctx = block_repeat(block_mean(rows, g.len), g.len);
      Tensor scores = leaky_relu(matmul(concat_lastdim(rows, ctx),
                                        tape.watch(params.a)),
                                 params.config.leaky_slope);
      Tensor alpha = softmax(reshape(scores, TensorShape::matrix(g.count, g.len)), 1);
      Tensor alpha_flat = reshape(alpha, TensorShape::vector(
                                             static_cast<Index>(g.count) * g.len));
      embeds.push_back(block_rowsum(scale_rows(rows, alpha_flat), g.len));
    }
    Tensor all_embeds = embeds.size() == 1 ? embeds.front() : concat_rows(embeds);
    Tensor gathered = select_rows(all_embeds, plan.agg_positions);
    x = add(x, segment_mean(gathered, plan.agg_offsets));
  }
  return x;
}

Tensor pathnn_forward(Tape& tape, const PathSet& paths, PathnnParams& params,
                      const Tensor& features) {
  PathPlan plan = make_path_plan(paths, static_cast<int>(features.rows()),
                                 params.config.inject_endpoints);
  return pathnn_forward(tape, plan, params, features);
}

}  // namespace dgda
