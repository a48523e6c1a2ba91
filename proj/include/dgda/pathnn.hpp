#pragma once

#include "dgda/graph.hpp"
#include "dgda/tensor.hpp"

namespace dgda {

struct PathnnConfig {
  double leaky_slope = 0.01;
  int rounds = 1;
  // Also feed each path back into its end node (prose reading); off keeps
  // the start-node convention.
  bool inject_endpoints = false;
};

struct PathnnParams {
  PathnnConfig config;
  Parameter w;  // D x D, applied as W h to column features
  Parameter a;  // attention vector of size 2D
};

PathnnParams make_pathnn_params(Rng& rng, Index embed,
                                const PathnnConfig& config,
                                const std::string& prefix);

std::vector<Parameter*> params_of(PathnnParams& p);

/// Path global context c_p: mean of W h_v over the path's nodes.
Tensor path_context(Tape& tape, PathnnParams& params, const Tensor& features,
                    const std::vector<int>& path);

/// Attention over the path's nodes:
///   alpha_i = softmax_j LeakyReLU(a^T [W h_vj || c_p]).
Tensor path_attention(Tape& tape, PathnnParams& params, const Tensor& features,
                      const std::vector<int>& path, const Tensor& context);

/// Path representation h_p = sum_i alpha_i W h_vi.
Tensor path_embed(Tape& tape, PathnnParams& params, const Tensor& features,
                  const std::vector<int>& path, const Tensor& alpha);

/// Flattened evaluation order for one PathSet: paths grouped by length so a
/// whole dialogue runs through a handful of block ops instead of per-path
/// graphs. Built once per dialogue and reused every forward pass.
struct PathPlan {
  struct LengthGroup {
    int len = 0;
    int count = 0;
    std::vector<int> flat_node_ids;  // count*len node ids, path-major
  };
  std::vector<LengthGroup> groups;
  std::vector<int> agg_positions;  // row indices into the stacked h_p matrix
  std::vector<int> agg_offsets;    // per-node segments over agg_positions
  int num_nodes = 0;
  int num_paths = 0;
};

PathPlan make_path_plan(const PathSet& paths, int num_nodes,
                        bool inject_endpoints);

/// One-or-more rounds of the update h_v <- h_v + mean_{p in P(v)} h_p over
/// the plan's paths.
Tensor pathnn_forward(Tape& tape, const PathPlan& plan, PathnnParams& params,
                      const Tensor& features);

/// Convenience overload that derives the plan from a PathSet.
Tensor pathnn_forward(Tape& tape, const PathSet& paths, PathnnParams& params,
                      const Tensor& features);

}  // namespace dgda
