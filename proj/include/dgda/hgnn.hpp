#pragma once

#include "dgda/graph.hpp"
#include "dgda/tensor.hpp"

namespace dgda {

struct HgnnConfig {
  int layer_count = 2;
  double leaky_slope = 0.01;
  // Strict mode (all three off) pins the bare propagation formula; the
  // trainer runs with projection, activation and residuals on.
  bool use_projection = true;
  bool use_activation = true;
  bool use_residual = true;
};

/// Learnable state of the hypergraph branch: a per-layer D -> D projection
/// and the shared hyperedge weight slots, parameterized as w(e) = exp(s_e)
/// to keep every weight positive.
struct HgnnParams {
  HgnnConfig config;
  std::vector<Parameter> proj_w;  // layer_count of D x D
  std::vector<Parameter> proj_b;  // layer_count of D
  Parameter log_weights;          // s over weight slots, zeros at init
};

HgnnParams make_hgnn_params(Rng& rng, Index embed, int weight_slots,
                            const HgnnConfig& config, const std::string& prefix);

std::vector<Parameter*> params_of(HgnnParams& p);

/// One hypergraph convolution: sigma(D^-1 H W_e B^-1 H^T (X W + b)) where D
/// is recomputed from the live weights so their gradient flows through the
/// normalization too.
Tensor hgnn_layer(Tape& tape, const Hypergraph& hg, HgnnParams& params,
                  const Tensor& features, int layer);

/// Stacks layer_count convolutions, adding the input back per layer when
/// residuals are enabled.
Tensor hgnn_forward(Tape& tape, const Hypergraph& hg, HgnnParams& params,
                    const Tensor& features);

}  // namespace dgda
