#include "dgda/hgnn.hpp"

namespace dgda {

HgnnParams make_hgnn_params(Rng& rng, Index embed, int weight_slots,
                            const HgnnConfig& config,
                            const std::string& prefix) {
  if (config.layer_count < 1)
    throw ContractViolation("make_hgnn_params: layer_count < 1");
  HgnnParams p;
  p.config = config;
  for (int l = 0; l < config.layer_count; ++l) {
    p.proj_w.emplace_back(prefix + ".proj_w" + std::to_string(l),
                          init_uniform(rng, embed, embed, embed),
                          TensorShape::matrix(embed, embed));
    p.proj_b.emplace_back(prefix + ".proj_b" + std::to_string(l),
                          init_uniform(rng, embed, 1, embed),
                          TensorShape::vector(embed));
  }
  p.log_weights = Parameter(prefix + ".log_we", Matrix::Zero(weight_slots, 1),
                            TensorShape::vector(weight_slots));
  return p;
}

std::vector<Parameter*> params_of(HgnnParams& p) {
  std::vector<Parameter*> out;
  for (auto& w : p.proj_w) out.push_back(&w);
  for (auto& b : p.proj_b) out.push_back(&b);
  out.push_back(&p.log_weights);
  return out;
}

namespace {

Matrix slot_matrix(const Hypergraph& hg) {
  Matrix s = Matrix::Zero(hg.num_hyperedges(), hg.num_slots);
  for (Index e = 0; e < hg.num_hyperedges(); ++e)
    s(e, hg.weight_slot[static_cast<std::size_t>(e)]) = 1.0;
  return s;
}

}  // namespace

Tensor hgnn_layer(Tape& tape, const Hypergraph& hg, HgnnParams& params,
                  const Tensor& features, int layer) {
  if (features.rank() != 2 || features.rows() != hg.num_vertices())
    throw ContractViolation("hgnn_layer: features " + features.shape().str() +
                            " do not cover " + std::to_string(hg.num_vertices()) +
                            " vertices");
  if (layer < 0 || layer >= params.config.layer_count)
    throw ContractViolation("hgnn_layer: layer index out of range");
  if (static_cast<Index>(hg.weight_slot.size()) != hg.num_hyperedges())
    throw ContractViolation("hgnn_layer: hypergraph weight slots inconsistent");

  Tensor y = features;
  if (params.config.use_projection) {
    y = add_rowvec(matmul(y, tape.watch(params.proj_w[static_cast<std::size_t>(layer)])),
                   tape.watch(params.proj_b[static_cast<std::size_t>(layer)]));
  }

  Tensor incidence = tape.constant(hg.incidence);
  Tensor incidence_t = tape.constant(Matrix(hg.incidence.transpose()));
  Tensor slot_w = exp(tape.watch(params.log_weights));
  Tensor edge_w = matmul(tape.constant(slot_matrix(hg)), slot_w);

  Eigen::VectorXd b_inv = hg.recompute_hyperedge_degree().cwiseInverse();
  Tensor aggregated = scale_rows(scale_rows(matmul(incidence_t, y),
                                            tape.constant_vector(b_inv)),
                                 edge_w);
  Tensor spread = matmul(incidence, aggregated);
  // D depends on the learnable weights; invert through exp(-log d)
  Tensor degree = matmul(incidence, edge_w);
  Tensor degree_inv = exp(scalar_mul(log(degree), -1.0));
  Tensor out = scale_rows(spread, degree_inv);
  if (params.config.use_activation)
    out = leaky_relu(out, params.config.leaky_slope);
  return out;
}

Tensor hgnn_forward(Tape& tape, const Hypergraph& hg, HgnnParams& params,
                    const Tensor& features) {
  Tensor x = features;
  for (int l = 0; l < params.config.layer_count; ++l) {
    Tensor y = hgnn_layer(tape, hg, params, x, l);
    x = params.config.use_residual ? add(x, y) : y;
  }
  return x;
}

}  // namespace dgda
