#include "dgda/alignment.hpp"

#include "dgda/model.hpp"

namespace dgda {

namespace {
constexpr double kProbFloor = 1e-7;
}

PerturbParams make_perturb_params(Rng& rng, Index embed, double delta,
                                  const std::string& prefix) {
  if (delta < 0.0)
    throw ContractViolation("make_perturb_params: delta must be nonnegative");
  PerturbParams p;
  p.delta = delta;
  p.w1 = Parameter(prefix + ".w1", init_uniform(rng, embed, embed, embed),
                   TensorShape::matrix(embed, embed));
  p.b1 = Parameter(prefix + ".b1", init_uniform(rng, embed, 1, embed),
                   TensorShape::vector(embed));
  p.w2 = Parameter(prefix + ".w2", init_uniform(rng, embed, embed, embed),
                   TensorShape::matrix(embed, embed));
  p.b2 = Parameter(prefix + ".b2", init_uniform(rng, embed, 1, embed),
                   TensorShape::vector(embed));
  return p;
}

std::vector<Parameter*> params_of(PerturbParams& p) {
  return {&p.w1, &p.b1, &p.w2, &p.b2};
}

Tensor perturb(Tape& tape, PerturbParams& params, const Tensor& features) {
  if (features.rank() != 2)
    throw ContractViolation("perturb: expected node features, got " +
                            features.shape().str());
  if (params.delta == 0.0) return features;
  Tensor hidden = leaky_relu(
      add_rowvec(matmul(features, tape.watch(params.w1)), tape.watch(params.b1)),
      params.leaky_slope);
  Tensor noise = add_rowvec(matmul(hidden, tape.watch(params.w2)),
                            tape.watch(params.b2));
  return add(features, scalar_mul(noise, params.delta));
}

DiscriminatorParams make_discriminator_params(Rng& rng, Index embed,
                                              Index hidden,
                                              const std::string& prefix) {
  DiscriminatorParams p;
  p.w1 = Parameter(prefix + ".w1", init_uniform(rng, embed, hidden, embed),
                   TensorShape::matrix(embed, hidden));
  p.b1 = Parameter(prefix + ".b1", init_uniform(rng, hidden, 1, embed),
                   TensorShape::vector(hidden));
  p.w2 = Parameter(prefix + ".w2", init_uniform(rng, hidden, 1, hidden),
                   TensorShape::matrix(hidden, 1));
  p.b2 = Parameter(prefix + ".b2", init_uniform(rng, 1, 1, hidden),
                   TensorShape::vector(1));
  return p;
}

std::vector<Parameter*> params_of(DiscriminatorParams& p) {
  return {&p.w1, &p.b1, &p.w2, &p.b2};
}

Tensor discriminate(Tape& tape, DiscriminatorParams& params,
                    const Tensor& features) {
  if (features.rank() != 2 || features.rows() < 1)
    throw ContractViolation("discriminate: empty batch");
  Tensor hidden = leaky_relu(
      add_rowvec(matmul(features, tape.watch(params.w1)), tape.watch(params.b1)),
      params.leaky_slope);
  Tensor logit = add_rowvec(matmul(hidden, tape.watch(params.w2)),
                            tape.watch(params.b2));
  return reshape(sigmoid(logit), TensorShape::vector(features.rows()));
}

Tensor nll_real(Tape& tape, const Tensor& probs) {
  (void)tape;
  if (probs.size() < 1) throw ContractViolation("nll_real: empty batch");
  return scalar_mul(mean_all(log(clamp(probs, kProbFloor, 1.0 - kProbFloor))),
                    -1.0);
}

Tensor nll_fake(Tape& tape, const Tensor& probs) {
  if (probs.size() < 1) throw ContractViolation("nll_fake: empty batch");
  Tensor one = tape.constant(Matrix::Ones(probs.value().rows(), probs.value().cols()),
                             probs.shape());
  return scalar_mul(
      mean_all(log(sub(one, clamp(probs, kProbFloor, 1.0 - kProbFloor)))),
      -1.0);
}

Tensor discriminator_loss(Tape& tape, DiscriminatorParams& params,
                          const Tensor& src_features,
                          const Tensor& tgt_features) {
  return add(nll_real(tape, discriminate(tape, params, src_features)),
             nll_fake(tape, discriminate(tape, params, tgt_features)));
}

Tensor adversarial_loss(Tape& tape, DiscriminatorParams& params,
                        const Tensor& tgt_features) {
  return nll_real(tape, discriminate(tape, params, tgt_features));
}

namespace {

struct BranchFeatures {
  Tensor src;  // stacked node embeddings over the source half
  Tensor tgt;
};

// Forwards every dialogue of the batch through one branch and stacks the
// perturbed node embeddings per domain.
BranchFeatures perturbed_branch_features(Tape& tape, DgdaModel& model,
                                         const PreparedBatch& batch,
                                         bool hgnn_branch) {
  auto run = [&](const std::vector<const PreparedDialogue*>& dialogues) {
    std::vector<Tensor> rows;
    rows.reserve(dialogues.size());
    for (const PreparedDialogue* d : dialogues) {
      Tensor nodes = hgnn_branch ? model.hgnn_nodes(tape, *d)
                                 : model.pathnn_nodes(tape, *d);
      rows.push_back(nodes);
    }
    Tensor stacked = rows.size() == 1 ? rows.front() : concat_rows(rows);
    PerturbParams& pert =
        hgnn_branch ? model.perturb_hgnn : model.perturb_pathnn;
    return perturb(tape, pert, stacked);
  };
  BranchFeatures f;
  f.src = run(batch.source);
  f.tgt = run(batch.target);
  return f;
}

}  // namespace

AlignLosses alternate_step(DgdaModel& model, const PreparedBatch& batch,
                           Adam& disc_opt, Adam& model_opt, int k_disc,
                           double w_adv) {
  if (k_disc < 1) throw ContractViolation("alternate_step: k_disc < 1");
  if (batch.source.empty() || batch.target.empty())
    throw ContractViolation("alternate_step: both domains must be present");

  std::vector<std::pair<bool, DiscriminatorParams*>> branches;
  if (!model.config.disable_hgnn) branches.push_back({true, &model.disc_hgnn});
  if (!model.config.disable_pathnn)
    branches.push_back({false, &model.disc_pathnn});

  AlignLosses losses;

  // discriminator phase: encoder parameters are not in disc_opt, so they
  // cannot move even though their gradients exist on the tape
  for (int step = 0; step < k_disc; ++step) {
    double total = 0.0;
    for (auto& [is_hgnn, disc] : branches) {
      Tape tape;
      BranchFeatures f = perturbed_branch_features(tape, model, batch, is_hgnn);
      Tensor loss = discriminator_loss(tape, *disc, f.src, f.tgt);
      total += loss.scalar();
      disc_opt.step(tape.backward(loss));
    }
    losses.disc_loss = total / static_cast<double>(branches.size());
  }

  // encoder phase on the adversarial objective, discriminators excluded
  {
    double total = 0.0;
    Tape tape;
    Tensor sum = tape.constant_scalar(0.0);
    for (auto& [is_hgnn, disc] : branches) {
      BranchFeatures f = perturbed_branch_features(tape, model, batch, is_hgnn);
      Tensor adv = adversarial_loss(tape, *disc, f.tgt);
      total += adv.scalar();
      sum = add(sum, adv);
    }
    losses.adv_loss = total / static_cast<double>(branches.size());
    model_opt.step(tape.backward(scalar_mul(sum, w_adv)));
  }
  return losses;
}

}  // namespace dgda
