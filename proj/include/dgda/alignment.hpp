#pragma once

#include "dgda/tensor.hpp"

namespace dgda {

/// Learned feature perturbation H + delta * M(H). delta is a fixed
/// hyperparameter; the two-layer map M trains with the encoder.
struct PerturbParams {
  double delta = 0.1;
  double leaky_slope = 0.01;
  Parameter w1, b1;  // D x D, D
  Parameter w2, b2;  // D x D, D
};

PerturbParams make_perturb_params(Rng& rng, Index embed, double delta,
                                  const std::string& prefix);
std::vector<Parameter*> params_of(PerturbParams& p);

/// delta == 0 returns the features unchanged (bit-exact, M is skipped).
Tensor perturb(Tape& tape, PerturbParams& params, const Tensor& features);

/// Per-branch domain discriminator D -> h -> 1 with sigmoid output.
struct DiscriminatorParams {
  double leaky_slope = 0.01;
  Parameter w1, b1;  // D x h
  Parameter w2, b2;  // h x 1
};

DiscriminatorParams make_discriminator_params(Rng& rng, Index embed,
                                              Index hidden,
                                              const std::string& prefix);
std::vector<Parameter*> params_of(DiscriminatorParams& p);

/// Row-wise domain probabilities, an n-vector strictly inside (0, 1).
Tensor discriminate(Tape& tape, DiscriminatorParams& params,
                    const Tensor& features);

/// mean -log p over a batch of probabilities, floored into
/// [1e-7, 1 - 1e-7] before the log.
Tensor nll_real(Tape& tape, const Tensor& probs);
/// mean -log(1 - p), same flooring.
Tensor nll_fake(Tape& tape, const Tensor& probs);

/// L_D = -E[log D(src)] - E[log(1 - D(tgt))] over perturbed features.
Tensor discriminator_loss(Tape& tape, DiscriminatorParams& params,
                          const Tensor& src_features, const Tensor& tgt_features);

/// L_adv = -E[log D(tgt)], the encoder's alignment objective.
Tensor adversarial_loss(Tape& tape, DiscriminatorParams& params,
                        const Tensor& tgt_features);

// The alternating update over a prepared batch lives with the trainer-facing
// model; see alignment.cpp for the definition.
struct DgdaModel;
struct PreparedBatch;

struct AlignLosses {
  double disc_loss = 0.0;
  double adv_loss = 0.0;
};

/// k_disc discriminator updates on L_D with encoder leaves excluded from the
/// optimizer, then one encoder update on w_adv * L_adv with discriminator
/// leaves excluded. Both branches are processed in each phase.
AlignLosses alternate_step(DgdaModel& model, const PreparedBatch& batch,
                           Adam& disc_opt, Adam& model_opt, int k_disc,
                           double w_adv);

}  // namespace dgda
