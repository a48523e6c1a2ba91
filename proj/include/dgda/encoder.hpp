#pragma once

#include "dgda/tensor.hpp"

namespace dgda {

/// One GRU cell. Weights are stored input-major (in x out) so a feature row
/// maps through plain matmul.
struct GruCellParams {
  Parameter wz, uz, bz;  // update gate
  Parameter wr, ur, br;  // reset gate
  Parameter wc, uc, bc;  // candidate state
};

/// Maps the three raw modality spaces into a shared embed_dim space: a
/// bidirectional GRU for text, rowwise affine maps for audio and visual.
struct EncoderParams {
  GruCellParams gru_forward;
  GruCellParams gru_backward;
  Parameter proj_text_w, proj_text_b;      // 2h x D, D
  Parameter proj_audio_w, proj_audio_b;    // d_a x D, D
  Parameter proj_visual_w, proj_visual_b;  // d_v x D, D
  Index hidden = 0;
  Index embed = 0;
};

GruCellParams make_gru_cell(Rng& rng, Index input, Index hidden,
                            const std::string& prefix);

EncoderParams make_encoder_params(Rng& rng, Index d_text, Index d_audio,
                                  Index d_visual, Index hidden, Index embed,
                                  const std::string& prefix);

std::vector<Parameter*> params_of(GruCellParams& p);
std::vector<Parameter*> params_of(EncoderParams& p);

/// One recurrence step on 1 x d input and 1 x h previous state:
///   z = sigma(x Wz + h Uz + bz), r = sigma(x Wr + h Ur + br),
///   c = tanh(x Wc + (r . h) Uc + bc), h' = (1 - z) . h + z . c
Tensor gru_cell(Tape& tape, GruCellParams& p, const Tensor& x,
                const Tensor& h_prev);

/// T x d_text -> T x D. Row t is the text projection of the concatenated
/// forward and backward hidden states at t. Initial states are zero; the
/// recurrence never crosses dialogue boundaries.
Tensor encode_text(Tape& tape, EncoderParams& p, const Tensor& sequence);

/// Rowwise affine map T x d -> T x D.
Tensor encode_audio_visual(Tape& tape, const Tensor& features, Parameter& w,
                           Parameter& b);

}  // namespace dgda
