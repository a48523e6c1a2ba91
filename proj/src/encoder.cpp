#include "dgda/encoder.hpp"

namespace dgda {

GruCellParams make_gru_cell(Rng& rng, Index input, Index hidden,
                            const std::string& prefix) {
  auto mat = [&](const std::string& n, Index r, Index c) {
    return Parameter(prefix + "." + n, init_uniform(rng, r, c, r),
                     TensorShape::matrix(r, c));
  };
  auto vec = [&](const std::string& n, Index r, Index fan_in) {
    return Parameter(prefix + "." + n, init_uniform(rng, r, 1, fan_in),
                     TensorShape::vector(r));
  };
  GruCellParams p;
  p.wz = mat("wz", input, hidden);
  p.uz = mat("uz", hidden, hidden);
  p.bz = vec("bz", hidden, hidden);
  p.wr = mat("wr", input, hidden);
  p.ur = mat("ur", hidden, hidden);
  p.br = vec("br", hidden, hidden);
  p.wc = mat("wc", input, hidden);
  p.uc = mat("uc", hidden, hidden);
  p.bc = vec("bc", hidden, hidden);
  return p;
}

EncoderParams make_encoder_params(Rng& rng, Index d_text, Index d_audio,
                                  Index d_visual, Index hidden, Index embed,
                                  const std::string& prefix) {
  EncoderParams p;
  p.hidden = hidden;
  p.embed = embed;
  p.gru_forward = make_gru_cell(rng, d_text, hidden, prefix + ".gru_fw");
  p.gru_backward = make_gru_cell(rng, d_text, hidden, prefix + ".gru_bw");
  auto proj = [&](const std::string& n, Index in) {
    return std::pair<Parameter, Parameter>(
        Parameter(prefix + "." + n + "_w", init_uniform(rng, in, embed, in),
                  TensorShape::matrix(in, embed)),
        Parameter(prefix + "." + n + "_b", init_uniform(rng, embed, 1, in),
                  TensorShape::vector(embed)));
  };
  std::tie(p.proj_text_w, p.proj_text_b) = proj("proj_text", 2 * hidden);
  std::tie(p.proj_audio_w, p.proj_audio_b) = proj("proj_audio", d_audio);
  std::tie(p.proj_visual_w, p.proj_visual_b) = proj("proj_visual", d_visual);
  return p;
}

std::vector<Parameter*> params_of(GruCellParams& p) {
  return {&p.wz, &p.uz, &p.bz, &p.wr, &p.ur, &p.br, &p.wc, &p.uc, &p.bc};
}

std::vector<Parameter*> params_of(EncoderParams& p) {
  std::vector<Parameter*> out = params_of(p.gru_forward);
  for (Parameter* q : params_of(p.gru_backward)) out.push_back(q);
  out.push_back(&p.proj_text_w);
  out.push_back(&p.proj_text_b);
  out.push_back(&p.proj_audio_w);
  out.push_back(&p.proj_audio_b);
  out.push_back(&p.proj_visual_w);
  out.push_back(&p.proj_visual_b);
  return out;
}

Tensor gru_cell(Tape& tape, GruCellParams& p, const Tensor& x,
                const Tensor& h_prev) {
  Tensor z = sigmoid(add_rowvec(
      add(matmul(x, tape.watch(p.wz)), matmul(h_prev, tape.watch(p.uz))),
      tape.watch(p.bz)));
  Tensor r = sigmoid(add_rowvec(
      add(matmul(x, tape.watch(p.wr)), matmul(h_prev, tape.watch(p.ur))),
      tape.watch(p.br)));
  Tensor c = tanh(add_rowvec(add(matmul(x, tape.watch(p.wc)),
                                 matmul(hadamard(r, h_prev), tape.watch(p.uc))),
                             tape.watch(p.bc)));
  Tensor ones = tape.constant(Matrix::Ones(1, c.cols()));
  return add(hadamard(sub(ones, z), h_prev), hadamard(z, c));
}

Tensor encode_text(Tape& tape, EncoderParams& p, const Tensor& sequence) {
  if (sequence.rank() != 2 || sequence.rows() < 1)
    throw ContractViolation("encode_text: expected a nonempty T x d sequence, got " +
                            sequence.shape().str());
  Index steps = sequence.rows();
  Matrix zero = Matrix::Zero(1, p.hidden);
  std::vector<Tensor> fwd(static_cast<std::size_t>(steps));
  std::vector<Tensor> bwd(static_cast<std::size_t>(steps));
  Tensor h = tape.constant(zero);
  for (Index t = 0; t < steps; ++t) {
    h = gru_cell(tape, p.gru_forward, slice_rows(sequence, t, 1), h);
    fwd[static_cast<std::size_t>(t)] = h;
  }
  h = tape.constant(zero);
  for (Index t = steps - 1; t >= 0; --t) {
    h = gru_cell(tape, p.gru_backward, slice_rows(sequence, t, 1), h);
    bwd[static_cast<std::size_t>(t)] = h;
  }
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(steps));
  for (Index t = 0; t < steps; ++t)
    rows.push_back(concat_lastdim(fwd[static_cast<std::size_t>(t)],
                                  bwd[static_cast<std::size_t>(t)]));
  Tensor states = steps == 1 ? rows.front() : concat_rows(rows);
  return add_rowvec(matmul(states, tape.watch(p.proj_text_w)),
                    tape.watch(p.proj_text_b));
}

Tensor encode_audio_visual(Tape& tape, const Tensor& features, Parameter& w,
                           Parameter& b) {
  if (features.rank() != 2 || features.cols() != w.shape.rows)
    throw ContractViolation("encode_audio_visual: features " +
                            features.shape().str() + " do not match projection " +
                            w.shape.str());
  return add_rowvec(matmul(features, tape.watch(w)), tape.watch(b));
}

}  // namespace dgda
