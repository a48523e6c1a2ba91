#pragma once

#include "dgda/tensor.hpp"

namespace dgda {

/// Target samples whose teacher confidence cleared the threshold.
struct PseudoLabelBatch {
  std::vector<int> indices;
  std::vector<int> labels;           // argmax, ties to the lowest class id
  std::vector<double> confidences;   // max class probability, > zeta
};

/// Keeps row i iff max_k probs(i, k) > zeta. Rows must be distributions
/// (sum within 1e-6 of 1, entries nonnegative).
PseudoLabelBatch generate_pseudo_labels(const Matrix& probs, double zeta);

/// sum_k q_k log(q_k / p_k) with p floored at 1e-12 and the 0 log 0 = 0
/// convention. Both arguments must be valid distributions.
double kl_categorical(const Eigen::VectorXd& q, const Eigen::VectorXd& p);

/// One side of the alternating branch objective: source cross-entropy of the
/// student plus the mean KL(teacher_row || student_row) over target rows the
/// teacher is confident about. The teacher matrix is plain values, detached
/// by construction. No kept rows means the target term is zero.
Tensor coupling_loss(Tape& tape, const Tensor& student_probs_src,
                     const std::vector<int>& src_labels,
                     const Tensor& student_probs_tgt,
                     const Matrix& teacher_probs_tgt, double zeta);

struct DgdaModel;
struct PreparedBatch;

struct CouplingLosses {
  double loss_pathnn_student = 0.0;  // teacher HGNN
  double loss_hgnn_student = 0.0;    // teacher PathNN
};

/// Step A minimizes the PathNN-student loss with HGNN frozen, step B the
/// HGNN-student loss with PathNN frozen, in that order. Each optimizer owns
/// exactly its branch's parameters, so freezing is by exclusion.
CouplingLosses alternate_branch_update(DgdaModel& model,
                                       const PreparedBatch& batch,
                                       Adam& pathnn_opt, Adam& hgnn_opt,
                                       double zeta, double w_couple);

}  // namespace dgda
