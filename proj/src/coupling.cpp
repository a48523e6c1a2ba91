#include "dgda/coupling.hpp"

#include <cmath>

#include "dgda/model.hpp"
#include "dgda/robust.hpp"

namespace dgda {

namespace {
constexpr double kLogFloor = 1e-12;

void check_rows_are_distributions(const Matrix& probs, const char* who) {
  for (Index i = 0; i < probs.rows(); ++i) {
    if (probs.row(i).minCoeff() < 0.0 ||
        std::abs(probs.row(i).sum() - 1.0) > 1e-6)
      throw ContractViolation(std::string(who) + ": row " + std::to_string(i) +
                              " is not a distribution");
  }
}
}  // namespace

PseudoLabelBatch generate_pseudo_labels(const Matrix& probs, double zeta) {
  check_rows_are_distributions(probs, "generate_pseudo_labels");
  PseudoLabelBatch out;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    probs.row(i).maxCoeff(&best);  // Eigen reports the first maximum
    double confidence = probs(i, best);
    if (confidence > zeta) {
      out.indices.push_back(static_cast<int>(i));
      out.labels.push_back(static_cast<int>(best));
      out.confidences.push_back(confidence);
    }
  }
  return out;
}

double kl_categorical(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  if (q.size() != p.size()) throw ContractViolation("kl_categorical: size mismatch");
  if (q.minCoeff() < 0.0 || std::abs(q.sum() - 1.0) > 1e-6 ||
      p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > 1e-6)
    throw ContractViolation("kl_categorical: inputs must be distributions");
  double kl = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (q(k) <= 0.0) continue;  // 0 log 0 = 0
    kl += q(k) * (std::log(q(k)) - std::log(std::max(p(k), kLogFloor)));
  }
  return kl;
}

Tensor coupling_loss(Tape& tape, const Tensor& student_probs_src,
                     const std::vector<int>& src_labels,
                     const Tensor& student_probs_tgt,
                     const Matrix& teacher_probs_tgt, double zeta) {
  if (student_probs_tgt.rank() != 2 ||
      student_probs_tgt.rows() != teacher_probs_tgt.rows() ||
      student_probs_tgt.cols() != teacher_probs_tgt.cols())
    throw ContractViolation("coupling_loss: student/teacher target shapes differ");

  Tensor ce = cross_entropy(tape, student_probs_src, src_labels);

  PseudoLabelBatch kept = generate_pseudo_labels(teacher_probs_tgt, zeta);
  if (kept.indices.empty()) return ce;

  Index k = static_cast<Index>(kept.indices.size());
  Matrix teacher(k, teacher_probs_tgt.cols());
  Eigen::VectorXd teacher_entropy(k);  // sum q log q per kept row, constant
  for (Index i = 0; i < k; ++i) {
    teacher.row(i) = teacher_probs_tgt.row(kept.indices[static_cast<std::size_t>(i)]);
    double s = 0.0;
    for (Index c = 0; c < teacher.cols(); ++c)
      if (teacher(i, c) > 0.0) s += teacher(i, c) * std::log(teacher(i, c));
    teacher_entropy(i) = s;
  }

  Tensor student_rows = select_rows(student_probs_tgt, kept.indices);
  Tensor cross = row_sum(hadamard(tape.constant(teacher),
                                  log(clamp(student_rows, kLogFloor, 2.0))));
  Tensor kl = sub(tape.constant(Matrix(teacher_entropy), TensorShape::vector(k)),
                  cross);
  return add(ce, mean_all(kl));
}

CouplingLosses alternate_branch_update(DgdaModel& model,
                                       const PreparedBatch& batch,
                                       Adam& pathnn_opt, Adam& hgnn_opt,
                                       double zeta, double w_couple) {
  if (model.config.disable_hgnn || model.config.disable_pathnn)
    throw ContractViolation(
        "alternate_branch_update: both branches must be enabled");
  if (batch.source.empty() || batch.target.empty())
    throw ContractViolation("alternate_branch_update: both domains required");

  auto branch_probs = [&](Tape& tape,
                          const std::vector<const PreparedDialogue*>& dialogues,
                          bool hgnn_branch) {
    std::vector<Tensor> rows;
    rows.reserve(dialogues.size());
    for (const PreparedDialogue* d : dialogues)
      rows.push_back(hgnn_branch ? model.hgnn_branch_probs(tape, *d)
                                 : model.pathnn_branch_probs(tape, *d));
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
  };
  auto source_labels = [&] {
    std::vector<int> labels;
    for (const PreparedDialogue* d : batch.source)
      labels.insert(labels.end(), d->data->labels.begin(), d->data->labels.end());
    return labels;
  }();

  CouplingLosses losses;

  // step A: HGNN is the teacher, PathNN learns
  {
    Tape tape;
    Matrix teacher;
    {
      Tape frozen;
      frozen.set_grad_enabled(false);
      teacher = branch_probs(frozen, batch.target, true).value();
    }
    Tensor loss = coupling_loss(tape, branch_probs(tape, batch.source, false),
                                source_labels,
                                branch_probs(tape, batch.target, false),
                                teacher, zeta);
    losses.loss_pathnn_student = loss.scalar();
    pathnn_opt.step(tape.backward(scalar_mul(loss, w_couple)));
  }
  // step B: PathNN is the teacher, HGNN learns
  {
    Tape tape;
    Matrix teacher;
    {
      Tape frozen;
      frozen.set_grad_enabled(false);
      teacher = branch_probs(frozen, batch.target, false).value();
    }
    Tensor loss = coupling_loss(tape, branch_probs(tape, batch.source, true),
                                source_labels,
                                branch_probs(tape, batch.target, true),
                                teacher, zeta);
    losses.loss_hgnn_student = loss.scalar();
    hgnn_opt.step(tape.backward(scalar_mul(loss, w_couple)));
  }
  return losses;
}

}  // namespace dgda
