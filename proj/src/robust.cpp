#include "dgda/robust.hpp"

#include <cmath>

namespace dgda {

namespace {
constexpr double kLogFloor = 1e-12;
constexpr double kDotCeil = 1.0 - 1e-7;

void check_distribution(const Eigen::VectorXd& probs, const char* who) {
  if (probs.minCoeff() < 0.0 || std::abs(probs.sum() - 1.0) > 1e-6)
    throw ContractViolation(std::string(who) + ": not a distribution");
}
}  // namespace

EmaTracker::EmaTracker(int num_samples, int num_classes, double momentum,
                       std::int64_t freeze_after_epoch)
    : table_(Matrix::Zero(num_samples, num_classes)),
      initialized_(static_cast<std::size_t>(num_samples), 0),
      momentum_(momentum),
      freeze_after_(freeze_after_epoch) {
  if (momentum < 0.0 || momentum >= 1.0)
    throw ContractViolation("EmaTracker: momentum must lie in [0, 1)");
}

void EmaTracker::update(int sample_id, const Eigen::VectorXd& probs,
                        std::int64_t epoch) {
  if (sample_id < 0 || sample_id >= num_samples())
    throw ContractViolation("EmaTracker: sample id out of range");
  check_distribution(probs, "EmaTracker::update");
  if (freeze_after_ >= 0 && epoch > freeze_after_) return;
  if (!initialized_[static_cast<std::size_t>(sample_id)]) {
    table_.row(sample_id) = probs.transpose();
    initialized_[static_cast<std::size_t>(sample_id)] = 1;
    return;
  }
  table_.row(sample_id) =
      momentum_ * table_.row(sample_id) + (1.0 - momentum_) * probs.transpose();
}

Eigen::VectorXd EmaTracker::row(int sample_id) const {
  return table_.row(sample_id).transpose();
}

bool EmaTracker::is_initialized(int sample_id) const {
  return initialized_[static_cast<std::size_t>(sample_id)] != 0;
}

Matrix EmaTracker::gather(const std::vector<int>& sample_ids,
                          const Matrix& fallback) const {
  if (fallback.rows() != static_cast<Index>(sample_ids.size()) ||
      fallback.cols() != table_.cols())
    throw ContractViolation("EmaTracker::gather: fallback shape mismatch");
  Matrix out(fallback.rows(), fallback.cols());
  for (std::size_t i = 0; i < sample_ids.size(); ++i) {
    int id = sample_ids[i];
    out.row(static_cast<Index>(i)) = is_initialized(id)
                                         ? table_.row(id)
                                         : fallback.row(static_cast<Index>(i));
  }
  return out;
}

void update_ema(EmaTracker& tracker, int sample_id,
                const Eigen::VectorXd& probs, std::int64_t epoch) {
  tracker.update(sample_id, probs, epoch);
}

Tensor cross_entropy(Tape& tape, const Tensor& probs,
                     const std::vector<int>& labels) {
  if (probs.rank() != 2 || probs.rows() != static_cast<Index>(labels.size()) ||
      labels.empty())
    throw ContractViolation("cross_entropy: probs " + probs.shape().str() +
                            " do not match " + std::to_string(labels.size()) +
                            " labels");
  Matrix onehot = Matrix::Zero(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probs.cols())
      throw ContractViolation("cross_entropy: label " +
                              std::to_string(labels[i]) + " outside 0.." +
                              std::to_string(probs.cols() - 1));
    onehot(static_cast<Index>(i), labels[i]) = 1.0;
  }
  Tensor picked = row_sum(
      hadamard(tape.constant(onehot), log(clamp(probs, kLogFloor, 2.0))));
  return scalar_mul(mean_all(picked), -1.0);
}

Tensor cls_loss(Tape& tape, const Tensor& probs, const std::vector<int>& labels,
                const Matrix& ema_rows, double lambda) {
  Tensor ce = cross_entropy(tape, probs, labels);
  if (lambda == 0.0) return ce;
  if (ema_rows.rows() != probs.rows() || ema_rows.cols() != probs.cols())
    throw ContractViolation("cls_loss: ema rows shape mismatch");
  Tensor dots = row_sum(hadamard(probs, tape.constant(ema_rows)));
  Tensor capped = clamp(dots, -1.0, kDotCeil);
  Tensor one = tape.constant(Matrix::Ones(probs.rows(), 1),
                             TensorShape::vector(probs.rows()));
  Tensor reg = mean_all(log(sub(one, capped)));
  return add(ce, scalar_mul(reg, lambda));
}

double fixed_point_residual(double p, double y_tilde, double y, double lambda) {
  if (!(p > 0.0 && p <= 1.0))
    throw ContractViolation("fixed_point_residual: p must lie in (0, 1]");
  double denom = y_tilde + lambda * y * (1.0 - p);
  return std::abs(p - y_tilde / denom);
}

}  // namespace dgda
