#pragma once

#include "dgda/tensor.hpp"

namespace dgda {

/// Per-sample exponential moving average of predicted distributions,
/// p_hat <- beta * p_hat + (1 - beta) * p. The first observation seeds the
/// row directly. Rows live outside any tape; updates never carry gradients.
class EmaTracker {
 public:
  EmaTracker() = default;
  EmaTracker(int num_samples, int num_classes, double momentum,
             std::int64_t freeze_after_epoch = -1);

  void update(int sample_id, const Eigen::VectorXd& probs,
              std::int64_t epoch = 0);
  Eigen::VectorXd row(int sample_id) const;
  bool is_initialized(int sample_id) const;
  /// Gathers rows for a batch; uninitialized rows fall back to the given
  /// current predictions (the first-observation rule applied on the fly).
  Matrix gather(const std::vector<int>& sample_ids, const Matrix& fallback) const;

  double momentum() const { return momentum_; }
  int num_samples() const { return static_cast<int>(table_.rows()); }

 private:
  Matrix table_;
  std::vector<char> initialized_;
  double momentum_ = 0.7;
  std::int64_t freeze_after_ = -1;  // negative: never freeze
};

void update_ema(EmaTracker& tracker, int sample_id, const Eigen::VectorXd& probs,
                std::int64_t epoch = 0);

/// Mean cross-entropy -1/n sum log p[i, y_i] with the probabilities floored
/// at 1e-12.
Tensor cross_entropy(Tape& tape, const Tensor& probs,
                     const std::vector<int>& labels);

/// The noise-robust classification loss
///   CE + lambda * mean log(1 - <p_i, p_hat_i>)
/// with the inner product clipped at 1 - 1e-7. lambda == 0 returns the plain
/// cross-entropy node unchanged. ema_rows must align with probs rows.
Tensor cls_loss(Tape& tape, const Tensor& probs, const std::vector<int>& labels,
                const Matrix& ema_rows, double lambda);

/// Diagnostic gap |p - y_tilde / (y_tilde + lambda y (1 - p))| for the
/// stationarity relation of the robust loss on a single sample.
double fixed_point_residual(double p, double y_tilde, double y, double lambda);

}  // namespace dgda
