#include "dgda/metrics.hpp"

namespace dgda {

int argmax_row(const Eigen::RowVectorXd& row) {
  Eigen::Index best = 0;
  row.maxCoeff(&best);  // first maximum wins ties
  return static_cast<int>(best);
}

Eigen::MatrixXi confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& labels,
                                 int num_classes) {
  if (predictions.size() != labels.size() || labels.empty())
    throw ContractViolation("confusion_matrix: prediction/label size mismatch");
  Eigen::MatrixXi c = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 ||
        predictions[i] >= num_classes)
      throw ContractViolation("confusion_matrix: class id out of range");
    c(labels[i], predictions[i]) += 1;
  }
  return c;
}

Eigen::VectorXd per_class_f1(const Eigen::MatrixXi& confusion) {
  int k = static_cast<int>(confusion.rows());
  Eigen::VectorXd f1 = Eigen::VectorXd::Zero(k);
  for (int c = 0; c < k; ++c) {
    double tp = confusion(c, c);
    double predicted = confusion.col(c).sum();
    double support = confusion.row(c).sum();
    double precision = predicted > 0 ? tp / predicted : 0.0;
    double recall = support > 0 ? tp / support : 0.0;
    f1(c) = precision + recall > 0.0
                ? 2.0 * precision * recall / (precision + recall)
                : 0.0;
  }
  return f1;
}

double wf1_score(const std::vector<int>& predictions,
                 const std::vector<int>& labels, int num_classes) {
  Eigen::MatrixXi confusion = confusion_matrix(predictions, labels, num_classes);
  Eigen::VectorXd f1 = per_class_f1(confusion);
  double total = static_cast<double>(labels.size());
  double score = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    double support = confusion.row(c).sum();
    if (support == 0.0) continue;  // no weight, keep the sum NaN-free
    score += support / total * f1(c);
  }
  return score;
}

}  // namespace dgda
