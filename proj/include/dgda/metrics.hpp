#pragma once

#include "dgda/tensor.hpp"

namespace dgda {

struct MetricsReport {
  Eigen::VectorXd per_class_f1;
  double wf1 = 0.0;
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted
  double memorization_rate = 0.0;
  double branch_agreement = 0.0;
};

/// Index of the row maximum, ties resolved to the lowest class id.
int argmax_row(const Eigen::RowVectorXd& row);

Eigen::MatrixXi confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& labels,
                                 int num_classes);

/// Per-class F1 = 2PR / (P + R), defined as 0 when P + R == 0.
Eigen::VectorXd per_class_f1(const Eigen::MatrixXi& confusion);

/// Support-weighted mean of per-class F1; classes without support are
/// excluded from the weighted sum.
double wf1_score(const std::vector<int>& predictions,
                 const std::vector<int>& labels, int num_classes);

}  // namespace dgda
