#pragma once

// Test-only oracles. Everything here is computed independently of the code
// paths under test: finite differences re-evaluate the forward function,
// never the tape's backward rules.

#include "dgda/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using dgda::GradMap;
using dgda::Matrix;
using dgda::Parameter;

/// Central finite differences of a scalar function w.r.t. every coordinate
/// of every listed parameter. The function is re-evaluated from scratch per
/// probe; parameters are restored afterwards.
inline GradMap fd_gradients(const std::vector<Parameter*>& params,
                            const std::function<double()>& f,
                            double step = 1e-6) {
  GradMap out;
  for (Parameter* p : params) {
    Matrix g = Matrix::Zero(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        double orig = p->value(i, j);
        p->value(i, j) = orig + step;
        double up = f();
        p->value(i, j) = orig - step;
        double down = f();
        p->value(i, j) = orig;
        g(i, j) = (up - down) / (2.0 * step);
      }
    }
    out[p->name] = g;
  }
  return out;
}

inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(const Matrix& a, const Matrix& b,
                            double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, rel_error(a(i, j), b(i, j), floor));
  return worst;
}

/// Max relative error between an analytic gradient map and an FD map. A
/// parameter missing from the analytic map is treated as all-zero gradient.
inline double max_rel_error(const GradMap& analytic, const GradMap& fd,
                            double floor = 1e-3) {
  double worst = 0.0;
  for (const auto& [name, g_fd] : fd) {
    auto it = analytic.find(name);
    Matrix g = it == analytic.end()
                   ? Matrix::Zero(g_fd.rows(), g_fd.cols()).eval()
                   : it->second;
    worst = std::max(worst, max_rel_error(g, g_fd, floor));
  }
  return worst;
}

}  // namespace oracle
