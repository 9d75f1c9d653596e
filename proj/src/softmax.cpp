#include "kshot/softmax.hpp"

#include "kshot/error.hpp"

#include <cmath>

namespace kshot {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index n = 0; n < logits.rows(); ++n) {
    const double top = logits.row(n).maxCoeff();
    out.row(n) = (logits.row(n).array() - top).exp();
    out.row(n) /= out.row(n).sum();
  }
  return out;
}

double softmax_cross_entropy(const Matrix& w, const Matrix& features, std::span<const int> targets,
                             Matrix* grad, const Matrix* fixed) {
  const Eigen::Index n = features.rows();
  const Eigen::Index n_fixed = fixed ? fixed->rows() : 0;
  const Eigen::Index total = n_fixed + w.rows();
  if (grad) grad->setZero(w.rows(), w.cols());
  if (n == 0) return 0.0;

  Matrix logits(n, total);
  if (fixed) logits.leftCols(n_fixed).noalias() = features * fixed->transpose();
  logits.rightCols(w.rows()).noalias() = features * w.transpose();

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= total) throw ConfigError("softmax: target out of range");
    const double top = logits.row(i).maxCoeff();
    const double margin = logits(i, y) - top;
    logits.row(i) = (logits.row(i).array() - top).exp();
    const double z = logits.row(i).sum();
    loss += std::log(z) - margin;
    logits.row(i) /= z;
    logits(i, y) -= 1.0;  // now P - Y
  }
  if (grad) grad->noalias() = logits.rightCols(w.rows()).transpose() * features;
  return loss;
}

}  // namespace kshot
