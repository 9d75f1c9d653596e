#pragma once

#include "kshot/data.hpp"

#include <span>

namespace kshot {

/// Row-wise numerically stable softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits);

/// Summed softmax cross-entropy of the rows of `features` under weights `w`
/// (C x p), with `targets[n]` indexing the rows of `w`. If `fixed` is non-null
/// its rows are prepended to the softmax as non-trainable classes and targets
/// index the stacked matrix [fixed; w]. The gradient w.r.t. `w` is written to
/// `grad` (same shape as `w`) when non-null.
double softmax_cross_entropy(const Matrix& w, const Matrix& features, std::span<const int> targets,
                             Matrix* grad, const Matrix* fixed = nullptr);

}  // namespace kshot
