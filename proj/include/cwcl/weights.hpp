#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cwcl/errors.hpp"
#include "cwcl/matrix.hpp"

namespace cwcl {

enum class WeightKind { linear, softmax, indicator, class_indicator };

inline const char* to_string(WeightKind k) {
    switch (k) {
        case WeightKind::linear: return "linear";
        case WeightKind::softmax: return "softmax";
        case WeightKind::indicator: return "indicator";
        case WeightKind::class_indicator: return "class_indicator";
    }
    return "?";
}

/// Intra-modal similarity weights w_ij computed from the frozen tower's
/// pre-projection embeddings. The losses treat these as constants: no
/// gradient ever flows through a SimilarityWeights value.
struct SimilarityWeights {
    std::size_t n = 0;
    Matrix w; // n x n
    WeightKind kind = WeightKind::indicator;
};

namespace detail {

// Weight inputs come straight out of l2_normalize_rows, so the check can
// be tight.
constexpr double kWeightsUnitTol = 1e-9;

inline void require_unit_rows(const Matrix& q, const char* op) {
    if (!rows_unit_norm(q, kWeightsUnitTol))
        throw ValidationError(std::string(op) + ": input rows must be unit-norm");
}

} // namespace detail

/// w_ij = <q_i, q_j>/2 + 0.5, the affine map taking cosine similarity
/// [-1, 1] onto [0, 1]. Symmetric, unit diagonal on unit-norm inputs;
/// identical rows get weight 1, antipodal rows get weight 0.
inline SimilarityWeights linear_weights(const Matrix& q) {
    detail::require_unit_rows(q, "linear_weights");
    Matrix w = matmul_bt(q, q);
    for (double& v : w.data) {
        v = v / 2.0 + 0.5;
        // inner products of numerically unit rows can land just outside [-1, 1]
        v = std::min(1.0, std::max(0.0, v));
    }
    return SimilarityWeights{q.rows, std::move(w), WeightKind::linear};
}

/// Row i is the softmax of the cosine similarities <q_i, q_k>; each row
/// sums to 1 and defines a distribution over the batch.
inline SimilarityWeights softmax_weights(const Matrix& q) {
    detail::require_unit_rows(q, "softmax_weights");
    Matrix w = log_softmax_rows(matmul_bt(q, q));
    for (double& v : w.data) v = std::exp(v);
    return SimilarityWeights{q.rows, std::move(w), WeightKind::softmax};
}

/// Identity weights: w_ij = 1 iff i == j. The weighted loss collapses to
/// the standard contrastive loss under these.
inline SimilarityWeights indicator_weights(std::size_t n) {
    if (n == 0) throw ValidationError("indicator_weights: n must be >= 1");
    return SimilarityWeights{n, Matrix::identity(n), WeightKind::indicator};
}

/// Label-block weights: w_ij = 1 iff labels[i] == labels[j].
inline SimilarityWeights class_indicator_weights(const std::vector<int>& labels) {
    if (labels.empty()) throw ValidationError("class_indicator_weights: empty labels");
    const std::size_t n = labels.size();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w.at(i, j) = labels[i] == labels[j] ? 1.0 : 0.0;
    return SimilarityWeights{n, std::move(w), WeightKind::class_indicator};
}

} // namespace cwcl
