#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cwcl/errors.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/weights.hpp"

namespace cwcl {

/// Softmax temperature. When learnable it is trained as log(tau) so
/// positivity is structural; set_log_tau clamps to [kMinTau, kMaxTau].
struct Temperature {
    double tau = 0.07;
    bool learnable = false;

    static constexpr double kMinTau = 0.01;
    static constexpr double kMaxTau = 100.0;

    double log_tau() const { return std::log(tau); }

    void set_log_tau(double lt) {
        tau = std::min(kMaxTau, std::max(kMinTau, std::exp(lt)));
    }
};

/// Scalar loss plus analytic gradients. grad_q is all-zero when the
/// second input was detached; log_tau_grad is d(value)/d(log tau).
struct LossOutput {
    double value = 0.0;
    Matrix grad_p;
    Matrix grad_q;
    double log_tau_grad = 0.0;
};

namespace detail {

// Loose enough that finite-difference probes (eps <= 1e-4) on unit rows
// still validate; real unnormalized inputs are far outside this band.
constexpr double kLossUnitTol = 1e-3;

inline void require_embeddings(const Matrix& m, const char* op, const char* which) {
    if (m.rows == 0 || m.cols == 0)
        throw ValidationError(std::string(op) + ": empty " + which + " matrix");
    if (!rows_unit_norm(m, kLossUnitTol))
        throw ValidationError(std::string(op) + ": " + which + " rows must be unit-norm");
}

inline void require_tau(const Temperature& t, const char* op) {
    if (!(t.tau > 0.0))
        throw ValidationError(std::string(op) + ": tau must be positive");
}

// Shared kernel for the U->V losses. Given target coefficients A whose
// rows sum to 1 and which are constants under differentiation, computes
//
//   value    = -(1/N) sum_i sum_j A_ij * log softmax_k(<p_i,q_k>/tau)[k=j]
//   dL/dS    = (1/N) (softmax(S) - A)          with S = P Q^T / tau
//   grad_p   = (dL/dS) Q / tau
//   grad_q   = (dL/dS)^T P / tau               (zero when detach_q)
//   d/dlogtau = -sum_ij dL/dS_ij * S_ij
//
// Standard contrastive loss is the A = I special case.
inline LossOutput weighted_softmax_ce(const Matrix& p, const Matrix& q, const Matrix& coeff,
                                      const Temperature& tau, bool detach_q) {
    const std::size_t n = p.rows;
    Matrix s = matmul_bt(p, q);
    scale_inplace(s, 1.0 / tau.tau);
    const Matrix logsm = log_softmax_rows(s);

    LossOutput out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.value -= coeff.at(i, j) * logsm.at(i, j);
    out.value /= static_cast<double>(n);

    Matrix dS(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            dS.at(i, j) = (std::exp(logsm.at(i, j)) - coeff.at(i, j)) / static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.log_tau_grad -= dS.at(i, j) * s.at(i, j);

    out.grad_p = scale(matmul(dS, q), 1.0 / tau.tau);
    out.grad_q = detach_q ? Matrix(q.rows, q.cols)
                          : scale(matmul_at(dS, p), 1.0 / tau.tau);
    return out;
}

} // namespace detail

/// Standard contrastive loss, U->V direction: row i's positive is column i.
inline LossOutput cl_loss(const Matrix& p, const Matrix& q, const Temperature& tau,
                          bool detach_q = false) {
    detail::require_embeddings(p, "cl_loss", "p");
    detail::require_embeddings(q, "cl_loss", "q");
    if (!p.same_shape(q))
        throw ValidationError("cl_loss: shape mismatch " + shape_str(p) + " vs " + shape_str(q));
    detail::require_tau(tau, "cl_loss");
    return detail::weighted_softmax_ce(p, q, Matrix::identity(p.rows), tau, detach_q);
}

/// Continuously weighted contrastive loss, U->V direction. Each anchor's
/// log-softmax terms are averaged under its (row-normalized) similarity
/// weights; the denominator softmax runs over the whole batch including
/// the anchor's own column. Weights are constants in the gradient.
inline LossOutput cwcl_loss(const Matrix& p, const Matrix& q, const SimilarityWeights& w,
                            const Temperature& tau, bool detach_q = false) {
    detail::require_embeddings(p, "cwcl_loss", "p");
    detail::require_embeddings(q, "cwcl_loss", "q");
    if (!p.same_shape(q))
        throw ValidationError("cwcl_loss: shape mismatch " + shape_str(p) + " vs " + shape_str(q));
    if (w.n != p.rows || w.w.rows != p.rows || w.w.cols != p.rows)
        throw ValidationError("cwcl_loss: weights are " + shape_str(w.w) + ", batch is " +
                              std::to_string(p.rows));
    detail::require_tau(tau, "cwcl_loss");

    Matrix coeff = w.w;
    for (std::size_t i = 0; i < coeff.rows; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < coeff.cols; ++j) row_sum += coeff.at(i, j);
        if (!(row_sum > 0.0))
            throw ValidationError("cwcl_loss: weight row " + std::to_string(i) +
                                  " sums to zero, per-anchor normalization undefined");
        for (std::size_t j = 0; j < coeff.cols; ++j) coeff.at(i, j) /= row_sum;
    }
    return detail::weighted_softmax_ce(p, q, coeff, tau, detach_q);
}

/// Supervised contrastive loss over a single modality. The positive set
/// of anchor i is {j != i : labels[j] == labels[i]} and the denominator
/// excludes k == i. Anchors with no positives contribute nothing and are
/// dropped from the average; it is an error for every anchor to be one.
inline LossOutput supcon_loss(const Matrix& z, const std::vector<int>& labels,
                              const Temperature& tau) {
    detail::require_embeddings(z, "supcon_loss", "z");
    if (labels.size() != z.rows)
        throw ValidationError("supcon_loss: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(z.rows) + " rows");
    detail::require_tau(tau, "supcon_loss");

    const std::size_t n = z.rows;
    std::vector<std::size_t> pos_count(n, 0);
    std::size_t valid_anchors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) ++pos_count[i];
        if (pos_count[i] > 0) ++valid_anchors;
    }
    if (valid_anchors == 0)
        throw ValidationError("supcon_loss: every anchor has an empty positive set");

    Matrix zz = matmul_bt(z, z);
    scale_inplace(zz, 1.0 / tau.tau);

    LossOutput out;
    Matrix g(n, n); // dL/dZ with zero diagonal
    const double inv_m = 1.0 / static_cast<double>(valid_anchors);

    for (std::size_t i = 0; i < n; ++i) {
        if (pos_count[i] == 0) continue;

        // log-sum-exp over k != i, max-subtracted
        double zmax = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) zmax = std::max(zmax, zz.at(i, k));
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) sum += std::exp(zz.at(i, k) - zmax);
        const double lse = zmax + std::log(sum);

        const double inv_pos = 1.0 / static_cast<double>(pos_count[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double softmax_ij = std::exp(zz.at(i, j) - lse);
            double coeff = softmax_ij;
            if (labels[j] == labels[i]) {
                out.value -= inv_pos * (zz.at(i, j) - lse);
                coeff -= inv_pos;
            }
            g.at(i, j) = inv_m * coeff;
        }
    }
    out.value *= inv_m;

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.log_tau_grad -= g.at(i, j) * zz.at(i, j);

    // z appears as both anchor and candidate: dL/dz = (G + G^T) z / tau
    Matrix grad = matmul(g, z);
    add_inplace(grad, matmul_at(g, z));
    out.grad_p = scale(std::move(grad), 1.0 / tau.tau);
    out.grad_q = Matrix();
    return out;
}

/// Combined cross-modal objective: weighted loss toward the frozen
/// modality plus the plain contrastive loss in the reverse direction.
/// w_v must come from the frozen tower's pre-projection embeddings.
inline LossOutput cross_modal_transfer_loss(const Matrix& p, const Matrix& q,
                                            const SimilarityWeights& w_v,
                                            const Temperature& tau) {
    LossOutput fwd = cwcl_loss(p, q, w_v, tau, false);
    LossOutput rev = cl_loss(q, p, tau, false); // roles swapped: anchors are q rows

    LossOutput out;
    out.value = fwd.value + rev.value;
    out.grad_p = add(std::move(fwd.grad_p), rev.grad_q);
    out.grad_q = add(std::move(fwd.grad_q), rev.grad_p);
    out.log_tau_grad = fwd.log_tau_grad + rev.log_tau_grad;
    return out;
}

// ---------- gradient checking ----------

/// A loss closure plus the point at which to check it. `eval` must be a
/// pure function of (p, q, tau); q may be empty for single-input losses.
struct GradCheckProblem {
    std::function<LossOutput(const Matrix&, const Matrix&, const Temperature&)> eval;
    Matrix p;
    Matrix q;
    Temperature tau;
    bool check_q = true;
    bool check_tau = false;
};

namespace detail {

// Guarded relative error. The guard absorbs central-difference roundoff
// (~1e-10 here) on entries whose true magnitude is below 1e-4; any real
// defect in the analytic gradient lands far above the 1e-5 tolerance.
inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / denom;
}

} // namespace detail

/// Central-difference check of every analytic gradient entry. Returns the
/// maximum guarded relative error over all checked entries.
inline double grad_check(const GradCheckProblem& prob, double epsilon) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-4))
        throw ValidationError("grad_check: epsilon must be in [1e-7, 1e-4]");

    const LossOutput base = prob.eval(prob.p, prob.q, prob.tau);
    double max_err = 0.0;

    auto probe_matrix = [&](const Matrix& analytic, bool is_p) {
        Matrix pert_p = prob.p;
        Matrix pert_q = prob.q;
        Matrix& target = is_p ? pert_p : pert_q;
        for (std::size_t k = 0; k < target.data.size(); ++k) {
            const double saved = target.data[k];
            target.data[k] = saved + epsilon;
            const double up = prob.eval(pert_p, pert_q, prob.tau).value;
            target.data[k] = saved - epsilon;
            const double down = prob.eval(pert_p, pert_q, prob.tau).value;
            target.data[k] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            max_err = std::max(max_err, detail::rel_err(analytic.data[k], numeric));
        }
    };

    probe_matrix(base.grad_p, true);
    if (prob.check_q && !prob.q.empty()) probe_matrix(base.grad_q, false);

    if (prob.check_tau) {
        const double lt = prob.tau.log_tau();
        Temperature up_t = prob.tau;
        up_t.tau = std::exp(lt + epsilon);
        Temperature down_t = prob.tau;
        down_t.tau = std::exp(lt - epsilon);
        const double up = prob.eval(prob.p, prob.q, up_t).value;
        const double down = prob.eval(prob.p, prob.q, down_t).value;
        const double numeric = (up - down) / (2.0 * epsilon);
        max_err = std::max(max_err, detail::rel_err(base.log_tau_grad, numeric));
    }
    return max_err;
}

} // namespace cwcl
