#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cwcl/errors.hpp"
#include "cwcl/losses.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/rng.hpp"

namespace cwcl {

enum class Activation { tanh, relu };

inline const char* to_string(Activation a) {
    return a == Activation::tanh ? "tanh" : "relu";
}

enum class LockMode { none, lock_u, lock_v, lock_both };

inline const char* to_string(LockMode m) {
    switch (m) {
        case LockMode::none: return "none";
        case LockMode::lock_u: return "lock_u";
        case LockMode::lock_v: return "lock_v";
        case LockMode::lock_both: return "lock_both";
    }
    return "?";
}

struct Linear {
    Matrix weight; // in x out
    Matrix bias;   // 1 x out
};

/// Plain MLP: activation between layers, none after the last, optional
/// row-wise unit normalization of the output (the losses consume
/// unit-norm rows).
struct Mlp {
    std::vector<Linear> layers;
    Activation activation = Activation::tanh;
    bool normalize_output = true;

    std::size_t input_dim() const { return layers.front().weight.rows; }
    std::size_t output_dim() const { return layers.back().weight.cols; }
};

/// Xavier-uniform weight, zero bias.
inline Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
    Linear l{Matrix(in, out), Matrix(1, out)};
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : l.weight.data) v = rng.uniform(-bound, bound);
    return l;
}

/// dims = {in, hidden..., out}; needs at least {in, out}.
inline Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, bool normalize,
                    Rng& rng) {
    if (dims.size() < 2) throw ValidationError("make_mlp: need at least input and output dims");
    Mlp m;
    m.activation = act;
    m.normalize_output = normalize;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        m.layers.push_back(init_linear(dims[i], dims[i + 1], rng));
    return m;
}

// ---------- forward ----------

/// Cached intermediate values from one forward pass, consumed by backward.
struct MlpForward {
    Matrix input;
    std::vector<Matrix> pre_act;  // per layer, before activation
    std::vector<Matrix> post_act; // per layer, after activation (last layer: == pre_act)
    Matrix output;                // post normalization when enabled
};

namespace detail {

inline void apply_activation(Matrix& m, Activation act) {
    if (act == Activation::tanh) {
        for (double& v : m.data) v = std::tanh(v);
    } else {
        for (double& v : m.data) v = v > 0.0 ? v : 0.0;
    }
}

// Backward through row-wise y -> y/|y|. grad_out is w.r.t. the normalized
// rows; unnormalized holds the pre-normalization rows.
inline Matrix normalize_rows_backward(const Matrix& unnormalized, const Matrix& normalized,
                                      const Matrix& grad_out) {
    Matrix grad_in(grad_out.rows, grad_out.cols);
    for (std::size_t i = 0; i < grad_out.rows; ++i) {
        const double norm = row_norm(unnormalized, i);
        const double g_dot_p = dot(grad_out.row(i), normalized.row(i), grad_out.cols);
        for (std::size_t j = 0; j < grad_out.cols; ++j)
            grad_in.at(i, j) =
                (grad_out.at(i, j) - g_dot_p * normalized.at(i, j)) / norm;
    }
    return grad_in;
}

} // namespace detail

inline MlpForward mlp_forward(const Mlp& mlp, const Matrix& x) {
    if (x.cols != mlp.input_dim())
        throw ValidationError("mlp_forward: input has " + std::to_string(x.cols) +
                              " columns, first layer expects " + std::to_string(mlp.input_dim()));
    MlpForward fwd;
    fwd.input = x;
    const Matrix* h = &fwd.input;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        Matrix a = matmul(*h, mlp.layers[l].weight);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) a.at(i, j) += mlp.layers[l].bias.at(0, j);
        fwd.pre_act.push_back(a);
        if (l + 1 < mlp.layers.size()) detail::apply_activation(a, mlp.activation);
        fwd.post_act.push_back(std::move(a));
        h = &fwd.post_act.back();
    }
    fwd.output = mlp.normalize_output ? l2_normalize_rows(*h) : *h;
    return fwd;
}

/// Forward pass only; the trainable encoder for modality U.
inline Matrix encode_u(const Mlp& params, const Matrix& x) {
    return mlp_forward(params, x).output;
}

// ---------- backward ----------

struct MlpGrads {
    std::vector<Linear> layers; // same shapes as the parameters
    Matrix input;               // dL/dx, for stacking modules
};

inline MlpGrads mlp_backward(const Mlp& mlp, const MlpForward& fwd, const Matrix& grad_output) {
    if (!grad_output.same_shape(fwd.output))
        throw ValidationError("mlp_backward: grad shape " + shape_str(grad_output) +
                              " does not match output " + shape_str(fwd.output));
    MlpGrads grads;
    grads.layers.resize(mlp.layers.size());

    Matrix g = mlp.normalize_output
                   ? detail::normalize_rows_backward(fwd.post_act.back(), fwd.output, grad_output)
                   : grad_output;

    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        // g is dL/d(pre_act[l]) once the activation is peeled off
        if (l + 1 < mlp.layers.size()) {
            if (mlp.activation == Activation::tanh) {
                const Matrix& h = fwd.post_act[l]; // tanh' = 1 - tanh^2
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    g.data[k] *= 1.0 - h.data[k] * h.data[k];
            } else {
                const Matrix& a = fwd.pre_act[l];
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    if (a.data[k] <= 0.0) g.data[k] = 0.0;
            }
        }
        const Matrix& layer_in = l == 0 ? fwd.input : fwd.post_act[l - 1];
        grads.layers[l].weight = matmul_at(layer_in, g);
        grads.layers[l].bias = Matrix(1, g.cols);
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = 0; j < g.cols; ++j) grads.layers[l].bias.at(0, j) += g.at(i, j);
        if (l > 0) g = matmul_bt(g, mlp.layers[l].weight); // dL/d(post_act[l-1])
    }
    grads.input = matmul_bt(g, mlp.layers[0].weight);
    return grads;
}

/// Gradients of the U-encoder parameters given dL/d(output rows).
inline MlpGrads backward_u(const Mlp& params, const Matrix& x, const Matrix& grad_p) {
    return mlp_backward(params, mlp_forward(params, x), grad_p);
}

// ---------- modality V: teacher body + trainable projection ----------

/// The modality-V tower: a body MLP standing in for a pre-trained encoder
/// (frozen under the default lock), and a final linear projection that
/// stays trainable. The body's unit-normalized output ("pre") feeds the
/// similarity weights; the normalized projection output ("post") is the
/// q that enters the losses.
struct TeacherEncoder {
    Mlp body; // normalize_output must be true: pre is consumed as unit rows
    Linear projection;

    std::size_t pre_dim() const { return body.output_dim(); }
    std::size_t post_dim() const { return projection.weight.cols; }
};

struct TeacherForward {
    MlpForward body_fwd;
    Matrix pre;      // unit-norm body output
    Matrix post_raw; // projection output before normalization
    Matrix post;     // unit-norm projection output
};

inline TeacherForward teacher_forward(const TeacherEncoder& teacher, const Matrix& x) {
    TeacherForward fwd;
    fwd.body_fwd = mlp_forward(teacher.body, x);
    fwd.pre = fwd.body_fwd.output;
    fwd.post_raw = matmul(fwd.pre, teacher.projection.weight);
    for (std::size_t i = 0; i < fwd.post_raw.rows; ++i)
        for (std::size_t j = 0; j < fwd.post_raw.cols; ++j)
            fwd.post_raw.at(i, j) += teacher.projection.bias.at(0, j);
    fwd.post = l2_normalize_rows(fwd.post_raw);
    return fwd;
}

/// (pre, post) embeddings for a batch of V-modality features.
inline std::pair<Matrix, Matrix> encode_v(const TeacherEncoder& teacher, const Matrix& x) {
    TeacherForward fwd = teacher_forward(teacher, x);
    return {std::move(fwd.pre), std::move(fwd.post)};
}

struct TeacherGrads {
    MlpGrads body;
    Linear projection;
};

/// Backward through post-normalization, projection, and the body. The
/// similarity weights never backpropagate, so only grad_post enters.
inline TeacherGrads teacher_backward(const TeacherEncoder& teacher, const TeacherForward& fwd,
                                     const Matrix& grad_post) {
    TeacherGrads grads;
    Matrix g = detail::normalize_rows_backward(fwd.post_raw, fwd.post, grad_post);
    grads.projection.weight = matmul_at(fwd.pre, g);
    grads.projection.bias = Matrix(1, g.cols);
    for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) grads.projection.bias.at(0, j) += g.at(i, j);
    const Matrix grad_pre = matmul_bt(g, teacher.projection.weight);
    grads.body = mlp_backward(teacher.body, fwd.body_fwd, grad_pre);
    return grads;
}

// ---------- model aggregate and lock configurations ----------

struct Model {
    Mlp u_encoder;
    TeacherEncoder v_tower;
    Temperature temperature;
    LockMode lock = LockMode::lock_v;
};

struct ModelGrads {
    MlpGrads u;
    TeacherGrads v;
    double log_tau = 0.0;
};

namespace detail {

inline void zero_grads(MlpGrads& g) {
    for (Linear& l : g.layers) {
        std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
        std::fill(l.bias.data.begin(), l.bias.data.end(), 0.0);
    }
}

} // namespace detail

/// Zero out the gradient groups frozen by the lock configuration.
/// lock_v keeps the V projection trainable; lock_both keeps only tau.
/// Idempotent.
inline ModelGrads apply_lock(LockMode mode, ModelGrads grads) {
    const bool freeze_u = mode == LockMode::lock_u || mode == LockMode::lock_both;
    const bool freeze_v_body = mode == LockMode::lock_v || mode == LockMode::lock_both;
    const bool freeze_v_proj = mode == LockMode::lock_both;
    if (freeze_u) detail::zero_grads(grads.u);
    if (freeze_v_body) detail::zero_grads(grads.v.body);
    if (freeze_v_proj) {
        std::fill(grads.v.projection.weight.data.begin(), grads.v.projection.weight.data.end(), 0.0);
        std::fill(grads.v.projection.bias.data.begin(), grads.v.projection.bias.data.end(), 0.0);
    }
    return grads;
}

} // namespace cwcl
