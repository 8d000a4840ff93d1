#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/losses.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/rng.hpp"
#include "cwcl/weights.hpp"

namespace cwcl {

enum class LossKind { cl, cwcl };

inline const char* to_string(LossKind k) { return k == LossKind::cl ? "cl" : "cwcl"; }

// ---------- parameter registry ----------

/// Flat view over one parameter tensor and its gradient. The optimizer
/// and the clipper work on these; `trainable` reflects the lock config
/// and excludes a group from updates *and* weight decay.
struct ParamView {
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t size = 0;
    bool decay = false; // weight matrices only; biases and tau are not decayed
    bool trainable = true;
};

namespace detail {

inline void push_linear_views(Linear& p, Linear& g, bool trainable,
                              std::vector<ParamView>& out) {
    out.push_back({p.weight.data.data(), g.weight.data.data(), p.weight.data.size(), true, trainable});
    out.push_back({p.bias.data.data(), g.bias.data.data(), p.bias.data.size(), false, trainable});
}

} // namespace detail

/// Zero-valued gradient holder with the same shapes as the model.
inline ModelGrads make_zero_grads(const Model& model) {
    ModelGrads g;
    g.u.layers.resize(model.u_encoder.layers.size());
    for (std::size_t l = 0; l < model.u_encoder.layers.size(); ++l) {
        g.u.layers[l].weight = Matrix(model.u_encoder.layers[l].weight.rows,
                                      model.u_encoder.layers[l].weight.cols);
        g.u.layers[l].bias = Matrix(1, model.u_encoder.layers[l].bias.cols);
    }
    g.v.body.layers.resize(model.v_tower.body.layers.size());
    for (std::size_t l = 0; l < model.v_tower.body.layers.size(); ++l) {
        g.v.body.layers[l].weight = Matrix(model.v_tower.body.layers[l].weight.rows,
                                           model.v_tower.body.layers[l].weight.cols);
        g.v.body.layers[l].bias = Matrix(1, model.v_tower.body.layers[l].bias.cols);
    }
    g.v.projection.weight =
        Matrix(model.v_tower.projection.weight.rows, model.v_tower.projection.weight.cols);
    g.v.projection.bias = Matrix(1, model.v_tower.projection.bias.cols);
    return g;
}

/// Stable flattening of (model, grads) into parameter views. Order is
/// fixed: U layers, V body layers, V projection, log tau.
inline std::vector<ParamView> collect_params(Model& model, ModelGrads& grads,
                                             double* log_tau_value) {
    const LockMode mode = model.lock;
    const bool u_trainable = mode == LockMode::none || mode == LockMode::lock_v;
    const bool v_body_trainable = mode == LockMode::none || mode == LockMode::lock_u;
    const bool v_proj_trainable = mode != LockMode::lock_both;

    std::vector<ParamView> views;
    for (std::size_t l = 0; l < model.u_encoder.layers.size(); ++l)
        detail::push_linear_views(model.u_encoder.layers[l], grads.u.layers[l], u_trainable, views);
    for (std::size_t l = 0; l < model.v_tower.body.layers.size(); ++l)
        detail::push_linear_views(model.v_tower.body.layers[l], grads.v.body.layers[l],
                                  v_body_trainable, views);
    detail::push_linear_views(model.v_tower.projection, grads.v.projection, v_proj_trainable, views);
    if (model.temperature.learnable && log_tau_value != nullptr)
        views.push_back({log_tau_value, &grads.log_tau, 1, false, true});
    return views;
}

// ---------- AdamW ----------

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// Per-tensor first/second moments. Slots are allocated lazily on the
/// first step so the state can be built before the views.
struct AdamWState {
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
    };
    std::vector<Slot> slots;
    std::int64_t step = 0;
};

/// One decoupled-weight-decay Adam update over the views. Non-trainable
/// views are skipped entirely: no moment update, no decay, no movement.
inline void adamw_step(AdamWState& state, const AdamWConfig& cfg, double lr,
                       std::vector<ParamView>& views) {
    if (state.slots.empty()) {
        state.slots.resize(views.size());
        for (std::size_t i = 0; i < views.size(); ++i) {
            state.slots[i].m.assign(views[i].size, 0.0);
            state.slots[i].v.assign(views[i].size, 0.0);
        }
    }
    if (state.slots.size() != views.size())
        throw ValidationError("adamw_step: view count changed between steps");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < views.size(); ++i) {
        ParamView& p = views[i];
        if (!p.trainable) continue;
        if (state.slots[i].m.size() != p.size)
            throw ValidationError("adamw_step: parameter shape changed between steps");
        double* m = state.slots[i].m.data();
        double* v = state.slots[i].v.data();
        const double wd = p.decay ? cfg.weight_decay : 0.0;
        for (std::size_t k = 0; k < p.size; ++k) {
            const double g = p.grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p.value[k] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + wd * p.value[k]);
        }
    }
}

// ---------- learning-rate schedule ----------

struct LrSchedule {
    double base_lr = 1e-3;
    std::size_t warmup_steps = 100;
    std::size_t total_steps = 0;
};

/// Linear warmup from 0 to base over warmup_steps, then cosine decay to 0
/// at total_steps.
inline double lr_at(const LrSchedule& s, std::size_t step) {
    if (s.warmup_steps > 0 && step < s.warmup_steps)
        return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    if (s.total_steps <= s.warmup_steps) return s.base_lr;
    const double progress = static_cast<double>(step - s.warmup_steps) /
                            static_cast<double>(s.total_steps - s.warmup_steps);
    return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

// ---------- gradient clipping ----------

/// Scale all gradients so the global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<ParamView>& views, double max_norm) {
    if (!(max_norm > 0.0)) throw ValidationError("clip_global_norm: max_norm must be > 0");
    double sq = 0.0;
    for (const ParamView& p : views)
        for (std::size_t k = 0; k < p.size; ++k) sq += p.grad[k] * p.grad[k];
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (ParamView& p : views)
            for (std::size_t k = 0; k < p.size; ++k) p.grad[k] *= s;
    }
    return norm;
}

// ---------- training ----------

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t warmup_steps = 100;
    double grad_clip_norm = 10.0;
    LossKind loss = LossKind::cwcl;
    WeightKind weight_kind = WeightKind::linear;
    LockMode lock_mode = LockMode::lock_v;
    double tau = 0.07;
    bool tau_learnable = false;
    AdamWConfig adamw;
    std::uint64_t seed = 0;
    bool eval_zero_shot = false; // record zero-shot accuracy each epoch

    // architecture
    std::vector<std::size_t> u_hidden = {64};
    std::vector<std::size_t> teacher_hidden = {64};
    std::size_t teacher_out_dim = 32; // pre-projection width
    std::size_t embed_dim = 16;
    Activation activation = Activation::tanh;

    void validate() const {
        if (batch_size < 2)
            throw ValidationError("TrainConfig: batch_size >= 2 (contrastive training "
                                  "needs in-batch negatives)");
        if (!(learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate > 0");
        if (!(grad_clip_norm > 0.0)) throw ValidationError("TrainConfig: grad_clip_norm > 0");
        if (!(tau > 0.0)) throw ValidationError("TrainConfig: tau > 0");
        if (embed_dim < 1 || teacher_out_dim < 1)
            throw ValidationError("TrainConfig: embedding dims >= 1");
        if (weight_kind == WeightKind::class_indicator)
            throw ValidationError("TrainConfig: class_indicator weights need labels, "
                                  "which training does not see");
    }
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    std::optional<double> zero_shot_accuracy;
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> metrics;
};

/// Fresh model for (config, dataset). Trainable parts (U encoder and the
/// V projection) are drawn from the run seed; the teacher body depends
/// only on the dataset seed, so every run on a dataset shares a teacher.
inline Model make_model(const TrainConfig& cfg, const PairedDataset& data) {
    Model model;
    Rng trainable_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0xA5A5A5A5ULL);
    Rng teacher_rng(data.seed * 0x9E3779B97F4A7C15ULL + 0x5A5A5A5AULL);

    std::vector<std::size_t> u_dims{data.u_features.cols};
    u_dims.insert(u_dims.end(), cfg.u_hidden.begin(), cfg.u_hidden.end());
    u_dims.push_back(cfg.embed_dim);
    model.u_encoder = make_mlp(u_dims, cfg.activation, true, trainable_rng);

    std::vector<std::size_t> v_dims{data.v_features.cols};
    v_dims.insert(v_dims.end(), cfg.teacher_hidden.begin(), cfg.teacher_hidden.end());
    v_dims.push_back(cfg.teacher_out_dim);
    model.v_tower.body = make_mlp(v_dims, cfg.activation, true, teacher_rng);
    model.v_tower.projection = init_linear(cfg.teacher_out_dim, cfg.embed_dim, trainable_rng);

    model.temperature.tau = cfg.tau;
    model.temperature.learnable = cfg.tau_learnable;
    model.lock = cfg.lock_mode;
    return model;
}

namespace detail {

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& order,
                          std::size_t first, std::size_t count) {
    Matrix out(count, src.cols);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < src.cols; ++j) out.at(i, j) = src.at(order[first + i], j);
    return out;
}

inline SimilarityWeights batch_weights(const TrainConfig& cfg, const Matrix& v_pre) {
    if (cfg.loss == LossKind::cl) return indicator_weights(v_pre.rows);
    switch (cfg.weight_kind) {
        case WeightKind::linear: return linear_weights(v_pre);
        case WeightKind::softmax: return softmax_weights(v_pre);
        case WeightKind::indicator: return indicator_weights(v_pre.rows);
        case WeightKind::class_indicator: break;
    }
    throw ValidationError("batch_weights: unsupported weight kind for training");
}

} // namespace detail

/// Deterministic training loop: fixed (seed, config, dataset) gives
/// bit-identical parameters. Batch order reshuffles every epoch from the
/// run seed; a final partial batch is dropped. eval_fn, when given, runs
/// after each epoch on the current model.
inline TrainResult train(const TrainConfig& cfg, const PairedDataset& data, Model model,
                         const std::function<double(const Model&)>& eval_fn = nullptr) {
    cfg.validate();
    std::vector<std::size_t> order = data.train_indices();
    if (order.size() < cfg.batch_size && cfg.epochs > 0)
        throw ValidationError("train: training split smaller than one batch");

    const std::size_t steps_per_epoch = order.size() / cfg.batch_size;
    const LrSchedule schedule{cfg.learning_rate, cfg.warmup_steps, cfg.epochs * steps_per_epoch};

    Rng shuffle_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 0xC3C3C3C3ULL);
    AdamWState opt_state;
    double log_tau = model.temperature.log_tau();

    TrainResult result;
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        double last_lr = 0.0;

        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const Matrix xu = detail::gather_rows(data.u_features, order, b * cfg.batch_size,
                                                  cfg.batch_size);
            const Matrix xv = detail::gather_rows(data.v_features, order, b * cfg.batch_size,
                                                  cfg.batch_size);

            const MlpForward u_fwd = mlp_forward(model.u_encoder, xu);
            const TeacherForward v_fwd = teacher_forward(model.v_tower, xv);
            const SimilarityWeights w = detail::batch_weights(cfg, v_fwd.pre);

            const LossOutput loss =
                cross_modal_transfer_loss(u_fwd.output, v_fwd.post, w, model.temperature);
            if (!std::isfinite(loss.value))
                throw NumericalError("train: non-finite loss at step " +
                                     std::to_string(global_step) + ", batch " + std::to_string(b) +
                                     ", epoch " + std::to_string(epoch));
            loss_sum += loss.value;

            ModelGrads grads;
            grads.u = mlp_backward(model.u_encoder, u_fwd, loss.grad_p);
            grads.v = teacher_backward(model.v_tower, v_fwd, loss.grad_q);
            grads.log_tau = model.temperature.learnable ? loss.log_tau_grad : 0.0;
            grads = apply_lock(model.lock, std::move(grads));

            std::vector<ParamView> views = collect_params(model, grads, &log_tau);
            clip_global_norm(views, cfg.grad_clip_norm);
            last_lr = lr_at(schedule, global_step);
            adamw_step(opt_state, cfg.adamw, last_lr, views);
            if (model.temperature.learnable) {
                model.temperature.set_log_tau(log_tau);
                log_tau = model.temperature.log_tau(); // keep in sync when the clamp engages
            }
            ++global_step;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.mean_loss = steps_per_epoch > 0 ? loss_sum / static_cast<double>(steps_per_epoch) : 0.0;
        em.lr = last_lr;
        if (cfg.eval_zero_shot && eval_fn) em.zero_shot_accuracy = eval_fn(model);
        result.metrics.push_back(em);
    }
    result.model = std::move(model);
    return result;
}

} // namespace cwcl
