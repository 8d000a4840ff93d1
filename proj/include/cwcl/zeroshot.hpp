#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/matrix.hpp"

namespace cwcl {

/// Zero-shot evaluation inputs: per-class template descriptors (frozen-
/// modality features standing in for template sentences) and labeled
/// U-modality eval items.
struct ZeroShotTask {
    std::size_t num_classes = 0;
    Matrix templates; // (num_classes * templates_per_class) x v_dim, grouped by class
    std::size_t templates_per_class = 0;
    Matrix eval_u;
    std::vector<int> eval_labels;

    Matrix class_templates(std::size_t cls, std::size_t k) const {
        Matrix out(k, templates.cols);
        for (std::size_t t = 0; t < k; ++t)
            for (std::size_t j = 0; j < templates.cols; ++j)
                out.at(t, j) = templates.at(cls * templates_per_class + t, j);
        return out;
    }
};

/// Task over a dataset's eval split.
inline ZeroShotTask make_task(const PairedDataset& data) {
    ZeroShotTask task;
    task.num_classes = data.num_classes;
    task.templates = data.templates;
    task.templates_per_class = data.templates_per_class;
    const std::vector<std::size_t> idx = data.eval_indices();
    task.eval_u = Matrix(idx.size(), data.u_features.cols);
    task.eval_labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < data.u_features.cols; ++j)
            task.eval_u.at(i, j) = data.u_features.at(idx[i], j);
        task.eval_labels[i] = data.superclass[idx[i]];
    }
    return task;
}

enum class ClassEmbedMode {
    normalized_mean, // normalize each template embedding, average, re-normalize
    raw_mean         // average unnormalized projection outputs, then normalize
};

inline const char* to_string(ClassEmbedMode m) {
    return m == ClassEmbedMode::normalized_mean ? "normalized_mean" : "raw_mean";
}

/// Class embedding from one class's template descriptors: encode through
/// the frozen tower plus projection, average, re-normalize. Errors when
/// the mean collapses to (numerically) zero, e.g. antipodal templates.
inline Matrix class_embedding(const Matrix& templates, const TeacherEncoder& encoder_v,
                              ClassEmbedMode mode = ClassEmbedMode::normalized_mean) {
    if (templates.rows == 0) throw ValidationError("class_embedding: empty template set");
    const TeacherForward fwd = teacher_forward(encoder_v, templates);
    const Matrix& embs = mode == ClassEmbedMode::normalized_mean ? fwd.post : fwd.post_raw;

    Matrix mean(1, embs.cols);
    for (std::size_t i = 0; i < embs.rows; ++i)
        for (std::size_t j = 0; j < embs.cols; ++j) mean.at(0, j) += embs.at(i, j);
    scale_inplace(mean, 1.0 / static_cast<double>(embs.rows));

    if (row_norm(mean, 0) < 1e-9)
        throw ValidationError("class_embedding: template mean is numerically zero "
                              "and cannot be normalized");
    return l2_normalize_rows(mean);
}

/// One row per class; first k templates of each class.
inline Matrix class_embeddings(const ZeroShotTask& task, const TeacherEncoder& encoder_v,
                               std::size_t k, ClassEmbedMode mode = ClassEmbedMode::normalized_mean) {
    if (k == 0 || k > task.templates_per_class)
        throw ValidationError("class_embeddings: k must be in [1, templates_per_class]");
    Matrix out(task.num_classes, 0);
    for (std::size_t c = 0; c < task.num_classes; ++c) {
        const Matrix emb = class_embedding(task.class_templates(c, k), encoder_v, mode);
        if (c == 0) out = Matrix(task.num_classes, emb.cols);
        for (std::size_t j = 0; j < emb.cols; ++j) out.at(c, j) = emb.at(0, j);
    }
    return out;
}

struct ClassifyResult {
    std::vector<int> predictions;
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Cosine-similarity classification of encoded eval items against class
/// embeddings. Argmax ties break toward the lowest class index. top5
/// uses min(5, num_classes) ranks with the same tie rule.
inline ClassifyResult classify(const Matrix& eval_u_features, const std::vector<int>& labels,
                               const Matrix& class_embs, const Mlp& encoder_u) {
    if (class_embs.rows == 0) throw ValidationError("classify: no class embeddings");
    if (labels.size() != eval_u_features.rows)
        throw ValidationError("classify: label count does not match item count");

    const Matrix p = encode_u(encoder_u, eval_u_features);
    const Matrix sims = matmul_bt(p, class_embs); // items x classes
    const std::size_t n_classes = class_embs.rows;
    const std::size_t top_k = std::min<std::size_t>(5, n_classes);

    ClassifyResult res;
    res.predictions.resize(sims.rows);
    std::size_t hit1 = 0, hit5 = 0;
    std::vector<std::size_t> rank(n_classes);
    for (std::size_t i = 0; i < sims.rows; ++i) {
        std::iota(rank.begin(), rank.end(), std::size_t{0});
        std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
            return sims.at(i, a) > sims.at(i, b); // stable keeps lowest index first on ties
        });
        res.predictions[i] = static_cast<int>(rank[0]);
        if (static_cast<int>(rank[0]) == labels[i]) ++hit1;
        for (std::size_t r = 0; r < top_k; ++r)
            if (static_cast<int>(rank[r]) == labels[i]) {
                ++hit5;
                break;
            }
    }
    if (sims.rows > 0) {
        res.top1 = static_cast<double>(hit1) / static_cast<double>(sims.rows);
        res.top5 = static_cast<double>(hit5) / static_cast<double>(sims.rows);
    }
    return res;
}

/// R@k over already-encoded unit-norm embeddings. ground_truth[i] is the
/// gallery row matching query i. Rank ties break toward the lower
/// gallery index, so R@k is deterministic.
inline std::map<std::size_t, double> recall_at_k(const Matrix& query_embs,
                                                 const Matrix& gallery_embs,
                                                 const std::vector<std::size_t>& ground_truth,
                                                 const std::vector<std::size_t>& k_list) {
    if (query_embs.cols != gallery_embs.cols)
        throw ValidationError("recall_at_k: embedding dims differ");
    if (ground_truth.size() != query_embs.rows)
        throw ValidationError("recall_at_k: ground truth size mismatch");
    for (std::size_t k : k_list)
        if (k == 0 || k > gallery_embs.rows)
            throw ValidationError("recall_at_k: k=" + std::to_string(k) +
                                  " outside [1, gallery size]");

    const Matrix sims = matmul_bt(query_embs, gallery_embs);
    std::map<std::size_t, double> out;
    for (std::size_t k : k_list) out[k] = 0.0;

    for (std::size_t i = 0; i < sims.rows; ++i) {
        const std::size_t target = ground_truth[i];
        // rank of target = number of gallery items strictly better, where
        // "better" is higher similarity or equal similarity at lower index
        std::size_t rank = 0;
        for (std::size_t j = 0; j < sims.cols; ++j) {
            if (j == target) continue;
            if (sims.at(i, j) > sims.at(i, target) ||
                (sims.at(i, j) == sims.at(i, target) && j < target))
                ++rank;
        }
        for (std::size_t k : k_list)
            if (rank < k) out[k] += 1.0;
    }
    if (sims.rows > 0)
        for (auto& [k, v] : out) v /= static_cast<double>(sims.rows);
    return out;
}

// ---------- alignment matrices ----------

/// Full cross-modal cosine matrix with rows and columns sorted by class.
/// block_contrast = mean within-class similarity - mean cross-class
/// similarity; higher means a stronger block-diagonal pattern.
struct AlignmentMatrix {
    std::vector<std::size_t> row_ids; // class-sorted indices into the U items
    std::vector<std::size_t> col_ids; // class-sorted indices into the V items
    std::vector<int> row_labels;
    std::vector<int> col_labels;
    Matrix sims;
    double block_contrast = 0.0;
};

inline AlignmentMatrix alignment_matrix(const Matrix& u_items, const std::vector<int>& u_labels,
                                        const Matrix& v_items, const std::vector<int>& v_labels,
                                        const Mlp& encoder_u, const TeacherEncoder& encoder_v) {
    if (u_labels.size() != u_items.rows || v_labels.size() != v_items.rows)
        throw ValidationError("alignment_matrix: label/item count mismatch");

    AlignmentMatrix out;
    auto sorted_ids = [](const std::vector<int>& labels) {
        std::vector<std::size_t> ids(labels.size());
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::stable_sort(ids.begin(), ids.end(),
                         [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
        return ids;
    };
    out.row_ids = sorted_ids(u_labels);
    out.col_ids = sorted_ids(v_labels);
    for (std::size_t id : out.row_ids) out.row_labels.push_back(u_labels[id]);
    for (std::size_t id : out.col_ids) out.col_labels.push_back(v_labels[id]);

    const Matrix p = encode_u(encoder_u, u_items);
    const Matrix q = encode_v(encoder_v, v_items).second;

    out.sims = Matrix(p.rows, q.rows);
    double within_sum = 0.0, cross_sum = 0.0;
    std::size_t within_n = 0, cross_n = 0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        for (std::size_t j = 0; j < q.rows; ++j) {
            const double s = dot(p.row(out.row_ids[i]), q.row(out.col_ids[j]), p.cols);
            out.sims.at(i, j) = s;
            if (out.row_labels[i] == out.col_labels[j]) {
                within_sum += s;
                ++within_n;
            } else {
                cross_sum += s;
                ++cross_n;
            }
        }
    }
    const double within = within_n > 0 ? within_sum / static_cast<double>(within_n) : 0.0;
    const double cross = cross_n > 0 ? cross_sum / static_cast<double>(cross_n) : 0.0;
    out.block_contrast = within - cross;
    return out;
}

/// CSV export: header row of column labels, then one row per U item:
/// its label, then similarities to 6 decimal places.
inline void write_alignment_csv(const std::filesystem::path& path, const AlignmentMatrix& am) {
    std::ofstream out(path);
    if (!out) throw IoError("write_alignment_csv: cannot open " + path.string());
    out << "u_label";
    for (int l : am.col_labels) out << ",v_" << l;
    out << "\n";
    out << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < am.sims.rows; ++i) {
        out << am.row_labels[i];
        for (std::size_t j = 0; j < am.sims.cols; ++j) out << "," << am.sims.at(i, j);
        out << "\n";
    }
    if (!out) throw IoError("write_alignment_csv: write failed for " + path.string());
}

// ---------- template-robustness sweep ----------

struct SweepRow {
    std::size_t k = 0;
    double top1 = 0.0;
    double relative_drop = 0.0; // (acc_full - acc_k) / acc_full
};

/// Accuracy as a function of the number of templates used per class,
/// with drops reported relative to the all-templates accuracy.
inline std::vector<SweepRow> template_sweep(const ZeroShotTask& task,
                                            const std::vector<std::size_t>& k_values,
                                            const Mlp& encoder_u, const TeacherEncoder& encoder_v,
                                            ClassEmbedMode mode = ClassEmbedMode::normalized_mean) {
    for (std::size_t k : k_values)
        if (k == 0 || k > task.templates_per_class)
            throw ValidationError("template_sweep: k=" + std::to_string(k) +
                                  " exceeds available templates");

    const Matrix full_embs = class_embeddings(task, encoder_v, task.templates_per_class, mode);
    const double full_acc = classify(task.eval_u, task.eval_labels, full_embs, encoder_u).top1;

    std::vector<SweepRow> rows;
    for (std::size_t k : k_values) {
        const Matrix embs = class_embeddings(task, encoder_v, k, mode);
        SweepRow row;
        row.k = k;
        row.top1 = classify(task.eval_u, task.eval_labels, embs, encoder_u).top1;
        row.relative_drop = full_acc > 0.0 ? (full_acc - row.top1) / full_acc : 0.0;
        rows.push_back(row);
    }
    return rows;
}

} // namespace cwcl
