#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cwcl/errors.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/rng.hpp"

namespace cwcl {

/// Parameters of the synthetic paired-data generator. Samples live on a
/// latent class geometry -- superclass centroids on the unit sphere,
/// graded subclass offsets within each superclass -- and are pushed
/// through two fixed nonlinear maps to produce the two modality views.
struct SyntheticSpec {
    std::size_t num_superclasses = 8;
    std::size_t subclasses_per_class = 4;
    std::size_t samples_per_cell = 12; // per (superclass, subclass) pair
    std::size_t latent_dim = 16;
    double noise_sigma = 0.1;   // latent and observation noise scale
    double v_noise_sigma = -1;  // V-side observation noise; < 0 means noise_sigma.
                                // Raising it weakens pair alignment without blurring
                                // the class geometry the weights rely on.
    double subclass_offset_scale = 0.5;
    std::size_t u_feature_dim = 24;
    std::size_t v_feature_dim = 24;
    std::uint64_t u_map_seed = 11;
    std::uint64_t v_map_seed = 12;
    double train_fraction = 0.8;
    double held_out_class_fraction = 0.25; // superclasses that appear in eval only
    std::size_t templates_per_class = 10;
    double template_jitter = 0.25;

    std::size_t held_out_count() const {
        return static_cast<std::size_t>(
            std::llround(held_out_class_fraction * static_cast<double>(num_superclasses)));
    }

    double v_noise() const { return v_noise_sigma < 0.0 ? noise_sigma : v_noise_sigma; }

    void validate() const {
        if (num_superclasses < 2)
            throw ValidationError("SyntheticSpec: need at least 2 superclasses");
        if (subclasses_per_class < 1)
            throw ValidationError("SyntheticSpec: need at least 1 subclass per class");
        if (samples_per_cell < 1) throw ValidationError("SyntheticSpec: samples_per_cell >= 1");
        if (latent_dim < 1 || u_feature_dim < 1 || v_feature_dim < 1)
            throw ValidationError("SyntheticSpec: dimensions must be >= 1");
        if (noise_sigma < 0.0) throw ValidationError("SyntheticSpec: noise_sigma >= 0");
        if (train_fraction < 0.0 || train_fraction > 1.0)
            throw ValidationError("SyntheticSpec: train_fraction in [0, 1]");
        if (held_out_class_fraction < 0.0 || held_out_class_fraction > 1.0)
            throw ValidationError("SyntheticSpec: held_out_class_fraction in [0, 1]");
        if (held_out_count() >= num_superclasses)
            throw ValidationError("SyntheticSpec: held-out fraction leaves no training classes");
        if (templates_per_class < 1)
            throw ValidationError("SyntheticSpec: templates_per_class >= 1");
        if (template_jitter < 0.0) throw ValidationError("SyntheticSpec: template_jitter >= 0");
    }
};

enum class Split : std::uint8_t { train = 0, eval = 1 };

/// Row i of u_features and row i of v_features form one cross-modal pair.
/// Labels exist for evaluation and oracles only; training never reads them.
struct PairedDataset {
    Matrix u_features;
    Matrix v_features;
    Matrix latents; // the shared z each pair derives from; evaluation/oracle use only
    std::vector<int> superclass;
    std::vector<int> subclass; // global id: superclass * S + local subclass
    std::vector<Split> split;
    Matrix templates; // (num_superclasses * templates_per_class) x v_feature_dim
    std::size_t templates_per_class = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0; // generator seed; also drives teacher construction

    std::size_t size() const { return u_features.rows; }

    std::vector<std::size_t> indices_of(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> train_indices() const { return indices_of(Split::train); }
    std::vector<std::size_t> eval_indices() const { return indices_of(Split::eval); }

    /// Rows of templates for one class, as their own matrix.
    Matrix class_templates(std::size_t cls, std::size_t k) const {
        Matrix out(k, templates.cols);
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t src = cls * templates_per_class + t;
            for (std::size_t j = 0; j < templates.cols; ++j)
                out.at(t, j) = templates.at(src, j);
        }
        return out;
    }
};

namespace detail {

// Fixed modality map: tanh(z W + 0), with W ~ N(0, gain^2 / latent_dim)
// drawn from its own seed so both modalities are deterministic functions
// of the latent point.
struct ModalityMap {
    Matrix w;
    static constexpr double kGain = 2.0;

    ModalityMap(std::size_t latent_dim, std::size_t feature_dim, std::uint64_t seed) {
        Rng rng(seed);
        w = rng.gaussian_matrix(latent_dim, feature_dim,
                                kGain / std::sqrt(static_cast<double>(latent_dim)));
    }

    Matrix apply(const Matrix& z) const {
        Matrix out = matmul(z, w);
        for (double& v : out.data) v = std::tanh(v);
        return out;
    }
};

} // namespace detail

/// Deterministic synthetic dataset: same (spec, seed) always yields the
/// same bytes. Held-out superclasses are the highest class ids and are
/// tagged eval for every sample.
inline PairedDataset generate(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);

    const std::size_t k_classes = spec.num_superclasses;
    const std::size_t s_sub = spec.subclasses_per_class;
    const std::size_t n_total = k_classes * s_sub * spec.samples_per_cell;

    // class geometry
    std::vector<Matrix> centroids;
    for (std::size_t k = 0; k < k_classes; ++k) centroids.push_back(rng.sphere_row(spec.latent_dim));
    std::vector<Matrix> offsets; // indexed k * s_sub + s
    for (std::size_t k = 0; k < k_classes; ++k)
        for (std::size_t s = 0; s < s_sub; ++s)
            offsets.push_back(scale(rng.sphere_row(spec.latent_dim), spec.subclass_offset_scale));

    const detail::ModalityMap map_u(spec.latent_dim, spec.u_feature_dim, spec.u_map_seed);
    const detail::ModalityMap map_v(spec.latent_dim, spec.v_feature_dim, spec.v_map_seed);

    PairedDataset ds;
    ds.u_features = Matrix(n_total, spec.u_feature_dim);
    ds.v_features = Matrix(n_total, spec.v_feature_dim);
    ds.latents = Matrix(n_total, spec.latent_dim);
    ds.superclass.resize(n_total);
    ds.subclass.resize(n_total);
    ds.split.resize(n_total);
    ds.num_classes = k_classes;
    ds.templates_per_class = spec.templates_per_class;
    ds.seed = seed;

    const std::size_t held_out_from = k_classes - spec.held_out_count();

    std::size_t row = 0;
    for (std::size_t k = 0; k < k_classes; ++k) {
        for (std::size_t s = 0; s < s_sub; ++s) {
            for (std::size_t m = 0; m < spec.samples_per_cell; ++m, ++row) {
                Matrix z = centroids[k];
                add_inplace(z, offsets[k * s_sub + s]);
                if (spec.noise_sigma > 0.0)
                    add_inplace(z, rng.gaussian_matrix(1, spec.latent_dim, spec.noise_sigma));

                Matrix u = map_u.apply(z);
                Matrix v = map_v.apply(z);
                if (spec.noise_sigma > 0.0)
                    add_inplace(u, rng.gaussian_matrix(1, spec.u_feature_dim, spec.noise_sigma));
                if (spec.v_noise() > 0.0)
                    add_inplace(v, rng.gaussian_matrix(1, spec.v_feature_dim, spec.v_noise()));
                for (std::size_t j = 0; j < spec.u_feature_dim; ++j)
                    ds.u_features.at(row, j) = u.at(0, j);
                for (std::size_t j = 0; j < spec.v_feature_dim; ++j)
                    ds.v_features.at(row, j) = v.at(0, j);
                for (std::size_t j = 0; j < spec.latent_dim; ++j)
                    ds.latents.at(row, j) = z.at(0, j);

                ds.superclass[row] = static_cast<int>(k);
                ds.subclass[row] = static_cast<int>(k * s_sub + s);
                const bool held_out = k >= held_out_from;
                const bool train = !held_out && rng.uniform01() < spec.train_fraction;
                ds.split[row] = train ? Split::train : Split::eval;
            }
        }
    }

    // Template descriptors: jittered class centroids seen through the V map.
    // These stand in for template sentences fed to the frozen tower.
    ds.templates = Matrix(k_classes * spec.templates_per_class, spec.v_feature_dim);
    std::size_t trow = 0;
    for (std::size_t k = 0; k < k_classes; ++k) {
        for (std::size_t t = 0; t < spec.templates_per_class; ++t, ++trow) {
            Matrix z = centroids[k];
            if (spec.template_jitter > 0.0)
                add_inplace(z, scale(rng.sphere_row(spec.latent_dim), spec.template_jitter));
            const Matrix v = map_v.apply(z);
            for (std::size_t j = 0; j < spec.v_feature_dim; ++j) ds.templates.at(trow, j) = v.at(0, j);
        }
    }
    return ds;
}

// ---------- tensor file format ----------
//
// Bit-exact on round trip:
//   bytes 0..3   magic "CWT1"
//   bytes 4..11  rows, unsigned 64-bit little-endian
//   bytes 12..19 cols, unsigned 64-bit little-endian
//   then rows*cols IEEE-754 binary64 values, little-endian, row-major

namespace detail {

constexpr std::array<char, 4> kTensorMagic = {'C', 'W', 'T', '1'};

inline void put_u64_le(std::ostream& out, std::uint64_t v) {
    std::array<unsigned char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline std::uint64_t get_u64_le(std::istream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

} // namespace detail

inline void write_tensor_file(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_tensor_file: cannot open " + path.string());
    out.write(detail::kTensorMagic.data(), 4);
    detail::put_u64_le(out, m.rows);
    detail::put_u64_le(out, m.cols);
    for (double v : m.data) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        detail::put_u64_le(out, bits);
    }
    if (!out) throw IoError("write_tensor_file: write failed for " + path.string());
}

inline Matrix read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_tensor_file: cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || magic != detail::kTensorMagic)
        throw ValidationError("read_tensor_file: bad magic in " + path.string());
    const std::uint64_t rows = detail::get_u64_le(in);
    const std::uint64_t cols = detail::get_u64_le(in);
    if (!in) throw ValidationError("read_tensor_file: truncated header in " + path.string());
    if (rows != 0 && cols != 0 &&
        (rows > std::numeric_limits<std::size_t>::max() / 8 / cols))
        throw ValidationError("read_tensor_file: dimension overflow in " + path.string());

    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (double& v : m.data) {
        const std::uint64_t bits = detail::get_u64_le(in);
        if (!in) throw ValidationError("read_tensor_file: truncated data in " + path.string());
        std::memcpy(&v, &bits, 8);
    }
    in.peek();
    if (!in.eof())
        throw ValidationError("read_tensor_file: trailing bytes in " + path.string());
    return m;
}

} // namespace cwcl
