#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

#include "cwcl/matrix.hpp"

namespace cwcl {

/// Counter-style pseudo-random generator built on the SplitMix64 step:
/// the state advances by a fixed Weyl increment and each output is a
/// finalizer over the new state. The full algorithm is spelled out here
/// so a given seed yields the same sequence on any platform:
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   output = z ^ (z >> 31)
///
/// uniform01 takes the top 53 bits, gaussian is Box-Muller with a cached
/// spare, and below(n) is the 128-bit multiply-shift reduction.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so log(u1) is finite.
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n). Multiply-shift reduction; n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.data) v = stddev * gaussian();
        return m;
    }

    /// Point drawn uniformly from the unit sphere in R^dim, as a 1 x dim row.
    Matrix sphere_row(std::size_t dim) {
        Matrix v = gaussian_matrix(1, dim);
        double n = row_norm(v, 0);
        while (n == 0.0) { // astronomically unlikely, but keep the row valid
            v = gaussian_matrix(1, dim);
            n = row_norm(v, 0);
        }
        scale_inplace(v, 1.0 / n);
        return v;
    }

    /// Random batch of unit-norm embedding rows.
    Matrix unit_rows(std::size_t rows, std::size_t dim) {
        Matrix m(rows, dim);
        for (std::size_t i = 0; i < rows; ++i) {
            const Matrix r = sphere_row(dim);
            for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = r.at(0, j);
        }
        return m;
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cwcl
