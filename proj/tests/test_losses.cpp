#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cwcl/losses.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/rng.hpp"
#include "cwcl/weights.hpp"
#include "oracles.hpp"

using cwcl::Matrix;
using cwcl::Rng;
using cwcl::Temperature;

namespace {

Temperature tau_of(double t) {
    Temperature tmp;
    tmp.tau = t;
    return tmp;
}

Matrix identical_unit_rows(std::size_t n, std::size_t d) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) m.at(i, 0) = 1.0;
    return m;
}

} // namespace

TEST_CASE("cl_loss trivial values") {
    SECTION("N=1 is zero: the softmax over one candidate is 1") {
        Matrix p(1, 3);
        p.at(0, 1) = 1.0;
        const auto out = cwcl::cl_loss(p, p, tau_of(0.07));
        REQUIRE(out.value == Catch::Approx(0.0).margin(1e-15));
        for (double g : out.grad_p.data) REQUIRE(g == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("all rows identical gives ln N") {
        const Matrix p = identical_unit_rows(4, 5);
        const auto out = cwcl::cl_loss(p, p, tau_of(0.07));
        REQUIRE(out.value == Catch::Approx(1.3862943611198906).margin(1e-12));
    }
    SECTION("N=2 orthonormal pairing, tau=1") {
        const Matrix p = Matrix::identity(2);
        const auto out = cwcl::cl_loss(p, p, tau_of(1.0));
        // frozen from the direct formula: -log(e/(e+1)) = ln(1 + e^-1)
        REQUIRE(out.value == Catch::Approx(0.31326168751822286).margin(1e-12));
    }
}

TEST_CASE("cl_loss matches the naive direct-formula oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + rng.below(6);
        const std::size_t d = 2 + rng.below(8);
        const Matrix p = rng.unit_rows(n, d);
        const Matrix q = rng.unit_rows(n, d);
        const double tau = 0.5 + rng.uniform01();
        const auto out = cwcl::cl_loss(p, q, tau_of(tau));
        REQUIRE(out.value == Catch::Approx(oracles::naive_cl_loss(p, q, tau)).margin(1e-12));
        REQUIRE(out.value >= 0.0);
    }
}

TEST_CASE("cl_loss validation") {
    const Matrix p = Matrix::identity(2);
    REQUIRE_THROWS_AS(cwcl::cl_loss(p, Matrix::identity(3), tau_of(1.0)), cwcl::ValidationError);
    REQUIRE_THROWS_AS(cwcl::cl_loss(p, p, tau_of(0.0)), cwcl::ValidationError);
    REQUIRE_THROWS_AS(cwcl::cl_loss(p, p, tau_of(-1.0)), cwcl::ValidationError);
    Matrix bad(2, 2);
    bad.data = {3, 4, 1, 0};
    REQUIRE_THROWS_AS(cwcl::cl_loss(bad, p, tau_of(1.0)), cwcl::ValidationError);
}

TEST_CASE("detach_q zeroes grad_q exactly") {
    Rng rng(33);
    const Matrix p = rng.unit_rows(4, 6);
    const Matrix q = rng.unit_rows(4, 6);
    const auto out = cwcl::cl_loss(p, q, tau_of(0.07), true);
    for (double g : out.grad_q.data) REQUIRE(g == 0.0);
    const auto attached = cwcl::cl_loss(p, q, tau_of(0.07), false);
    bool any_nonzero = false;
    for (double g : attached.grad_q.data) any_nonzero = any_nonzero || g != 0.0;
    REQUIRE(any_nonzero);
}

TEST_CASE("supcon_loss trivial and error cases") {
    SECTION("all same class, identical embeddings: each term is ln 2") {
        const Matrix z = identical_unit_rows(3, 4);
        const auto out = cwcl::supcon_loss(z, {5, 5, 5}, tau_of(0.07));
        REQUIRE(out.value == Catch::Approx(0.6931471805599453).margin(1e-12));
    }
    SECTION("no positives anywhere is an error") {
        const Matrix z = Matrix::identity(2);
        REQUIRE_THROWS_AS(cwcl::supcon_loss(z, {0, 1}, tau_of(1.0)), cwcl::ValidationError);
    }
    SECTION("anchors without positives are skipped, not fatal") {
        Rng rng(3);
        const Matrix z = rng.unit_rows(3, 4);
        // anchor 2 has no positives; anchors 0 and 1 pair up
        const auto out = cwcl::supcon_loss(z, {0, 0, 9}, tau_of(0.07));
        REQUIRE(std::isfinite(out.value));
    }
}

TEST_CASE("supcon_loss matches the direct Eq-style oracle") {
    Rng rng(202);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 4;
        const Matrix z = rng.unit_rows(n, 8);
        const std::vector<int> labels = {0, 0, 1, 1};
        const double tau = 0.3 + rng.uniform01();
        const auto out = cwcl::supcon_loss(z, labels, tau_of(tau));
        REQUIRE(out.value ==
                Catch::Approx(oracles::naive_supcon_loss(z, labels, tau)).margin(1e-12));
    }
}

TEST_CASE("cwcl_loss with indicator weights reduces to cl_loss") {
    Rng rng(303);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 2 + rng.below(10);
        const Matrix p = rng.unit_rows(n, d);
        const Matrix q = rng.unit_rows(n, d);
        const double tau = 0.05 + rng.uniform01();
        const auto weighted = cwcl::cwcl_loss(p, q, cwcl::indicator_weights(n), tau_of(tau));
        const auto plain = cwcl::cl_loss(p, q, tau_of(tau));
        REQUIRE(std::abs(weighted.value - plain.value) < 1e-12);
        for (std::size_t i = 0; i < weighted.grad_p.data.size(); ++i)
            REQUIRE(weighted.grad_p.data[i] ==
                    Catch::Approx(plain.grad_p.data[i]).margin(1e-12));
    }
}

TEST_CASE("cwcl_loss trivial values") {
    SECTION("identical embeddings give ln N for any valid weights") {
        const Matrix p = identical_unit_rows(4, 3);
        Rng rng(1);
        const auto w = cwcl::linear_weights(rng.unit_rows(4, 3));
        const auto out = cwcl::cwcl_loss(p, p, w, tau_of(0.07));
        REQUIRE(out.value == Catch::Approx(1.3862943611198906).margin(1e-12));
    }
    SECTION("N=2 frozen example") {
        const Matrix p = Matrix::identity(2);
        cwcl::SimilarityWeights w;
        w.n = 2;
        w.w = Matrix(2, 2);
        w.w.data = {1.0, 0.5, 0.5, 1.0};
        w.kind = cwcl::WeightKind::linear;
        const auto out = cwcl::cwcl_loss(p, p, w, tau_of(1.0));
        // frozen from the direct formula evaluation
        REQUIRE(out.value == Catch::Approx(0.6465950208515562).margin(1e-12));
    }
}

TEST_CASE("cwcl_loss matches the naive direct-formula oracle") {
    Rng rng(404);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + rng.below(6);
        const std::size_t d = 2 + rng.below(8);
        const Matrix p = rng.unit_rows(n, d);
        const Matrix q = rng.unit_rows(n, d);
        const auto w = cwcl::linear_weights(rng.unit_rows(n, d));
        const double tau = 0.4 + rng.uniform01();
        const auto out = cwcl::cwcl_loss(p, q, w, tau_of(tau));
        REQUIRE(out.value ==
                Catch::Approx(oracles::naive_cwcl_loss(p, q, w.w, tau)).margin(1e-12));
        REQUIRE(out.value >= 0.0);
    }
}

TEST_CASE("cwcl_loss with class-indicator weights equals inclusive supcon") {
    Rng rng(505);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const Matrix z = rng.unit_rows(n, 6);
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(3));
        const double tau = 0.3 + rng.uniform01();
        const auto out = cwcl::cwcl_loss(z, z, cwcl::class_indicator_weights(labels), tau_of(tau));
        REQUIRE(out.value ==
                Catch::Approx(oracles::naive_inclusive_supcon_loss(z, labels, tau)).margin(1e-12));
    }
}

TEST_CASE("cwcl_loss rejects a zero weight row-sum") {
    const Matrix p = Matrix::identity(2);
    cwcl::SimilarityWeights w;
    w.n = 2;
    w.w = Matrix(2, 2);
    w.w.data = {1.0, 0.0, 0.0, 0.0};
    REQUIRE_THROWS_AS(cwcl::cwcl_loss(p, p, w, tau_of(1.0)), cwcl::ValidationError);
}

TEST_CASE("cross_modal_transfer_loss composition") {
    SECTION("N=1 gives zero") {
        Matrix p(1, 2);
        p.at(0, 0) = 1.0;
        const auto out =
            cwcl::cross_modal_transfer_loss(p, p, cwcl::indicator_weights(1), tau_of(0.07));
        REQUIRE(out.value == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("indicator weights give the symmetric CL total") {
        Rng rng(606);
        const Matrix p = rng.unit_rows(5, 4);
        const Matrix q = rng.unit_rows(5, 4);
        const auto total =
            cwcl::cross_modal_transfer_loss(p, q, cwcl::indicator_weights(5), tau_of(0.07));
        const auto fwd = cwcl::cl_loss(p, q, tau_of(0.07));
        const auto rev = cwcl::cl_loss(q, p, tau_of(0.07));
        REQUIRE(total.value == Catch::Approx(fwd.value + rev.value).margin(1e-12));
    }
    SECTION("random batch equals the sum of separately computed components") {
        Rng rng(707);
        const Matrix p = rng.unit_rows(3, 5);
        const Matrix q = rng.unit_rows(3, 5);
        const auto w = cwcl::linear_weights(rng.unit_rows(3, 7));
        const auto total = cwcl::cross_modal_transfer_loss(p, q, w, tau_of(0.07));
        const auto fwd = cwcl::cwcl_loss(p, q, w, tau_of(0.07));
        const auto rev = cwcl::cl_loss(q, p, tau_of(0.07));
        REQUIRE(total.value == Catch::Approx(fwd.value + rev.value).margin(1e-12));
        for (std::size_t i = 0; i < total.grad_p.data.size(); ++i)
            REQUIRE(total.grad_p.data[i] ==
                    Catch::Approx(fwd.grad_p.data[i] + rev.grad_q.data[i]).margin(1e-12));
        for (std::size_t i = 0; i < total.grad_q.data.size(); ++i)
            REQUIRE(total.grad_q.data[i] ==
                    Catch::Approx(fwd.grad_q.data[i] + rev.grad_p.data[i]).margin(1e-12));
    }
}

TEST_CASE("losses are permutation invariant") {
    Rng rng(808);
    const std::size_t n = 6;
    const Matrix p = rng.unit_rows(n, 4);
    const Matrix q = rng.unit_rows(n, 4);
    std::vector<int> labels = {0, 1, 0, 2, 1, 0};
    const auto w = cwcl::linear_weights(rng.unit_rows(n, 5));

    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    Matrix pp(n, 4), pq(n, 4);
    Matrix pw(n, n);
    std::vector<int> plabels(n);
    for (std::size_t i = 0; i < n; ++i) {
        plabels[i] = labels[perm[i]];
        for (std::size_t j = 0; j < 4; ++j) {
            pp.at(i, j) = p.at(perm[i], j);
            pq.at(i, j) = q.at(perm[i], j);
        }
        for (std::size_t j = 0; j < n; ++j) pw.at(i, j) = w.w.at(perm[i], perm[j]);
    }
    cwcl::SimilarityWeights wperm{n, pw, cwcl::WeightKind::linear};

    const Temperature t = tau_of(0.07);
    REQUIRE(cwcl::cl_loss(pp, pq, t).value ==
            Catch::Approx(cwcl::cl_loss(p, q, t).value).margin(1e-12));
    REQUIRE(cwcl::cwcl_loss(pp, pq, wperm, t).value ==
            Catch::Approx(cwcl::cwcl_loss(p, q, w, t).value).margin(1e-12));
    REQUIRE(cwcl::supcon_loss(pp, plabels, t).value ==
            Catch::Approx(cwcl::supcon_loss(p, labels, t).value).margin(1e-12));
    REQUIRE(cwcl::cross_modal_transfer_loss(pp, pq, wperm, t).value ==
            Catch::Approx(cwcl::cross_modal_transfer_loss(p, q, w, t).value).margin(1e-12));
}

TEST_CASE("grad_check validates analytic gradients") {
    Rng rng(909);

    SECTION("cl_loss, N=4 d=8") {
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(4, 8);
        prob.q = rng.unit_rows(4, 8);
        prob.tau = tau_of(0.07);
        prob.check_tau = true;
        prob.eval = [](const Matrix& p, const Matrix& q, const Temperature& t) {
            return cwcl::cl_loss(p, q, t);
        };
        REQUIRE(cwcl::grad_check(prob, 1e-6) < 1e-5);
    }
    SECTION("cwcl_loss with linear weights, N=6 d=8") {
        const auto w = cwcl::linear_weights(rng.unit_rows(6, 8));
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(6, 8);
        prob.q = rng.unit_rows(6, 8);
        prob.tau = tau_of(0.07);
        prob.check_tau = true;
        prob.eval = [w](const Matrix& p, const Matrix& q, const Temperature& t) {
            return cwcl::cwcl_loss(p, q, w, t);
        };
        REQUIRE(cwcl::grad_check(prob, 1e-6) < 1e-5);
    }
    SECTION("supcon_loss") {
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(5, 6);
        prob.q = Matrix();
        prob.check_q = false;
        prob.check_tau = true;
        prob.tau = tau_of(0.07);
        const std::vector<int> labels = {0, 1, 0, 1, 0};
        prob.eval = [labels](const Matrix& p, const Matrix&, const Temperature& t) {
            return cwcl::supcon_loss(p, labels, t);
        };
        REQUIRE(cwcl::grad_check(prob, 1e-6) < 1e-5);
    }
    SECTION("learnable-tau path on cl_loss") {
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(3, 4);
        prob.q = rng.unit_rows(3, 4);
        prob.tau = tau_of(1.0);
        prob.tau.learnable = true;
        prob.check_tau = true;
        prob.eval = [](const Matrix& p, const Matrix& q, const Temperature& t) {
            return cwcl::cl_loss(p, q, t);
        };
        REQUIRE(cwcl::grad_check(prob, 1e-6) < 1e-5);
    }
    SECTION("epsilon outside [1e-7, 1e-4] is rejected") {
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(2, 3);
        prob.q = rng.unit_rows(2, 3);
        prob.tau = tau_of(1.0);
        prob.eval = [](const Matrix& p, const Matrix& q, const Temperature& t) {
            return cwcl::cl_loss(p, q, t);
        };
        REQUIRE_THROWS_AS(cwcl::grad_check(prob, 1e-2), cwcl::ValidationError);
    }
    SECTION("a corrupted gradient is caught") {
        cwcl::GradCheckProblem prob;
        prob.p = rng.unit_rows(3, 4);
        prob.q = rng.unit_rows(3, 4);
        prob.tau = tau_of(0.07);
        prob.eval = [](const Matrix& p, const Matrix& q, const Temperature& t) {
            auto out = cwcl::cl_loss(p, q, t);
            out.grad_p.data[0] += 1e-2;
            return out;
        };
        REQUIRE(cwcl::grad_check(prob, 1e-6) > 1e-3);
    }
}

TEST_CASE("temperature clamp keeps tau in range") {
    Temperature t;
    t.learnable = true;
    t.set_log_tau(std::log(1e-9));
    REQUIRE(t.tau == Temperature::kMinTau);
    t.set_log_tau(std::log(1e9));
    REQUIRE(t.tau == Temperature::kMaxTau);
    t.set_log_tau(std::log(0.5));
    REQUIRE(t.tau == Catch::Approx(0.5).margin(1e-15));
}
