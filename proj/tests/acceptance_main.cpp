// Acceptance suite: end-to-end checks of the training laboratory, one
// printed pass/fail line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwcl/checkpoint.hpp"
#include "cwcl/cli.hpp"
#include "cwcl/config.hpp"
#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/losses.hpp"
#include "cwcl/matrix.hpp"
#include "cwcl/optim.hpp"
#include "cwcl/rng.hpp"
#include "cwcl/weights.hpp"
#include "cwcl/zeroshot.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using cwcl::Matrix;
using cwcl::Rng;
using cwcl::Temperature;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Temperature tau_of(double t) {
    Temperature tmp;
    tmp.tau = t;
    return tmp;
}

struct TempTree {
    fs::path root;
    TempTree() {
        root = fs::temp_directory_path() / "cwcl_acceptance";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
    std::string str(const std::string& sub) const { return (root / sub).string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// The default synthetic dataset for the directional criteria:
// 8 superclasses, 4 subclasses each, 2 superclasses held out of training.
json default_data_spec() {
    return {{"num_superclasses", 8},
            {"subclasses_per_class", 4},
            {"samples_per_cell", 12},
            {"latent_dim", 16},
            {"noise_sigma", 0.1},
            {"subclass_offset_scale", 0.5},
            {"u_feature_dim", 24},
            {"v_feature_dim", 24},
            {"train_fraction", 0.8},
            {"held_out_class_fraction", 0.25},
            {"templates_per_class", 10},
            {"template_jitter", 0.25},
            {"seed", 1}};
}

json compare_train_config(const std::string& loss) {
    return {{"epochs", 40},
            {"batch_size", 64},
            {"learning_rate", 1e-3},
            {"warmup_steps", 20},
            {"grad_clip_norm", 10.0},
            {"loss", loss},
            {"weight_kind", "linear"},
            {"lock_mode", "lock_v"},
            {"tau", 0.07},
            {"u_hidden", json::array({64})},
            {"teacher_hidden", json::array({64})},
            {"teacher_out_dim", 32},
            {"embed_dim", 16},
            {"seed", 0}};
}

// ---------- criteria ----------

bool criterion_gradcheck(std::string& detail) {
    const auto t0 = Clock::now();
    const int code = cwcl::cli::run({"gradcheck", "--cases", "100", "--seed", "7"});
    const double elapsed = seconds_since(t0);
    std::ostringstream ss;
    ss << "exit " << code << ", " << elapsed << " s (budget 30 s)";
    detail = ss.str();
    return code == 0 && elapsed < 30.0;
}

bool criterion_cl_reduction(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 2 + rng.below(15);
        const Matrix p = rng.unit_rows(n, d);
        const Matrix q = rng.unit_rows(n, d);
        const double tau = 0.05 + rng.uniform01();
        const double weighted =
            cwcl::cwcl_loss(p, q, cwcl::indicator_weights(n), tau_of(tau)).value;
        const double plain = cwcl::cl_loss(p, q, tau_of(tau)).value;
        worst = std::max(worst, std::abs(weighted - plain));
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream ss;
    ss << "max |cwcl(indicator) - cl| = " << worst << " over 1000 batches, " << elapsed << " s";
    detail = ss.str();
    return worst < 1e-12 && elapsed < 10.0;
}

bool criterion_supcon_equivalence(std::string& detail) {
    Rng rng(2002);
    double worst_inclusive = 0.0;
    double worst_printed = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        const Matrix z = rng.unit_rows(n, 2 + rng.below(10));
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(3));
        const double tau = 0.1 + rng.uniform01();

        const double via_weights =
            cwcl::cwcl_loss(z, z, cwcl::class_indicator_weights(labels), tau_of(tau)).value;
        worst_inclusive = std::max(
            worst_inclusive,
            std::abs(via_weights - oracles::naive_inclusive_supcon_loss(z, labels, tau)));

        bool any_positive = false;
        for (std::size_t i = 0; i < n && !any_positive; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && labels[j] == labels[i]) any_positive = true;
        if (any_positive) {
            const double printed = cwcl::supcon_loss(z, labels, tau_of(tau)).value;
            worst_printed = std::max(
                worst_printed, std::abs(printed - oracles::naive_supcon_loss(z, labels, tau)));
        }
    }
    std::ostringstream ss;
    ss << "inclusive-variant gap " << worst_inclusive << ", printed-form gap " << worst_printed;
    detail = ss.str();
    return worst_inclusive < 1e-12 && worst_printed < 1e-12;
}

bool criterion_loss_oracles(std::string& detail) {
    Rng rng(3003);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(6);
        const std::size_t d = 2 + rng.below(8);
        const Matrix p = rng.unit_rows(n, d);
        const Matrix q = rng.unit_rows(n, d);
        const auto w = cwcl::linear_weights(rng.unit_rows(n, d));
        std::vector<int> labels(n);
        for (auto& l : labels) l = static_cast<int>(rng.below(2));
        labels[1] = labels[0];
        const double tau = 0.2 + rng.uniform01();

        worst = std::max(worst, std::abs(cwcl::cl_loss(p, q, tau_of(tau)).value -
                                         oracles::naive_cl_loss(p, q, tau)));
        worst = std::max(worst, std::abs(cwcl::cwcl_loss(p, q, w, tau_of(tau)).value -
                                         oracles::naive_cwcl_loss(p, q, w.w, tau)));
        worst = std::max(worst, std::abs(cwcl::supcon_loss(p, labels, tau_of(tau)).value -
                                         oracles::naive_supcon_loss(p, labels, tau)));
        const double transfer =
            cwcl::cross_modal_transfer_loss(p, q, w, tau_of(tau)).value;
        const double transfer_oracle =
            oracles::naive_cwcl_loss(p, q, w.w, tau) + oracles::naive_cl_loss(q, p, tau);
        worst = std::max(worst, std::abs(transfer - transfer_oracle));
    }
    std::ostringstream ss;
    ss << "max |impl - direct formula| = " << worst << " over 100 batches x 4 losses";
    detail = ss.str();
    return worst < 1e-10;
}

struct CompareOutcome {
    json rows;
    json mean;
    double elapsed = 0.0;
    bool ok = false;
};

// Criteria 5-7 share one compare run: config A = CL baseline, config B = CWCL.
CompareOutcome run_paired_comparison(const TempTree& tmp) {
    CompareOutcome out;
    const auto t0 = Clock::now();

    std::ofstream(tmp.root / "data_spec.json") << default_data_spec().dump(2);
    if (cwcl::cli::run({"gen-data", "--spec", tmp.str("data_spec.json"), "--out",
                        tmp.str("data")}) != 0)
        return out;

    std::ofstream(tmp.root / "cl.json") << compare_train_config("cl").dump(2);
    std::ofstream(tmp.root / "cwcl.json") << compare_train_config("cwcl").dump(2);
    if (cwcl::cli::run({"compare", "--config-a", tmp.str("cl.json"), "--config-b",
                        tmp.str("cwcl.json"), "--data", tmp.str("data"), "--out",
                        tmp.str("compare"), "--seeds", "1,2,3,4,5"}) != 0)
        return out;

    const json result = json::parse(slurp(tmp.root / "compare" / "compare.json"));
    out.rows = result.at("rows");
    out.mean = result.at("mean");
    out.elapsed = seconds_since(t0);
    out.ok = true;
    return out;
}

bool criterion_directional_transfer(const CompareOutcome& cmp, std::string& detail) {
    if (!cmp.ok) {
        detail = "compare pipeline failed";
        return false;
    }
    int wins = 0;
    for (const auto& row : cmp.rows)
        if (row.at("top1_b").get<double>() > row.at("top1_a").get<double>()) ++wins;
    const double mean_cl = cmp.mean.at("top1_a").get<double>();
    const double mean_cwcl = cmp.mean.at("top1_b").get<double>();
    std::ostringstream ss;
    ss << "mean top-1 cwcl " << mean_cwcl << " vs cl " << mean_cl << ", cwcl wins " << wins
       << "/5, " << cmp.elapsed << " s (budget 600 s)";
    detail = ss.str();
    return mean_cwcl >= mean_cl && wins >= 4 && cmp.elapsed < 600.0;
}

bool criterion_block_alignment(const CompareOutcome& cmp, std::string& detail) {
    if (!cmp.ok) {
        detail = "compare pipeline failed";
        return false;
    }
    int wins = 0;
    for (const auto& row : cmp.rows)
        if (row.at("contrast_b").get<double>() > row.at("contrast_a").get<double>()) ++wins;
    std::ostringstream ss;
    ss << "block-contrast cwcl wins " << wins << "/5 (mean " << cmp.mean.at("contrast_b")
       << " vs " << cmp.mean.at("contrast_a") << ")";
    detail = ss.str();
    return wins >= 4;
}

bool criterion_template_robustness(const CompareOutcome& cmp, std::string& detail) {
    if (!cmp.ok) {
        detail = "compare pipeline failed";
        return false;
    }
    int wins = 0;
    for (const auto& row : cmp.rows)
        if (row.at("template_drop_b").get<double>() < row.at("template_drop_a").get<double>())
            ++wins;
    std::ostringstream ss;
    ss << "k=10->1 relative drop smaller for cwcl in " << wins << "/5 seeds (mean "
       << cmp.mean.at("template_drop_b") << " vs " << cmp.mean.at("template_drop_a") << ")";
    detail = ss.str();
    return wins >= 4;
}

bool criterion_retrieval(std::string& detail) {
    Rng rng(4004);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t gallery_n = 10 + rng.below(55); // sizes in [10, 64]
        const std::size_t query_n = 10 + rng.below(55);
        const std::size_t d = 4 + rng.below(12);
        const Matrix queries = rng.unit_rows(query_n, d);
        const Matrix gallery = rng.unit_rows(gallery_n, d);
        std::vector<std::size_t> truth(query_n);
        for (auto& t : truth) t = rng.below(gallery_n);

        const auto got = cwcl::recall_at_k(queries, gallery, truth, {1, 5, 10});
        double prev = 0.0;
        for (const std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{10}}) {
            const double want = oracles::brute_force_recall(queries, gallery, truth, k);
            if (got.at(k) != want) {
                detail = "mismatch vs brute force at k=" + std::to_string(k) + " on trial " +
                         std::to_string(trial);
                return false;
            }
            if (got.at(k) < prev) {
                detail = "recall not monotone in k on trial " + std::to_string(trial);
                return false;
            }
            prev = got.at(k);
        }
    }
    detail = "exact match with brute-force ranking on 50 instances, monotone in k";
    return true;
}

bool criterion_reproducibility(const TempTree& tmp, std::string& detail) {
    // (a) retraining from the same manifest inputs gives a byte-identical log
    std::ofstream(tmp.root / "repro_spec.json")
        << json{{"num_superclasses", 4}, {"subclasses_per_class", 2}, {"samples_per_cell", 10},
                {"latent_dim", 8},       {"u_feature_dim", 12},       {"v_feature_dim", 12},
                {"held_out_class_fraction", 0.25}, {"templates_per_class", 5}, {"seed", 9}}
               .dump(2);
    if (cwcl::cli::run({"gen-data", "--spec", tmp.str("repro_spec.json"), "--out",
                        tmp.str("repro_data")}) != 0) {
        detail = "gen-data failed";
        return false;
    }
    std::ofstream(tmp.root / "repro_train.json")
        << json{{"epochs", 4},    {"batch_size", 8},
                {"warmup_steps", 4}, {"u_hidden", json::array({16})},
                {"teacher_hidden", json::array({16})}, {"teacher_out_dim", 10},
                {"embed_dim", 8}, {"eval_zero_shot", true}, {"seed", 13}}
               .dump(2);
    for (const char* run : {"repro_run1", "repro_run2"}) {
        if (cwcl::cli::run({"train", "--config", tmp.str("repro_train.json"), "--data",
                            tmp.str("repro_data"), "--out", tmp.str(run)}) != 0) {
            detail = "train failed";
            return false;
        }
    }
    const std::string log1 = slurp(tmp.root / "repro_run1" / "metrics.jsonl");
    const std::string log2 = slurp(tmp.root / "repro_run2" / "metrics.jsonl");
    if (log1.empty() || log1 != log2) {
        detail = "metrics logs differ between identical runs";
        return false;
    }

    // (b) tensor files round-trip bit-exactly, 0x0 included
    Rng rng(5005);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix m;
        if (trial > 0) {
            const std::size_t r = rng.below(12);
            const std::size_t c = rng.below(12);
            m = rng.gaussian_matrix(r, c, 10.0);
        }
        const fs::path p = tmp.root / "roundtrip.cwt";
        cwcl::write_tensor_file(p, m);
        const Matrix back = cwcl::read_tensor_file(p);
        if (back.rows != m.rows || back.cols != m.cols || back.data != m.data) {
            detail = "round trip not bit-exact on trial " + std::to_string(trial);
            return false;
        }
    }
    detail = "byte-identical metrics logs; 100/100 bit-exact tensor round trips";
    return true;
}

bool criterion_lock_semantics(std::string& detail) {
    cwcl::SyntheticSpec spec;
    spec.num_superclasses = 4;
    spec.subclasses_per_class = 2;
    spec.samples_per_cell = 13; // 104 total, ~80 train -> 10 batches of 8
    spec.latent_dim = 8;
    spec.u_feature_dim = 12;
    spec.v_feature_dim = 12;
    spec.held_out_class_fraction = 0.25;
    spec.templates_per_class = 5;
    const cwcl::PairedDataset data = cwcl::generate(spec, 31);

    cwcl::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.warmup_steps = 5;
    cfg.u_hidden = {16};
    cfg.teacher_hidden = {16};
    cfg.teacher_out_dim = 10;
    cfg.embed_dim = 8;
    cfg.seed = 17;
    const std::size_t steps_per_epoch = data.train_indices().size() / cfg.batch_size;
    cfg.epochs = (50 + steps_per_epoch - 1) / steps_per_epoch; // at least 50 steps

    // lock_v: frozen tower bit-identical, projection moves
    cfg.lock_mode = cwcl::LockMode::lock_v;
    const cwcl::Model init_v = cwcl::make_model(cfg, data);
    const cwcl::Model trained_v = cwcl::train(cfg, data, init_v).model;
    for (std::size_t l = 0; l < init_v.v_tower.body.layers.size(); ++l) {
        if (trained_v.v_tower.body.layers[l].weight.data !=
                init_v.v_tower.body.layers[l].weight.data ||
            trained_v.v_tower.body.layers[l].bias.data !=
                init_v.v_tower.body.layers[l].bias.data) {
            detail = "lock_v: frozen tower changed";
            return false;
        }
    }
    if (trained_v.v_tower.projection.weight.data == init_v.v_tower.projection.weight.data) {
        detail = "lock_v: projection did not train";
        return false;
    }

    // lock_both with learnable tau: only tau changes
    cfg.lock_mode = cwcl::LockMode::lock_both;
    cfg.tau_learnable = true;
    const cwcl::Model init_b = cwcl::make_model(cfg, data);
    const cwcl::Model trained_b = cwcl::train(cfg, data, init_b).model;
    const bool u_same = trained_b.u_encoder.layers[0].weight.data ==
                        init_b.u_encoder.layers[0].weight.data;
    const bool body_same = trained_b.v_tower.body.layers[0].weight.data ==
                           init_b.v_tower.body.layers[0].weight.data;
    const bool proj_same =
        trained_b.v_tower.projection.weight.data == init_b.v_tower.projection.weight.data;
    const bool tau_moved = trained_b.temperature.tau != init_b.temperature.tau;
    if (!(u_same && body_same && proj_same && tau_moved)) {
        detail = "lock_both: expected only tau to move";
        return false;
    }
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;
    detail = "verified over " + std::to_string(total_steps) + " steps";
    return true;
}

} // namespace

int main() {
    TempTree tmp;
    int failures = 0;
    auto report = [&](int id, const std::string& name, bool pass, const std::string& detail) {
        std::printf("[%s] criterion %2d: %s — %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                    detail.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    };

    std::string detail;

    bool ok = criterion_gradcheck(detail);
    report(1, "gradient correctness (100 random configs, all losses)", ok, detail);

    ok = criterion_cl_reduction(detail);
    report(2, "indicator weights reduce the weighted loss to CL", ok, detail);

    ok = criterion_supcon_equivalence(detail);
    report(3, "class weights match inclusive SupCon; printed form oracle-checked", ok, detail);

    ok = criterion_loss_oracles(detail);
    report(4, "loss values match the direct-formula scripts", ok, detail);

    const CompareOutcome cmp = run_paired_comparison(tmp);

    ok = criterion_directional_transfer(cmp, detail);
    report(5, "paired seeds: cwcl zero-shot accuracy beats cl", ok, detail);

    ok = criterion_block_alignment(cmp, detail);
    report(6, "paired seeds: cwcl block-contrast beats cl", ok, detail);

    ok = criterion_template_robustness(cmp, detail);
    report(7, "paired seeds: cwcl is more robust to few templates", ok, detail);

    ok = criterion_retrieval(detail);
    report(8, "recall@k equals the brute-force ranking oracle", ok, detail);

    ok = criterion_reproducibility(tmp, detail);
    report(9, "bit-exact reruns and tensor round trips", ok, detail);

    ok = criterion_lock_semantics(detail);
    report(10, "lock configurations freeze exactly their groups", ok, detail);

    if (failures == 0) {
        std::printf("acceptance: all 10 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", failures);
    return 1;
}
