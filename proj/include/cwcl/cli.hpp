#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cwcl/checkpoint.hpp"
#include "cwcl/config.hpp"
#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/losses.hpp"
#include "cwcl/optim.hpp"
#include "cwcl/weights.hpp"
#include "cwcl/zeroshot.hpp"

namespace cwcl::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

namespace detail {

namespace fs = std::filesystem;

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline std::uint64_t fnv1a_file(const fs::path& path, std::uint64_t h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("hash: cannot open " + path.string());
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
    }
    return h;
}

inline std::string dataset_hash(const fs::path& dir) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char* name : {"u.cwt", "v.cwt", "templates.cwt"}) h = fnv1a_file(dir / name, h);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a:") + buf;
}

/// Run directories are append-only: an existing non-empty directory is
/// refused unless --force. Called only after all inputs validated, so a
/// failed command leaves no partial run directory behind.
inline void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_directory(dir))
        throw ValidationError("output path exists and is not a directory: " + dir.string());
    if (fs::exists(dir) && !fs::is_empty(dir) && !force)
        throw ValidationError("output directory " + dir.string() +
                              " is not empty; pass --force to reuse it");
    fs::create_directories(dir);
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path.string());
}

struct ManifestClock {
    std::string started = utc_now();

    nlohmann::json finish(const std::string& command, const nlohmann::json& inputs,
                          const std::vector<std::string>& outputs) const {
        nlohmann::json m;
        m["format"] = "cwcl-run-v1";
        m["command"] = command;
        m["inputs"] = inputs;
        m["outputs"] = outputs;
        m["timestamps"] = {{"started", started}, {"finished", utc_now()}};
        return m;
    }
};

// ---------- shared evaluation helpers ----------

struct EvalSplit {
    Matrix u_features;
    Matrix v_features;
    std::vector<int> labels;
};

inline EvalSplit eval_split(const PairedDataset& data) {
    const std::vector<std::size_t> idx = data.eval_indices();
    EvalSplit s;
    s.u_features = Matrix(idx.size(), data.u_features.cols);
    s.v_features = Matrix(idx.size(), data.v_features.cols);
    s.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < data.u_features.cols; ++j)
            s.u_features.at(i, j) = data.u_features.at(idx[i], j);
        for (std::size_t j = 0; j < data.v_features.cols; ++j)
            s.v_features.at(i, j) = data.v_features.at(idx[i], j);
        s.labels[i] = data.superclass[idx[i]];
    }
    return s;
}

inline double zero_shot_top1(const Model& model, const ZeroShotTask& task, ClassEmbedMode mode) {
    const Matrix embs = class_embeddings(task, model.v_tower, task.templates_per_class, mode);
    return classify(task.eval_u, task.eval_labels, embs, model.u_encoder).top1;
}

} // namespace detail

// ---------- gen-data ----------

struct GenDataArgs {
    std::string spec_path;
    std::string out_dir;
    bool force = false;
};

inline int cmd_gen_data(const GenDataArgs& args) {
    namespace fs = std::filesystem;
    const detail::ManifestClock clock;
    const DataGenConfig cfg = parse_data_config(cwcl::detail::load_json_file(args.spec_path));
    const PairedDataset ds = generate(cfg.spec, cfg.seed);

    const fs::path out(args.out_dir);
    detail::prepare_out_dir(out, args.force);
    write_tensor_file(out / "u.cwt", ds.u_features);
    write_tensor_file(out / "v.cwt", ds.v_features);
    write_tensor_file(out / "templates.cwt", ds.templates);
    detail::write_json_file(out / "dataset.json", dataset_manifest_to_json(ds, cfg));

    nlohmann::json inputs;
    inputs["spec"] = data_config_to_json(cfg);
    inputs["seed"] = cfg.seed;
    nlohmann::json manifest = clock.finish("gen-data", inputs,
                                           {"u.cwt", "v.cwt", "templates.cwt", "dataset.json"});
    manifest["dataset_hash"] = detail::dataset_hash(out);
    detail::write_json_file(out / "manifest.json", manifest);

    std::cout << "gen-data: wrote " << ds.size() << " pairs (" << ds.train_indices().size()
              << " train / " << ds.eval_indices().size() << " eval), " << ds.num_classes
              << " classes to " << out.string() << "\n";
    return kExitOk;
}

// ---------- train ----------

struct TrainArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    bool force = false;
};

inline int cmd_train(const TrainArgs& args) {
    namespace fs = std::filesystem;
    const detail::ManifestClock clock;
    const TrainFileConfig cfg = parse_train_config(cwcl::detail::load_json_file(args.config_path));
    const PairedDataset data = load_dataset(args.data_dir);
    const std::string data_hash = detail::dataset_hash(args.data_dir);

    const ZeroShotTask task = make_task(data);
    std::function<double(const Model&)> eval_fn;
    if (cfg.train.eval_zero_shot)
        eval_fn = [&](const Model& m) { return detail::zero_shot_top1(m, task, cfg.class_embed); };

    TrainResult result = train(cfg.train, data, make_model(cfg.train, data), eval_fn);

    const fs::path out(args.out_dir);
    detail::prepare_out_dir(out, args.force);
    save_checkpoint(out / "checkpoint", result.model);

    std::ofstream metrics(out / "metrics.jsonl");
    if (!metrics) throw IoError("cannot open metrics.jsonl in " + out.string());
    for (const EpochMetrics& em : result.metrics) {
        nlohmann::json rec{{"epoch", em.epoch}, {"mean_loss", em.mean_loss}, {"lr", em.lr}};
        if (em.zero_shot_accuracy) rec["zero_shot_accuracy"] = *em.zero_shot_accuracy;
        metrics << rec.dump() << "\n";
    }
    metrics.close();

    nlohmann::json inputs;
    inputs["config"] = train_config_to_json(cfg);
    inputs["seed"] = cfg.train.seed;
    inputs["dataset_dir"] = args.data_dir;
    inputs["dataset_hash"] = data_hash;
    detail::write_json_file(out / "manifest.json",
                            clock.finish("train", inputs, {"checkpoint", "metrics.jsonl"}));

    const double final_loss = result.metrics.empty() ? 0.0 : result.metrics.back().mean_loss;
    std::cout << "train: " << cfg.train.epochs << " epochs, final mean loss " << final_loss
              << ", checkpoint at " << (out / "checkpoint").string() << "\n";
    return kExitOk;
}

// ---------- eval ----------

struct EvalArgs {
    std::string checkpoint_dir;
    std::string data_dir;
    std::string out_dir;
    bool do_classify = false;
    bool do_retrieval = false;
    bool do_align_matrix = false;
    std::vector<std::size_t> template_sweep_k; // empty = no sweep
    std::vector<std::size_t> retrieval_k = {1, 5, 10};
    std::string class_embed = "normalized_mean";
    bool force = false;
};

inline int cmd_eval(const EvalArgs& args) {
    namespace fs = std::filesystem;
    const detail::ManifestClock clock;
    if (!args.do_classify && !args.do_retrieval && !args.do_align_matrix &&
        args.template_sweep_k.empty())
        throw ValidationError("eval: nothing to do; pass at least one of --classify, "
                              "--retrieval, --align-matrix, --template-sweep");

    ClassEmbedMode mode;
    if (args.class_embed == "normalized_mean") {
        mode = ClassEmbedMode::normalized_mean;
    } else if (args.class_embed == "raw_mean") {
        mode = ClassEmbedMode::raw_mean;
    } else {
        throw ValidationError("eval: class_embed must be 'normalized_mean' or 'raw_mean'");
    }

    const Model model = load_checkpoint(args.checkpoint_dir);
    const PairedDataset data = load_dataset(args.data_dir);
    const ZeroShotTask task = make_task(data);
    const detail::EvalSplit split = detail::eval_split(data);

    nlohmann::json results;
    std::vector<std::string> outputs{"results.json"};

    if (args.do_classify) {
        const Matrix embs = class_embeddings(task, model.v_tower, task.templates_per_class, mode);
        const ClassifyResult cr = classify(task.eval_u, task.eval_labels, embs, model.u_encoder);
        results["classify"] = {{"top1", cr.top1},
                               {"top5", cr.top5},
                               {"num_items", task.eval_labels.size()},
                               {"num_classes", task.num_classes}};
    }
    if (args.do_retrieval) {
        const Matrix queries = encode_u(model.u_encoder, split.u_features);
        const Matrix gallery = encode_v(model.v_tower, split.v_features).second;
        std::vector<std::size_t> truth(queries.rows);
        for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i;
        const auto recalls = recall_at_k(queries, gallery, truth, args.retrieval_k);
        nlohmann::json block;
        for (const auto& [k, r] : recalls) block["r@" + std::to_string(k)] = r;
        block["num_queries"] = queries.rows;
        results["retrieval"] = block;
    }

    const fs::path out(args.out_dir);
    detail::prepare_out_dir(out, args.force);

    if (args.do_align_matrix) {
        const AlignmentMatrix am = alignment_matrix(split.u_features, split.labels,
                                                    split.v_features, split.labels,
                                                    model.u_encoder, model.v_tower);
        write_alignment_csv(out / "alignment.csv", am);
        outputs.push_back("alignment.csv");
        results["alignment"] = {{"block_contrast", am.block_contrast},
                                {"rows", am.sims.rows},
                                {"cols", am.sims.cols}};
    }
    if (!args.template_sweep_k.empty()) {
        const std::vector<SweepRow> rows =
            template_sweep(task, args.template_sweep_k, model.u_encoder, model.v_tower, mode);
        std::ofstream csv(out / "template_sweep.csv");
        if (!csv) throw IoError("cannot open template_sweep.csv");
        csv << "k,top1,relative_drop\n";
        nlohmann::json sweep = nlohmann::json::array();
        for (const SweepRow& r : rows) {
            char line[96];
            std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f\n", r.k, r.top1, r.relative_drop);
            csv << line;
            sweep.push_back({{"k", r.k}, {"top1", r.top1}, {"relative_drop", r.relative_drop}});
        }
        outputs.push_back("template_sweep.csv");
        results["template_sweep"] = sweep;
    }

    detail::write_json_file(out / "results.json", results);
    nlohmann::json inputs;
    inputs["checkpoint"] = args.checkpoint_dir;
    inputs["dataset_dir"] = args.data_dir;
    inputs["dataset_hash"] = detail::dataset_hash(args.data_dir);
    inputs["class_embed"] = args.class_embed;
    detail::write_json_file(out / "manifest.json", clock.finish("eval", inputs, outputs));

    std::cout << "eval: wrote " << (out / "results.json").string() << "\n";
    return kExitOk;
}

// ---------- gradcheck ----------

struct GradCheckArgs {
    std::size_t cases = 100;
    std::uint64_t seed = 7;
    double epsilon = 1e-5;
    double threshold = 1e-5;
    bool corrupt = false; // test hook: perturb one analytic gradient entry
};

/// Random-configuration gradient check across all four losses, with the
/// learnable-tau path exercised on every case. Exit code 2 when any
/// guarded relative error reaches the threshold.
inline int cmd_gradcheck(const GradCheckArgs& args) {
    Rng rng(args.seed);
    std::map<std::string, double> worst;
    const std::vector<double> taus = {0.05, 0.07, 1.0};

    for (std::size_t c = 0; c < args.cases; ++c) {
        const std::string kind =
            std::vector<std::string>{"cl", "supcon", "cwcl", "transfer"}[c % 4];
        std::size_t n = 1 + static_cast<std::size_t>(rng.below(8)); // N in 1..8
        if (kind == "supcon" && n < 2) n = 2;
        const std::size_t d = 2 + static_cast<std::size_t>(rng.below(15)); // d in 2..16
        Temperature tau;
        tau.tau = taus[static_cast<std::size_t>(rng.below(taus.size()))];
        tau.learnable = true;
        const bool detach = kind != "supcon" && rng.below(2) == 0;

        GradCheckProblem prob;
        prob.p = rng.unit_rows(n, d);
        prob.tau = tau;
        prob.check_tau = true;

        if (kind == "supcon") {
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i)
                labels[i] = static_cast<int>(rng.below(std::max<std::uint64_t>(1, n / 2 + 1)));
            bool any_positive = false;
            for (std::size_t i = 0; i < n && !any_positive; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i && labels[j] == labels[i]) any_positive = true;
            if (!any_positive) labels[1] = labels[0];
            prob.check_q = false;
            prob.eval = [labels](const Matrix& p, const Matrix&, const Temperature& t) {
                return supcon_loss(p, labels, t);
            };
        } else {
            prob.q = rng.unit_rows(n, d);
            prob.check_q = !detach;
            if (kind == "cl") {
                prob.eval = [detach](const Matrix& p, const Matrix& q, const Temperature& t) {
                    return cl_loss(p, q, t, detach);
                };
            } else if (kind == "cwcl") {
                const SimilarityWeights w = linear_weights(rng.unit_rows(n, d));
                prob.eval = [w, detach](const Matrix& p, const Matrix& q, const Temperature& t) {
                    return cwcl_loss(p, q, w, t, detach);
                };
            } else {
                const SimilarityWeights w = linear_weights(rng.unit_rows(n, d));
                prob.check_q = true;
                prob.eval = [w](const Matrix& p, const Matrix& q, const Temperature& t) {
                    return cross_modal_transfer_loss(p, q, w, t);
                };
            }
        }

        if (args.corrupt) {
            // negative control: report what grad_check sees when the
            // analytic gradient is deliberately wrong
            auto inner = prob.eval;
            prob.eval = [inner](const Matrix& p, const Matrix& q, const Temperature& t) {
                LossOutput out = inner(p, q, t);
                if (!out.grad_p.data.empty()) out.grad_p.data[0] += 1e-2;
                return out;
            };
        }

        const double err = grad_check(prob, args.epsilon);
        worst[kind] = std::max(worst[kind], err);
    }

    bool ok = true;
    for (const auto& [kind, err] : worst) {
        const bool pass = err < args.threshold;
        ok = ok && pass;
        std::printf("gradcheck %-8s max relative error %.3e  [%s]\n", kind.c_str(), err,
                    pass ? "ok" : "FAIL");
    }
    return ok ? kExitOk : kExitNumerical;
}

// ---------- compare ----------

struct CompareArgs {
    std::string config_a_path;
    std::string config_b_path;
    std::string data_dir;
    std::string out_dir;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    bool force = false;
};

struct CompareRow {
    std::uint64_t seed = 0;
    double top1_a = 0.0, top1_b = 0.0;
    double contrast_a = 0.0, contrast_b = 0.0;
    double drop_a = 0.0, drop_b = 0.0; // template-robustness drop, k=1 vs all
};

struct CompareResult {
    std::vector<CompareRow> rows;
    CompareRow mean;
};

namespace detail {

// Paired comparisons only make sense when everything except the declared
// knobs (the loss family and its weighting/temperature choices) matches.
inline void require_comparable(const nlohmann::json& a, const nlohmann::json& b) {
    const std::set<std::string> declared = {"loss", "weight_kind", "tau", "tau_learnable",
                                            "class_embed", "seed"};
    nlohmann::json ja = a, jb = b;
    for (const std::string& k : declared) {
        ja.erase(k);
        jb.erase(k);
    }
    if (ja != jb)
        throw ValidationError("compare: configs differ outside the declared fields "
                              "(loss, weight_kind, tau, tau_learnable, class_embed, seed)");
}

inline CompareRow evaluate_pair(const TrainFileConfig& cfg_a, const TrainFileConfig& cfg_b,
                                const PairedDataset& data, const ZeroShotTask& task,
                                std::uint64_t seed) {
    CompareRow row;
    row.seed = seed;
    const EvalSplit split = eval_split(data);

    auto run_one = [&](TrainFileConfig cfg, double& top1, double& contrast, double& drop) {
        cfg.train.seed = seed;
        const Model model = train(cfg.train, data, make_model(cfg.train, data)).model;
        top1 = zero_shot_top1(model, task, cfg.class_embed);
        contrast = alignment_matrix(split.u_features, split.labels, split.v_features,
                                    split.labels, model.u_encoder, model.v_tower)
                       .block_contrast;
        const std::vector<SweepRow> sweep = template_sweep(
            task, {1, task.templates_per_class}, model.u_encoder, model.v_tower, cfg.class_embed);
        drop = sweep.front().relative_drop;
    };
    run_one(cfg_a, row.top1_a, row.contrast_a, row.drop_a);
    run_one(cfg_b, row.top1_b, row.contrast_b, row.drop_b);
    return row;
}

} // namespace detail

/// Paired training runs of two configs over a seed list; the compare
/// table reports zero-shot top-1, alignment block-contrast, and the
/// one-template robustness drop for each side.
inline CompareResult run_compare(const TrainFileConfig& cfg_a, const TrainFileConfig& cfg_b,
                                 const PairedDataset& data,
                                 const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ValidationError("compare: need at least one seed");
    const ZeroShotTask task = make_task(data);
    CompareResult result;
    for (std::uint64_t seed : seeds)
        result.rows.push_back(detail::evaluate_pair(cfg_a, cfg_b, data, task, seed));
    for (const CompareRow& r : result.rows) {
        result.mean.top1_a += r.top1_a;
        result.mean.top1_b += r.top1_b;
        result.mean.contrast_a += r.contrast_a;
        result.mean.contrast_b += r.contrast_b;
        result.mean.drop_a += r.drop_a;
        result.mean.drop_b += r.drop_b;
    }
    const double n = static_cast<double>(result.rows.size());
    result.mean.top1_a /= n;
    result.mean.top1_b /= n;
    result.mean.contrast_a /= n;
    result.mean.contrast_b /= n;
    result.mean.drop_a /= n;
    result.mean.drop_b /= n;
    return result;
}

inline int cmd_compare(const CompareArgs& args) {
    namespace fs = std::filesystem;
    const detail::ManifestClock clock;
    const nlohmann::json ja = cwcl::detail::load_json_file(args.config_a_path);
    const nlohmann::json jb = cwcl::detail::load_json_file(args.config_b_path);
    const TrainFileConfig cfg_a = parse_train_config(ja);
    const TrainFileConfig cfg_b = parse_train_config(jb);
    detail::require_comparable(train_config_to_json(cfg_a), train_config_to_json(cfg_b));
    const PairedDataset data = load_dataset(args.data_dir);

    const CompareResult result = run_compare(cfg_a, cfg_b, data, args.seeds);

    const fs::path out(args.out_dir);
    detail::prepare_out_dir(out, args.force);

    std::ofstream csv(out / "compare.csv");
    if (!csv) throw IoError("cannot open compare.csv");
    csv << "seed,top1_a,top1_b,contrast_a,contrast_b,template_drop_a,template_drop_b\n";
    auto emit = [&csv](const std::string& tag, const CompareRow& r) {
        char line[160];
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", tag.c_str(),
                      r.top1_a, r.top1_b, r.contrast_a, r.contrast_b, r.drop_a, r.drop_b);
        csv << line;
    };
    for (const CompareRow& r : result.rows) emit(std::to_string(r.seed), r);
    emit("mean", result.mean);
    csv.close();

    nlohmann::json jrows = nlohmann::json::array();
    for (const CompareRow& r : result.rows)
        jrows.push_back({{"seed", r.seed},
                         {"top1_a", r.top1_a},
                         {"top1_b", r.top1_b},
                         {"contrast_a", r.contrast_a},
                         {"contrast_b", r.contrast_b},
                         {"template_drop_a", r.drop_a},
                         {"template_drop_b", r.drop_b}});
    nlohmann::json jout;
    jout["rows"] = jrows;
    jout["mean"] = {{"top1_a", result.mean.top1_a},       {"top1_b", result.mean.top1_b},
                    {"contrast_a", result.mean.contrast_a}, {"contrast_b", result.mean.contrast_b},
                    {"template_drop_a", result.mean.drop_a}, {"template_drop_b", result.mean.drop_b}};
    detail::write_json_file(out / "compare.json", jout);

    nlohmann::json inputs;
    inputs["config_a"] = train_config_to_json(cfg_a);
    inputs["config_b"] = train_config_to_json(cfg_b);
    inputs["seeds"] = args.seeds;
    inputs["dataset_dir"] = args.data_dir;
    inputs["dataset_hash"] = detail::dataset_hash(args.data_dir);
    detail::write_json_file(out / "manifest.json",
                            clock.finish("compare", inputs, {"compare.csv", "compare.json"}));

    std::printf("compare: mean top1 %.4f vs %.4f over %zu seeds; table at %s\n",
                result.mean.top1_a, result.mean.top1_b, result.rows.size(),
                (out / "compare.csv").string().c_str());
    return kExitOk;
}

// ---------- argument parsing ----------

inline int run(int argc, const char* const* argv) {
    CLI::App app{"Cross-modal contrastive training laboratory"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic paired dataset");
    gen->add_option("--spec", gen_args.spec_path, "JSON data spec")->required();
    gen->add_option("--out", gen_args.out_dir, "output directory")->required();
    gen->add_flag("--force", gen_args.force, "allow writing into a non-empty directory");

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "Train encoders on a dataset");
    tr->add_option("--config", train_args.config_path, "JSON train config")->required();
    tr->add_option("--data", train_args.data_dir, "dataset directory")->required();
    tr->add_option("--out", train_args.out_dir, "output directory")->required();
    tr->add_flag("--force", train_args.force, "allow writing into a non-empty directory");

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "Zero-shot evaluation of a checkpoint");
    ev->add_option("--checkpoint", eval_args.checkpoint_dir, "checkpoint directory")->required();
    ev->add_option("--data", eval_args.data_dir, "dataset directory")->required();
    ev->add_option("--out", eval_args.out_dir, "output directory")->required();
    ev->add_flag("--classify", eval_args.do_classify, "zero-shot classification accuracy");
    ev->add_flag("--retrieval", eval_args.do_retrieval, "recall@k retrieval");
    ev->add_flag("--align-matrix", eval_args.do_align_matrix, "alignment matrix CSV");
    ev->add_option("--template-sweep", eval_args.template_sweep_k,
                   "template counts, e.g. 1,5,10")
        ->delimiter(',');
    ev->add_option("--k", eval_args.retrieval_k, "retrieval cutoffs (default 1,5,10)")
        ->delimiter(',');
    ev->add_option("--class-embed", eval_args.class_embed,
                   "normalized_mean (default) or raw_mean");
    ev->add_flag("--force", eval_args.force, "allow writing into a non-empty directory");

    GradCheckArgs gc_args;
    CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    gc->add_option("--cases", gc_args.cases, "number of random configurations (default 100)");
    gc->add_option("--seed", gc_args.seed, "RNG seed (default 7)");
    gc->add_option("--epsilon", gc_args.epsilon, "finite-difference step (default 1e-5)");
    gc->add_option("--threshold", gc_args.threshold, "failure threshold (default 1e-5)");
    gc->add_flag("--corrupt", gc_args.corrupt)->group(""); // hidden negative-control hook

    CompareArgs cmp_args;
    CLI::App* cmp = app.add_subcommand("compare", "Paired training comparison of two configs");
    cmp->add_option("--config-a", cmp_args.config_a_path, "first JSON train config")->required();
    cmp->add_option("--config-b", cmp_args.config_b_path, "second JSON train config")->required();
    cmp->add_option("--data", cmp_args.data_dir, "dataset directory")->required();
    cmp->add_option("--out", cmp_args.out_dir, "output directory")->required();
    cmp->add_option("--seeds", cmp_args.seeds, "seed list (default 1,2,3,4,5)")->delimiter(',');
    cmp->add_flag("--force", cmp_args.force, "allow writing into a non-empty directory");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (tr->parsed()) return cmd_train(train_args);
        if (ev->parsed()) return cmd_eval(eval_args);
        if (gc->parsed()) return cmd_gradcheck(gc_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
        return kExitValidation;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitValidation;
    }
}

/// Convenience overload for in-process tests.
inline int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("cwcl");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace cwcl::cli
