#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/optim.hpp"
#include "cwcl/zeroshot.hpp"

namespace cwcl {

namespace detail {

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError(path.string() + ": top level must be an object");
    return j;
}

/// Hard failure on unknown keys: a typo in a hyperparameter name must
/// never silently fall back to a default.
inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& what) {
    for (const auto& item : j.items())
        if (!known.contains(item.key()))
            throw ValidationError(what + ": unknown key '" + item.key() + "'");
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError("bad value for key '" + key + "'");
    }
}

} // namespace detail

// ---------- data-generation spec files ----------

struct DataGenConfig {
    SyntheticSpec spec;
    std::uint64_t seed = 1;
};

inline DataGenConfig parse_data_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j,
        {"num_superclasses", "subclasses_per_class", "samples_per_cell", "latent_dim",
         "noise_sigma", "v_noise_sigma", "subclass_offset_scale", "u_feature_dim",
         "v_feature_dim", "u_map_seed", "v_map_seed", "train_fraction",
         "held_out_class_fraction", "templates_per_class", "template_jitter", "seed"},
        "data spec");
    DataGenConfig cfg;
    SyntheticSpec d; // defaults
    cfg.spec.num_superclasses = detail::get_or(j, "num_superclasses", d.num_superclasses);
    cfg.spec.subclasses_per_class = detail::get_or(j, "subclasses_per_class", d.subclasses_per_class);
    cfg.spec.samples_per_cell = detail::get_or(j, "samples_per_cell", d.samples_per_cell);
    cfg.spec.latent_dim = detail::get_or(j, "latent_dim", d.latent_dim);
    cfg.spec.noise_sigma = detail::get_or(j, "noise_sigma", d.noise_sigma);
    cfg.spec.v_noise_sigma = detail::get_or(j, "v_noise_sigma", d.v_noise_sigma);
    cfg.spec.subclass_offset_scale =
        detail::get_or(j, "subclass_offset_scale", d.subclass_offset_scale);
    cfg.spec.u_feature_dim = detail::get_or(j, "u_feature_dim", d.u_feature_dim);
    cfg.spec.v_feature_dim = detail::get_or(j, "v_feature_dim", d.v_feature_dim);
    cfg.spec.u_map_seed = detail::get_or(j, "u_map_seed", d.u_map_seed);
    cfg.spec.v_map_seed = detail::get_or(j, "v_map_seed", d.v_map_seed);
    cfg.spec.train_fraction = detail::get_or(j, "train_fraction", d.train_fraction);
    cfg.spec.held_out_class_fraction =
        detail::get_or(j, "held_out_class_fraction", d.held_out_class_fraction);
    cfg.spec.templates_per_class = detail::get_or(j, "templates_per_class", d.templates_per_class);
    cfg.spec.template_jitter = detail::get_or(j, "template_jitter", d.template_jitter);
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
    cfg.spec.validate();
    return cfg;
}

inline nlohmann::json data_config_to_json(const DataGenConfig& cfg) {
    return {{"num_superclasses", cfg.spec.num_superclasses},
            {"subclasses_per_class", cfg.spec.subclasses_per_class},
            {"samples_per_cell", cfg.spec.samples_per_cell},
            {"latent_dim", cfg.spec.latent_dim},
            {"noise_sigma", cfg.spec.noise_sigma},
            {"v_noise_sigma", cfg.spec.v_noise_sigma},
            {"subclass_offset_scale", cfg.spec.subclass_offset_scale},
            {"u_feature_dim", cfg.spec.u_feature_dim},
            {"v_feature_dim", cfg.spec.v_feature_dim},
            {"u_map_seed", cfg.spec.u_map_seed},
            {"v_map_seed", cfg.spec.v_map_seed},
            {"train_fraction", cfg.spec.train_fraction},
            {"held_out_class_fraction", cfg.spec.held_out_class_fraction},
            {"templates_per_class", cfg.spec.templates_per_class},
            {"template_jitter", cfg.spec.template_jitter},
            {"seed", cfg.seed}};
}

// ---------- train config files ----------

struct TrainFileConfig {
    TrainConfig train;
    ClassEmbedMode class_embed = ClassEmbedMode::normalized_mean;
};

inline WeightKind weight_kind_from_string(const std::string& s) {
    if (s == "linear") return WeightKind::linear;
    if (s == "softmax") return WeightKind::softmax;
    if (s == "indicator") return WeightKind::indicator;
    if (s == "class_indicator") return WeightKind::class_indicator;
    throw ValidationError("unknown weight kind '" + s + "'");
}

inline TrainFileConfig parse_train_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j,
        {"epochs", "batch_size", "learning_rate", "warmup_steps", "grad_clip_norm", "loss",
         "weight_kind", "lock_mode", "tau", "tau_learnable", "beta1", "beta2", "adam_eps",
         "weight_decay", "seed", "eval_zero_shot", "u_hidden", "teacher_hidden",
         "teacher_out_dim", "embed_dim", "activation", "class_embed"},
        "train config");
    TrainFileConfig cfg;
    TrainConfig d;
    TrainConfig& t = cfg.train;
    t.epochs = detail::get_or(j, "epochs", d.epochs);
    t.batch_size = detail::get_or(j, "batch_size", d.batch_size);
    t.learning_rate = detail::get_or(j, "learning_rate", d.learning_rate);
    t.warmup_steps = detail::get_or(j, "warmup_steps", d.warmup_steps);
    t.grad_clip_norm = detail::get_or(j, "grad_clip_norm", d.grad_clip_norm);

    const std::string loss = detail::get_or<std::string>(j, "loss", "cwcl");
    if (loss == "cl") {
        t.loss = LossKind::cl;
    } else if (loss == "cwcl") {
        t.loss = LossKind::cwcl;
    } else {
        throw ValidationError("train config: loss must be 'cl' or 'cwcl', got '" + loss + "'");
    }
    t.weight_kind = weight_kind_from_string(detail::get_or<std::string>(j, "weight_kind", "linear"));
    t.lock_mode =
        detail::lock_mode_from_string(detail::get_or<std::string>(j, "lock_mode", "lock_v"));
    t.tau = detail::get_or(j, "tau", d.tau);
    t.tau_learnable = detail::get_or(j, "tau_learnable", d.tau_learnable);
    t.adamw.beta1 = detail::get_or(j, "beta1", d.adamw.beta1);
    t.adamw.beta2 = detail::get_or(j, "beta2", d.adamw.beta2);
    t.adamw.eps = detail::get_or(j, "adam_eps", d.adamw.eps);
    t.adamw.weight_decay = detail::get_or(j, "weight_decay", d.adamw.weight_decay);
    t.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    t.eval_zero_shot = detail::get_or(j, "eval_zero_shot", d.eval_zero_shot);
    t.u_hidden = detail::get_or(j, "u_hidden", d.u_hidden);
    t.teacher_hidden = detail::get_or(j, "teacher_hidden", d.teacher_hidden);
    t.teacher_out_dim = detail::get_or(j, "teacher_out_dim", d.teacher_out_dim);
    t.embed_dim = detail::get_or(j, "embed_dim", d.embed_dim);

    const std::string act = detail::get_or<std::string>(j, "activation", "tanh");
    if (act == "tanh") {
        t.activation = Activation::tanh;
    } else if (act == "relu") {
        t.activation = Activation::relu;
    } else {
        throw ValidationError("train config: activation must be 'tanh' or 'relu'");
    }
    const std::string cem = detail::get_or<std::string>(j, "class_embed", "normalized_mean");
    if (cem == "normalized_mean") {
        cfg.class_embed = ClassEmbedMode::normalized_mean;
    } else if (cem == "raw_mean") {
        cfg.class_embed = ClassEmbedMode::raw_mean;
    } else {
        throw ValidationError("train config: class_embed must be 'normalized_mean' or 'raw_mean'");
    }
    t.validate();
    return cfg;
}

inline nlohmann::json train_config_to_json(const TrainFileConfig& cfg) {
    const TrainConfig& t = cfg.train;
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"warmup_steps", t.warmup_steps},
            {"grad_clip_norm", t.grad_clip_norm},
            {"loss", to_string(t.loss)},
            {"weight_kind", to_string(t.weight_kind)},
            {"lock_mode", to_string(t.lock_mode)},
            {"tau", t.tau},
            {"tau_learnable", t.tau_learnable},
            {"beta1", t.adamw.beta1},
            {"beta2", t.adamw.beta2},
            {"adam_eps", t.adamw.eps},
            {"weight_decay", t.adamw.weight_decay},
            {"seed", t.seed},
            {"eval_zero_shot", t.eval_zero_shot},
            {"u_hidden", t.u_hidden},
            {"teacher_hidden", t.teacher_hidden},
            {"teacher_out_dim", t.teacher_out_dim},
            {"embed_dim", t.embed_dim},
            {"activation", to_string(t.activation)},
            {"class_embed", to_string(cfg.class_embed)}};
}

// ---------- dataset manifests ----------

inline nlohmann::json dataset_manifest_to_json(const PairedDataset& ds, const DataGenConfig& cfg) {
    std::size_t train_count = 0;
    for (Split s : ds.split)
        if (s == Split::train) ++train_count;
    nlohmann::json j;
    j["format"] = "cwcl-dataset-v1";
    j["spec"] = data_config_to_json(cfg);
    j["seed"] = ds.seed;
    j["counts"] = {{"total", ds.size()},
                   {"train", train_count},
                   {"eval", ds.size() - train_count},
                   {"classes", ds.num_classes},
                   {"templates_per_class", ds.templates_per_class}};
    j["dims"] = {{"u", ds.u_features.cols}, {"v", ds.v_features.cols}};
    j["superclass"] = ds.superclass;
    j["subclass"] = ds.subclass;
    std::vector<int> split_tags;
    for (Split s : ds.split) split_tags.push_back(s == Split::train ? 0 : 1);
    j["split"] = split_tags;
    return j;
}

/// Load a dataset directory written by the gen-data command.
inline PairedDataset load_dataset(const std::filesystem::path& dir) {
    const nlohmann::json j = detail::load_json_file(dir / "dataset.json");
    if (j.value("format", "") != "cwcl-dataset-v1")
        throw ValidationError("load_dataset: unrecognized dataset format in " + dir.string());

    PairedDataset ds;
    ds.u_features = read_tensor_file(dir / "u.cwt");
    ds.v_features = read_tensor_file(dir / "v.cwt");
    ds.templates = read_tensor_file(dir / "templates.cwt");
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.num_classes = j.at("counts").at("classes").get<std::size_t>();
    ds.templates_per_class = j.at("counts").at("templates_per_class").get<std::size_t>();
    ds.superclass = j.at("superclass").get<std::vector<int>>();
    ds.subclass = j.at("subclass").get<std::vector<int>>();
    for (int tag : j.at("split").get<std::vector<int>>())
        ds.split.push_back(tag == 0 ? Split::train : Split::eval);

    if (ds.superclass.size() != ds.u_features.rows || ds.split.size() != ds.u_features.rows ||
        ds.subclass.size() != ds.u_features.rows || ds.v_features.rows != ds.u_features.rows)
        throw ValidationError("load_dataset: inconsistent sizes in " + dir.string());
    if (ds.templates.rows != ds.num_classes * ds.templates_per_class)
        throw ValidationError("load_dataset: template table has wrong row count");
    return ds;
}

} // namespace cwcl
