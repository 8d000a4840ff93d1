#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwcl/data.hpp"
#include "cwcl/encoders.hpp"
#include "cwcl/errors.hpp"

namespace cwcl {

namespace detail {

inline void save_mlp(const std::filesystem::path& dir, const std::string& prefix, const Mlp& mlp,
                     nlohmann::json& manifest) {
    manifest["layers"] = mlp.layers.size();
    manifest["activation"] = to_string(mlp.activation);
    manifest["normalize_output"] = mlp.normalize_output;
    nlohmann::json shapes = nlohmann::json::array();
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const std::string stem = prefix + "." + std::to_string(l);
        write_tensor_file(dir / (stem + ".weight.cwt"), mlp.layers[l].weight);
        write_tensor_file(dir / (stem + ".bias.cwt"), mlp.layers[l].bias);
        shapes.push_back({mlp.layers[l].weight.rows, mlp.layers[l].weight.cols});
    }
    manifest["shapes"] = shapes;
}

inline Mlp load_mlp(const std::filesystem::path& dir, const std::string& prefix,
                    const nlohmann::json& manifest) {
    Mlp mlp;
    const std::string act = manifest.at("activation").get<std::string>();
    if (act == "tanh") {
        mlp.activation = Activation::tanh;
    } else if (act == "relu") {
        mlp.activation = Activation::relu;
    } else {
        throw ValidationError("checkpoint: unknown activation '" + act + "'");
    }
    mlp.normalize_output = manifest.at("normalize_output").get<bool>();
    const std::size_t n_layers = manifest.at("layers").get<std::size_t>();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string stem = prefix + "." + std::to_string(l);
        Linear layer;
        layer.weight = read_tensor_file(dir / (stem + ".weight.cwt"));
        layer.bias = read_tensor_file(dir / (stem + ".bias.cwt"));
        if (layer.bias.rows != 1 || layer.bias.cols != layer.weight.cols)
            throw ValidationError("checkpoint: inconsistent shapes for " + stem);
        mlp.layers.push_back(std::move(layer));
    }
    if (mlp.layers.empty()) throw ValidationError("checkpoint: empty mlp " + prefix);
    return mlp;
}

inline LockMode lock_mode_from_string(const std::string& s) {
    if (s == "none") return LockMode::none;
    if (s == "lock_u") return LockMode::lock_u;
    if (s == "lock_v") return LockMode::lock_v;
    if (s == "lock_both") return LockMode::lock_both;
    throw ValidationError("unknown lock mode '" + s + "'");
}

} // namespace detail

/// Serialize a model into `dir`: one tensor file per parameter plus a
/// checkpoint.json manifest with shapes, activation, lock mode, and tau.
inline void save_checkpoint(const std::filesystem::path& dir, const Model& model) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "cwcl-checkpoint-v1";
    detail::save_mlp(dir, "u", model.u_encoder, manifest["u_encoder"]);
    detail::save_mlp(dir, "v.body", model.v_tower.body, manifest["v_body"]);
    write_tensor_file(dir / "v.projection.weight.cwt", model.v_tower.projection.weight);
    write_tensor_file(dir / "v.projection.bias.cwt", model.v_tower.projection.bias);
    manifest["v_projection"] = {{"in", model.v_tower.projection.weight.rows},
                                {"out", model.v_tower.projection.weight.cols}};
    manifest["tau"] = {{"value", model.temperature.tau},
                       {"learnable", model.temperature.learnable}};
    manifest["lock_mode"] = to_string(model.lock);

    std::ofstream out(dir / "checkpoint.json");
    if (!out) throw IoError("save_checkpoint: cannot open manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw IoError("load_checkpoint: no checkpoint.json in " + dir.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("load_checkpoint: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "cwcl-checkpoint-v1")
        throw ValidationError("load_checkpoint: unrecognized checkpoint format");

    Model model;
    model.u_encoder = detail::load_mlp(dir, "u", manifest.at("u_encoder"));
    model.v_tower.body = detail::load_mlp(dir, "v.body", manifest.at("v_body"));
    model.v_tower.projection.weight = read_tensor_file(dir / "v.projection.weight.cwt");
    model.v_tower.projection.bias = read_tensor_file(dir / "v.projection.bias.cwt");
    model.temperature.tau = manifest.at("tau").at("value").get<double>();
    model.temperature.learnable = manifest.at("tau").at("learnable").get<bool>();
    model.lock = detail::lock_mode_from_string(manifest.at("lock_mode").get<std::string>());
    return model;
}

} // namespace cwcl
