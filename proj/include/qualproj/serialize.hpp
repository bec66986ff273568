#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qualproj/datasets.hpp"
#include "qualproj/error.hpp"
#include "qualproj/mlp.hpp"
#include "qualproj/projector.hpp"

// Artifact serialization: versioned model JSON, projector-bank directories
// with a manifest, and projection-set caches (QPDS + labels + meta).
// Parameters survive a save/load round trip exactly; nlohmann emits
// shortest-round-trip decimal for doubles.

namespace qualproj {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

inline std::string activation_name(ActivationTag tag) {
    switch (tag) {
    case ActivationTag::Sigmoid: return "sigmoid";
    case ActivationTag::Softmax: return "softmax";
    case ActivationTag::Linear: return "linear";
    }
    return "?";
}

inline ActivationKind activation_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sigmoid") return ActivationKind::biased_sigmoid(j.value("beta", 0.0));
    if (kind == "softmax") return ActivationKind::softmax();
    if (kind == "linear") return ActivationKind::linear();
    throw ParseError("unknown activation kind: " + kind);
}

inline json activation_to_json(const ActivationKind& a) {
    json j{{"kind", activation_name(a.tag)}};
    if (a.tag == ActivationTag::Sigmoid) j["beta"] = a.beta;
    return j;
}

inline json model_to_json(const Mlp& net) {
    net.validate();
    json j;
    j["format_version"] = kModelFormatVersion;
    std::vector<std::size_t> sizes{net.input_dim};
    for (const auto& l : net.layers) sizes.push_back(l.fan_out());
    j["layer_sizes"] = sizes;
    j["activations"] = json::array();
    j["weights"] = json::array();
    j["biases"] = json::array();
    for (const auto& l : net.layers) {
        j["activations"].push_back(activation_to_json(l.activation));
        j["weights"].push_back(l.weights.data); // row-major flat
        j["biases"].push_back(l.biases);
    }
    if (net.init_seed) {
        j["seed_provenance"] = {{"init_seed", *net.init_seed},
                                {"scheme", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), splitmix64"}};
    } else {
        j["seed_provenance"] = nullptr;
    }
    return j;
}

inline Mlp model_from_json(const json& j, const std::string& name) {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kModelFormatVersion) {
        throw ParseError(name + ": unsupported model format_version");
    }
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes.size() < 2) throw ParseError(name + ": layer_sizes too short");
    Mlp net;
    net.input_dim = sizes[0];
    const auto& acts = j.at("activations");
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (acts.size() != sizes.size() - 1 || weights.size() != acts.size() ||
        biases.size() != acts.size()) {
        throw ParseError(name + ": inconsistent layer arrays");
    }
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        Layer l;
        l.activation = activation_from_json(acts[k]);
        l.weights = Matrix(sizes[k + 1], sizes[k]);
        const auto flat = weights[k].get<std::vector<double>>();
        if (flat.size() != l.weights.data.size()) {
            throw ParseError(name + ": weight array size mismatch at layer " + std::to_string(k));
        }
        l.weights.data = flat;
        l.biases = biases[k].get<std::vector<double>>();
        if (l.biases.size() != sizes[k + 1]) {
            throw ParseError(name + ": bias array size mismatch at layer " + std::to_string(k));
        }
        net.layers.push_back(std::move(l));
    }
    if (j.contains("seed_provenance") && j.at("seed_provenance").is_object()) {
        const auto& prov = j.at("seed_provenance");
        if (prov.contains("init_seed")) net.init_seed = prov.at("init_seed").get<std::uint64_t>();
    }
    net.validate();
    return net;
}

inline void save_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing: " + path.string());
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": invalid JSON: " + e.what());
    }
    return j;
}

inline void save_model(const Mlp& net, const std::filesystem::path& path) {
    save_json(model_to_json(net), path);
}

inline Mlp load_model(const std::filesystem::path& path) {
    return model_from_json(load_json(path), path.string());
}

// ---------------------------------------------------------------------------
// Bank directory: manifest.json + projector_&&&.json
// ---------------------------------------------------------------------------

inline std::string projector_file_name(std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "projector_%03u.json", static_cast<unsigned>(i));
    return buf;
}

inline void save_bank(const ProjectorBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format_version"] = kManifestFormatVersion;
    manifest["bank_fingerprint"] = bank.fingerprint;
    manifest["size"] = bank.size();
    manifest["projection_image_ids"] = json::array();
    for (const auto& e : bank.projectors) manifest["projection_image_ids"].push_back(e.image_id);
    if (bank.projection_dither) {
        manifest["projection_dither"] = {{"replicates", bank.projection_dither->replicates},
                                         {"amplitude", bank.projection_dither->amplitude},
                                         {"seed", bank.projection_dither->seed}};
    } else {
        manifest["projection_dither"] = nullptr;
    }
    save_json(manifest, dir / "manifest.json");
    for (std::size_t i = 0; i < bank.size(); ++i) {
        save_model(bank.projectors[i].net, dir / projector_file_name(i));
    }
}

inline ProjectorBank load_bank(const std::filesystem::path& dir) {
    const json manifest = load_json(dir / "manifest.json");
    if (manifest.at("format_version").get<int>() != kManifestFormatVersion) {
        throw ParseError(dir.string() + ": unsupported manifest format_version");
    }
    ProjectorBank bank;
    bank.fingerprint = manifest.at("bank_fingerprint").get<std::uint64_t>();
    const auto ids = manifest.at("projection_image_ids").get<std::vector<std::size_t>>();
    const std::size_t n = manifest.at("size").get<std::size_t>();
    if (ids.size() != n) throw ParseError(dir.string() + ": manifest id count mismatch");
    if (!manifest.at("projection_dither").is_null()) {
        const auto& d = manifest.at("projection_dither");
        bank.projection_dither = DitherConfig{d.at("replicates").get<std::size_t>(),
                                              d.at("amplitude").get<double>(),
                                              d.at("seed").get<std::uint64_t>()};
    }
    bank.projectors.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        bank.projectors[i].net = load_model(dir / projector_file_name(i));
        bank.projectors[i].image_id = ids[i];
    }
    return bank;
}

// ---------------------------------------------------------------------------
// Projection-set cache: <stem>.qpds + <stem>.labels + <stem>.meta.json
// ---------------------------------------------------------------------------

inline void save_projection_set(const ProjectionSet& set, const std::filesystem::path& stem) {
    write_qpds(stem.string() + ".qpds", set.vectors);
    write_labels_sidecar(stem.string() + ".labels", set.labels);
    save_json(json{{"bank_fingerprint", set.bank_fingerprint},
                   {"count", set.size()},
                   {"dim", set.dim()}},
              stem.string() + ".meta.json");
}

inline ProjectionSet load_projection_set(const std::filesystem::path& stem) {
    ProjectionSet set;
    set.vectors = read_qpds(stem.string() + ".qpds");
    set.labels = read_labels_sidecar(stem.string() + ".labels");
    if (set.labels.size() != set.vectors.size()) {
        throw ParseError(stem.string() + ": projection/label count mismatch");
    }
    const json meta = load_json(stem.string() + ".meta.json");
    set.bank_fingerprint = meta.at("bank_fingerprint").get<std::uint64_t>();
    return set;
}

} // namespace qualproj
