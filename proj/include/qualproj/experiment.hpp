#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qualproj/classifier.hpp"
#include "qualproj/datasets.hpp"
#include "qualproj/dither.hpp"
#include "qualproj/error.hpp"
#include "qualproj/projector.hpp"
#include "qualproj/serialize.hpp"

// End-to-end orchestration of the three-way comparison: plain-sigmoid
// projectors, biased-sigmoid projectors, and biased-sigmoid projectors with
// parallel dither at training and projection time. All variants share the
// projection-image selection, the MNIST splits and the classifier's initial
// weights, so the error curves are directly comparable.

namespace qualproj {

enum class Variant { Plain, Biased, BiasedDither };

inline const char* variant_name(Variant v) {
    switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Biased: return "biased";
    case Variant::BiasedDither: return "biased_dither";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& name) {
    if (name == "plain") return Variant::Plain;
    if (name == "biased") return Variant::Biased;
    if (name == "biased_dither") return Variant::BiasedDither;
    throw ConfigError("unknown variant: " + name +
                      " (expected plain|biased|biased_dither)");
}

struct VariantSpec {
    Variant id = Variant::Plain;
    ActivationKind projector_activation = ActivationKind::plain_sigmoid();
    bool train_dither = false;
    bool projection_dither = false;

    std::string name() const { return variant_name(id); }

    static VariantSpec preset(Variant v, double beta) {
        switch (v) {
        case Variant::Plain:
            return {v, ActivationKind::plain_sigmoid(), false, false};
        case Variant::Biased:
            return {v, ActivationKind::biased_sigmoid(beta), false, false};
        case Variant::BiasedDither:
            return {v, ActivationKind::biased_sigmoid(beta), true, true};
        }
        throw ConfigError("unknown variant");
    }
};

struct ExperimentSeeds {
    std::uint64_t selection = 101;
    std::uint64_t bank_base = 202;
    std::uint64_t classifier_init = 303;
    std::uint64_t dither = 404;
};

struct DataPaths {
    std::filesystem::path mnist_train_images = "data/train-images-idx3-ubyte";
    std::filesystem::path mnist_train_labels = "data/train-labels-idx1-ubyte";
    std::filesystem::path mnist_test_images = "data/t10k-images-idx3-ubyte";
    std::filesystem::path mnist_test_labels = "data/t10k-labels-idx1-ubyte";
    std::vector<std::filesystem::path> cifar_batches = {
        "data/cifar-10-batches-bin/data_batch_1.bin"};
    // logical name -> URL for the prepare-data fetch helper
    std::map<std::string, std::string> fetch_urls = {
        {"mnist_train_images",
         "https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz"},
        {"mnist_train_labels",
         "https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz"},
        {"mnist_test_images",
         "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz"},
        {"mnist_test_labels",
         "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz"},
        {"cifar_archive", "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"},
    };

    void rebase(const std::filesystem::path& data_dir) {
        mnist_train_images = data_dir / "train-images-idx3-ubyte";
        mnist_train_labels = data_dir / "train-labels-idx1-ubyte";
        mnist_test_images = data_dir / "t10k-images-idx3-ubyte";
        mnist_test_labels = data_dir / "t10k-labels-idx1-ubyte";
        cifar_batches = {data_dir / "cifar-10-batches-bin" / "data_batch_1.bin"};
    }
};

/// Every knob of the experiment; defaults are the reference configuration
/// (100 projection images, 1000/10,000 MNIST split, 50 projector and 150
/// classifier iterations, learning rate 1, dither 100x at half-range 0.5).
struct ExperimentConfig {
    DataPaths data;
    std::size_t n_projection_images = 100;
    std::size_t n_train = 1000;
    ExperimentSeeds seeds;
    std::size_t dither_replicates = 100;
    double dither_amplitude = 0.5; // half-range; "unit scale" read as unit range
    double beta = 5.0;
    TrainConfig projector_train{1.0, 50, 0};
    TrainConfig classifier_train{1.0, 150, 0};
    WeightInit projector_weight_init = WeightInit::InvSqrtFanIn;
    WeightInit classifier_weight_init = WeightInit::InvSqrtFanIn;
    std::filesystem::path output_dir = "out";
    unsigned workers = 1;
    bool use_cache = true;

    DitherConfig dither_config() const {
        return DitherConfig{dither_replicates, dither_amplitude, seeds.dither};
    }

    void validate() const {
        if (n_projection_images < 1) throw ConfigError("config: n_projection_images must be >= 1");
        if (n_train < 1) throw ConfigError("config: n_train must be >= 1");
        dither_config().validate();
        if (!std::isfinite(beta)) throw ConfigError("config: beta must be finite");
        projector_train.validate();
        classifier_train.validate();
    }
};

// ---------------------------------------------------------------------------
// Config JSON (unknown keys rejected)
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) { ok = true; break; }
        }
        if (!ok) throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
}

} // namespace detail

inline json experiment_config_to_json(const ExperimentConfig& cfg) {
    json data{{"mnist_train_images", cfg.data.mnist_train_images.string()},
              {"mnist_train_labels", cfg.data.mnist_train_labels.string()},
              {"mnist_test_images", cfg.data.mnist_test_images.string()},
              {"mnist_test_labels", cfg.data.mnist_test_labels.string()},
              {"cifar_batches", json::array()},
              {"fetch_urls", json::object()}};
    for (const auto& p : cfg.data.cifar_batches) data["cifar_batches"].push_back(p.string());
    for (const auto& [k, v] : cfg.data.fetch_urls) data["fetch_urls"][k] = v;
    return json{
        {"data", data},
        {"n_projection_images", cfg.n_projection_images},
        {"n_train", cfg.n_train},
        {"seeds",
         {{"selection", cfg.seeds.selection},
          {"bank_base", cfg.seeds.bank_base},
          {"classifier_init", cfg.seeds.classifier_init},
          {"dither", cfg.seeds.dither}}},
        {"dither", {{"replicates", cfg.dither_replicates}, {"amplitude", cfg.dither_amplitude}}},
        {"beta", cfg.beta},
        {"projector",
         {{"iterations", cfg.projector_train.iterations},
          {"learning_rate", cfg.projector_train.learning_rate},
          {"weight_init", weight_init_name(cfg.projector_weight_init)}}},
        {"classifier",
         {{"iterations", cfg.classifier_train.iterations},
          {"learning_rate", cfg.classifier_train.learning_rate},
          {"weight_init", weight_init_name(cfg.classifier_weight_init)}}},
        {"output_dir", cfg.output_dir.string()},
        {"workers", cfg.workers},
        {"use_cache", cfg.use_cache}};
}

/// Applies a config JSON on top of `base`. Every field is optional; unknown
/// keys anywhere are rejected.
inline ExperimentConfig experiment_config_from_json(const json& j,
                                                    ExperimentConfig base = {}) {
    detail::reject_unknown_keys(j,
                                {"data", "n_projection_images", "n_train", "seeds", "dither",
                                 "beta", "projector", "classifier", "output_dir", "workers",
                                 "use_cache"},
                                "top level");
    ExperimentConfig cfg = std::move(base);
    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::reject_unknown_keys(d,
                                    {"mnist_train_images", "mnist_train_labels",
                                     "mnist_test_images", "mnist_test_labels", "cifar_batches",
                                     "fetch_urls"},
                                    "data");
        if (d.contains("mnist_train_images")) cfg.data.mnist_train_images = d.at("mnist_train_images").get<std::string>();
        if (d.contains("mnist_train_labels")) cfg.data.mnist_train_labels = d.at("mnist_train_labels").get<std::string>();
        if (d.contains("mnist_test_images")) cfg.data.mnist_test_images = d.at("mnist_test_images").get<std::string>();
        if (d.contains("mnist_test_labels")) cfg.data.mnist_test_labels = d.at("mnist_test_labels").get<std::string>();
        if (d.contains("cifar_batches")) {
            cfg.data.cifar_batches.clear();
            for (const auto& p : d.at("cifar_batches")) {
                cfg.data.cifar_batches.emplace_back(p.get<std::string>());
            }
        }
        if (d.contains("fetch_urls")) {
            cfg.data.fetch_urls.clear();
            for (const auto& [k, v] : d.at("fetch_urls").items()) {
                cfg.data.fetch_urls[k] = v.get<std::string>();
            }
        }
    }
    if (j.contains("n_projection_images")) cfg.n_projection_images = j.at("n_projection_images").get<std::size_t>();
    if (j.contains("n_train")) cfg.n_train = j.at("n_train").get<std::size_t>();
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        detail::reject_unknown_keys(s, {"selection", "bank_base", "classifier_init", "dither"},
                                    "seeds");
        if (s.contains("selection")) cfg.seeds.selection = s.at("selection").get<std::uint64_t>();
        if (s.contains("bank_base")) cfg.seeds.bank_base = s.at("bank_base").get<std::uint64_t>();
        if (s.contains("classifier_init")) cfg.seeds.classifier_init = s.at("classifier_init").get<std::uint64_t>();
        if (s.contains("dither")) cfg.seeds.dither = s.at("dither").get<std::uint64_t>();
    }
    if (j.contains("dither")) {
        const json& d = j.at("dither");
        detail::reject_unknown_keys(d, {"replicates", "amplitude"}, "dither");
        if (d.contains("replicates")) cfg.dither_replicates = d.at("replicates").get<std::size_t>();
        if (d.contains("amplitude")) cfg.dither_amplitude = d.at("amplitude").get<double>();
    }
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("projector")) {
        const json& p = j.at("projector");
        detail::reject_unknown_keys(p, {"iterations", "learning_rate", "weight_init"},
                                    "projector");
        if (p.contains("iterations")) cfg.projector_train.iterations = p.at("iterations").get<std::size_t>();
        if (p.contains("learning_rate")) cfg.projector_train.learning_rate = p.at("learning_rate").get<double>();
        if (p.contains("weight_init")) {
            cfg.projector_weight_init = weight_init_from_name(p.at("weight_init").get<std::string>());
        }
    }
    if (j.contains("classifier")) {
        const json& c = j.at("classifier");
        detail::reject_unknown_keys(c, {"iterations", "learning_rate", "weight_init"},
                                    "classifier");
        if (c.contains("iterations")) cfg.classifier_train.iterations = c.at("iterations").get<std::size_t>();
        if (c.contains("learning_rate")) cfg.classifier_train.learning_rate = c.at("learning_rate").get<double>();
        if (c.contains("weight_init")) {
            cfg.classifier_weight_init = weight_init_from_name(c.at("weight_init").get<std::string>());
        }
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<unsigned>();
    if (j.contains("use_cache")) cfg.use_cache = j.at("use_cache").get<bool>();
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

/// Inputs shared by all variants: the selected projection images and the
/// MNIST splits.
struct ExperimentContext {
    ProjectionImageSelection selection;
    LabeledDataset mnist_train; // first n_train examples
    LabeledDataset mnist_test;
};

inline ExperimentContext build_context(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentContext ctx;
    const auto cifar = load_cifar10(cfg.data.cifar_batches);
    ctx.selection = select_projection_images(cifar, cfg.n_projection_images, cfg.seeds.selection);
    const auto train_full = load_mnist(cfg.data.mnist_train_images, cfg.data.mnist_train_labels);
    ctx.mnist_train = select_training_subset(train_full, cfg.n_train);
    ctx.mnist_test = load_mnist(cfg.data.mnist_test_images, cfg.data.mnist_test_labels);
    return ctx;
}

inline ProjectorConfig projector_config_for(const VariantSpec& spec,
                                            const ExperimentConfig& cfg) {
    ProjectorConfig pc;
    pc.hidden = 100;
    pc.activation = spec.projector_activation;
    pc.train = cfg.projector_train;
    pc.weight_init = cfg.projector_weight_init;
    if (spec.train_dither) pc.dither = cfg.dither_config();
    return pc;
}

namespace detail {

inline std::uint64_t dataset_hash(const LabeledDataset& ds) {
    std::uint64_t h = rng::fnv1a("qualproj.dataset.v1", 19);
    const std::uint64_t n = ds.size();
    h = rng::fnv1a(&n, sizeof n, h);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        h = rng::fnv1a(ds.images[i].data(), ds.images[i].size() * sizeof(double), h);
        const std::uint32_t lab = static_cast<std::uint32_t>(ds.labels[i]);
        h = rng::fnv1a(&lab, sizeof lab, h);
    }
    return h;
}

inline std::uint64_t projection_cache_key(std::uint64_t bank_fp,
                                          const std::optional<DitherConfig>& dither,
                                          std::uint64_t data_hash) {
    std::uint64_t h = rng::fnv1a("qualproj.projection.v1", 22);
    h = rng::fnv1a(&bank_fp, sizeof bank_fp, h);
    const std::uint64_t has = dither.has_value() ? 1 : 0;
    h = rng::fnv1a(&has, sizeof has, h);
    if (dither) {
        h = rng::fnv1a(&dither->replicates, sizeof dither->replicates, h);
        h = rng::fnv1a(&dither->amplitude, sizeof dither->amplitude, h);
        h = rng::fnv1a(&dither->seed, sizeof dither->seed, h);
    }
    h = rng::fnv1a(&data_hash, sizeof data_hash, h);
    return h;
}

} // namespace detail

/// Trains (or loads from cache) the projector bank for one variant.
inline ProjectorBank obtain_bank(const VariantSpec& spec, const ExperimentConfig& cfg,
                                 const ExperimentContext& ctx) {
    const ProjectorConfig pc = projector_config_for(spec, cfg);
    const std::uint64_t want = detail::bank_fingerprint(ctx.selection.images,
                                                        ctx.selection.indices, pc,
                                                        cfg.seeds.bank_base);
    const auto dir = cfg.output_dir / "cache" / ("bank_" + spec.name());
    if (cfg.use_cache && std::filesystem::exists(dir / "manifest.json")) {
        try {
            ProjectorBank bank = load_bank(dir);
            if (bank.fingerprint == want) {
                if (spec.projection_dither) bank.projection_dither = cfg.dither_config();
                return bank;
            }
        } catch (const std::exception&) {
            // stale or damaged cache entry; fall through to retrain
        }
    }
    ProjectorBank bank = train_bank(ctx.selection.images, pc, cfg.seeds.bank_base,
                                    cfg.workers, ctx.selection.indices);
    save_bank(bank, dir);
    if (spec.projection_dither) bank.projection_dither = cfg.dither_config();
    return bank;
}

/// Projects a dataset through the bank, serving from cache when the key
/// (bank fingerprint, projection dither, dataset content) matches.
inline ProjectionSet obtain_projections(const ProjectorBank& bank, const LabeledDataset& data,
                                        const ExperimentConfig& cfg, const std::string& tag) {
    const std::uint64_t key = detail::projection_cache_key(
        bank.fingerprint, bank.projection_dither, detail::dataset_hash(data));
    const auto stem = cfg.output_dir / "cache" / ("proj_" + tag);
    if (cfg.use_cache && std::filesystem::exists(stem.string() + ".meta.json")) {
        try {
            const json meta = load_json(stem.string() + ".meta.json");
            if (meta.contains("cache_key") && meta.at("cache_key").get<std::uint64_t>() == key) {
                return load_projection_set(stem);
            }
        } catch (const std::exception&) {
        }
    }
    ProjectionSet set = project_dataset(bank, data, cfg.workers);
    std::filesystem::create_directories(stem.parent_path());
    save_projection_set(set, stem);
    json meta = load_json(stem.string() + ".meta.json");
    meta["cache_key"] = key;
    save_json(meta, stem.string() + ".meta.json");
    return set;
}

/// Full pipeline for one variant: select -> train bank -> project train and
/// test MNIST -> train classifier -> per-iteration test error curve.
inline ErrorCurve run_variant_in(const ExperimentContext& ctx, const VariantSpec& spec,
                                 const ExperimentConfig& cfg) {
    const ProjectorBank bank = obtain_bank(spec, cfg, ctx);
    const ProjectionSet train_proj =
        obtain_projections(bank, ctx.mnist_train, cfg, spec.name() + "_train");
    const ProjectionSet test_proj =
        obtain_projections(bank, ctx.mnist_test, cfg, spec.name() + "_test");

    ClassifierConfig cc;
    cc.hidden = 100;
    cc.hidden_activation = ActivationKind::biased_sigmoid(cfg.beta);
    cc.train = cfg.classifier_train;
    cc.weight_init = cfg.classifier_weight_init;
    cc.init_seed = cfg.seeds.classifier_init;
    cc.eval_workers = cfg.workers;
    auto [net, curve] = train_classifier(train_proj, test_proj, cc);
    (void)net;
    curve.variant_name = spec.name();
    return curve;
}

inline ErrorCurve run_variant(const VariantSpec& spec, const ExperimentConfig& cfg) {
    try {
        return run_variant_in(build_context(cfg), spec, cfg);
    } catch (const Error& e) {
        throw Error("variant " + spec.name() + ": " + e.what());
    }
}

/// Combined CSV: header `iteration,<name>,<name>,...`, 6 decimal places,
/// 1-based iteration numbers.
inline void write_curves_csv(const std::vector<ErrorCurve>& curves,
                             const std::filesystem::path& path) {
    if (curves.empty()) throw InvalidInputError("write_curves_csv: no curves");
    const std::size_t n = curves[0].errors.size();
    for (const auto& c : curves) {
        if (c.errors.size() != n) {
            throw InvalidInputError("write_curves_csv: curve length mismatch");
        }
    }
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path.string());
    std::fputs("iteration", f);
    for (const auto& c : curves) std::fprintf(f, ",%s", c.variant_name.c_str());
    std::fputs("\n", f);
    for (std::size_t i = 0; i < n; ++i) {
        std::fprintf(f, "%zu", i + 1);
        for (const auto& c : curves) std::fprintf(f, ",%.6f", c.errors[i]);
        std::fputs("\n", f);
    }
    if (std::fclose(f) != 0) throw IoError("failed writing: " + path.string());
}

/// Runs all three variants with shared selections and seeds, writes
/// per-variant CSVs, the combined CSV and summary.json, and prints one
/// summary line with the final errors.
inline std::vector<ErrorCurve> run_figure3(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);
    const ExperimentContext ctx = build_context(cfg);

    std::vector<ErrorCurve> curves;
    for (Variant v : {Variant::Plain, Variant::Biased, Variant::BiasedDither}) {
        const VariantSpec spec = VariantSpec::preset(v, cfg.beta);
        ErrorCurve curve;
        try {
            curve = run_variant_in(ctx, spec, cfg);
        } catch (const Error& e) {
            throw Error("variant " + spec.name() + ": " + e.what());
        }
        write_error_curve_csv(curve, cfg.output_dir / ("curve_" + spec.name() + ".csv"));
        curves.push_back(std::move(curve));
    }

    write_curves_csv(curves, cfg.output_dir / "figure3.csv");

    json summary;
    for (const auto& c : curves) {
        double min_err = c.errors[0];
        for (double e : c.errors) min_err = std::min(min_err, e);
        summary[c.variant_name] = {{"final_error", c.errors.back()},
                                   {"min_error", min_err},
                                   {"iterations", c.errors.size()}};
    }
    save_json(summary, cfg.output_dir / "summary.json");

    std::printf("figure3:");
    for (const auto& c : curves) {
        std::printf(" %s final=%.4f min=%.4f", c.variant_name.c_str(), c.errors.back(),
                    *std::min_element(c.errors.begin(), c.errors.end()));
    }
    std::printf("\n");
    return curves;
}

} // namespace qualproj
