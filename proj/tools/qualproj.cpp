// Command-line entry point for the qualitative-projection pipeline:
// data preparation, bank training, projection, classifier training, the
// full three-variant comparison, and the gradient self-check.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qualproj/experiment.hpp"
#include "qualproj/fetch.hpp"
#include "qualproj/gradcheck.hpp"
#include "qualproj/serialize.hpp"

using namespace qualproj;

namespace {

struct CliState {
    ExperimentConfig cfg;
    std::string config_path;
    std::string data_dir;
    std::string variant = "biased";
    std::string split = "both";
    bool no_cache = false;
    bool print_config = false;
};

// flag handles, checked for explicit presence after parsing
struct OptionHandles {
    CLI::Option* data_dir = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* workers = nullptr;
    CLI::Option* beta = nullptr;
    CLI::Option* amplitude = nullptr;
    CLI::Option* replicates = nullptr;
    CLI::Option* n_projection_images = nullptr;
    CLI::Option* n_train = nullptr;
    CLI::Option* projector_iters = nullptr;
    CLI::Option* projector_lr = nullptr;
    CLI::Option* classifier_iters = nullptr;
    CLI::Option* classifier_lr = nullptr;
    CLI::Option* seed_selection = nullptr;
    CLI::Option* seed_bank = nullptr;
    CLI::Option* seed_classifier = nullptr;
    CLI::Option* seed_dither = nullptr;
    CLI::Option* projector_weight_init = nullptr;
    CLI::Option* classifier_weight_init = nullptr;
};

struct FlagValues {
    std::string out;
    unsigned workers = 1;
    double beta = 5.0, amplitude = 0.5;
    std::size_t replicates = 100, n_projection_images = 100, n_train = 1000;
    std::size_t projector_iters = 50, classifier_iters = 150;
    double projector_lr = 1.0, classifier_lr = 1.0;
    std::uint64_t seed_selection = 0, seed_bank = 0, seed_classifier = 0, seed_dither = 0;
    std::string projector_weight_init = "inv_sqrt_fan_in";
    std::string classifier_weight_init = "inv_sqrt_fan_in";
};

// Precedence: command line > config file > environment data dir > defaults.
ExperimentConfig resolve_config(const CliState& st, const OptionHandles& oh,
                                const FlagValues& fv) {
    ExperimentConfig cfg;

    const char* env_dir = std::getenv("QUALPROJ_DATA_DIR");
    if (env_dir && *env_dir) cfg.data.rebase(env_dir);

    if (!st.config_path.empty()) {
        cfg = experiment_config_from_json(load_json(st.config_path), std::move(cfg));
    }

    if (oh.data_dir->count() > 0) cfg.data.rebase(st.data_dir);
    if (oh.out->count() > 0) cfg.output_dir = fv.out;
    if (oh.workers->count() > 0) cfg.workers = fv.workers;
    if (oh.beta->count() > 0) cfg.beta = fv.beta;
    if (oh.amplitude->count() > 0) cfg.dither_amplitude = fv.amplitude;
    if (oh.replicates->count() > 0) cfg.dither_replicates = fv.replicates;
    if (oh.n_projection_images->count() > 0) cfg.n_projection_images = fv.n_projection_images;
    if (oh.n_train->count() > 0) cfg.n_train = fv.n_train;
    if (oh.projector_iters->count() > 0) cfg.projector_train.iterations = fv.projector_iters;
    if (oh.projector_lr->count() > 0) cfg.projector_train.learning_rate = fv.projector_lr;
    if (oh.classifier_iters->count() > 0) cfg.classifier_train.iterations = fv.classifier_iters;
    if (oh.classifier_lr->count() > 0) cfg.classifier_train.learning_rate = fv.classifier_lr;
    if (oh.seed_selection->count() > 0) cfg.seeds.selection = fv.seed_selection;
    if (oh.seed_bank->count() > 0) cfg.seeds.bank_base = fv.seed_bank;
    if (oh.seed_classifier->count() > 0) cfg.seeds.classifier_init = fv.seed_classifier;
    if (oh.seed_dither->count() > 0) cfg.seeds.dither = fv.seed_dither;
    if (oh.projector_weight_init->count() > 0) {
        cfg.projector_weight_init = weight_init_from_name(fv.projector_weight_init);
    }
    if (oh.classifier_weight_init->count() > 0) {
        cfg.classifier_weight_init = weight_init_from_name(fv.classifier_weight_init);
    }
    if (st.no_cache) cfg.use_cache = false;

    cfg.validate();
    return cfg;
}

int cmd_prepare_data(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    const std::pair<std::string, std::filesystem::path> mnist_files[] = {
        {"mnist_train_images", d.mnist_train_images},
        {"mnist_train_labels", d.mnist_train_labels},
        {"mnist_test_images", d.mnist_test_images},
        {"mnist_test_labels", d.mnist_test_labels},
    };
    for (const auto& [key, path] : mnist_files) {
        if (std::filesystem::exists(path)) continue;
        const auto it = d.fetch_urls.find(key);
        if (it == d.fetch_urls.end()) {
            throw ConfigError("missing " + path.string() + " and no fetch URL for " + key);
        }
        std::printf("fetching %s -> %s\n", it->second.c_str(), path.string().c_str());
        const std::size_t n = fetch_dataset_file(it->second, path);
        std::printf("  wrote %zu bytes\n", n);
    }

    bool cifar_missing = false;
    for (const auto& p : d.cifar_batches) {
        if (!std::filesystem::exists(p)) cifar_missing = true;
    }
    if (cifar_missing) {
        const auto it = d.fetch_urls.find("cifar_archive");
        if (it == d.fetch_urls.end()) {
            throw ConfigError("missing CIFAR batches and no fetch URL for cifar_archive");
        }
        // the archive carries cifar-10-batches-bin/...; extract beside it
        std::filesystem::path root = d.cifar_batches.front().parent_path().parent_path();
        if (root.empty()) root = ".";
        std::printf("fetching %s -> %s\n", it->second.c_str(), root.string().c_str());
        const auto extracted = fetch_cifar_archive(it->second, root);
        std::printf("  extracted %zu files\n", extracted.size());
    }

    const auto train = load_mnist(d.mnist_train_images, d.mnist_train_labels);
    const auto test = load_mnist(d.mnist_test_images, d.mnist_test_labels);
    const auto cifar = load_cifar10(d.cifar_batches);
    std::printf("mnist train: %zu images\n", train.size());
    std::printf("mnist test: %zu images\n", test.size());
    std::printf("cifar records: %zu\n", cifar.size());
    return 0;
}

int cmd_gradcheck() {
    const GradCheckResult r = run_gradient_check();
    std::printf("gradient check: %d cases, max relative error %.3e (threshold 1e-4)\n",
                r.cases, r.max_rel_err);
    return r.passed() ? 0 : 1;
}

int cmd_train_bank(const ExperimentConfig& cfg, const std::string& variant) {
    const VariantSpec spec = VariantSpec::preset(variant_from_name(variant), cfg.beta);
    const ExperimentContext ctx = build_context(cfg);
    const ProjectorBank bank = obtain_bank(spec, cfg, ctx);
    std::printf("bank %s: %zu projectors, fingerprint %016llx -> %s\n", spec.name().c_str(),
                bank.size(), static_cast<unsigned long long>(bank.fingerprint),
                (cfg.output_dir / "cache" / ("bank_" + spec.name())).string().c_str());
    return 0;
}

int cmd_project(const ExperimentConfig& cfg, const std::string& variant,
                const std::string& split) {
    if (split != "train" && split != "test" && split != "both") {
        throw ConfigError("--split must be train|test|both");
    }
    const VariantSpec spec = VariantSpec::preset(variant_from_name(variant), cfg.beta);
    const ExperimentContext ctx = build_context(cfg);
    const ProjectorBank bank = obtain_bank(spec, cfg, ctx);
    if (split == "train" || split == "both") {
        const auto set = obtain_projections(bank, ctx.mnist_train, cfg, spec.name() + "_train");
        std::printf("projected %zu train images -> %zu dims\n", set.size(), set.dim());
    }
    if (split == "test" || split == "both") {
        const auto set = obtain_projections(bank, ctx.mnist_test, cfg, spec.name() + "_test");
        std::printf("projected %zu test images -> %zu dims\n", set.size(), set.dim());
    }
    return 0;
}

int cmd_train_classifier(const ExperimentConfig& cfg, const std::string& variant) {
    const VariantSpec spec = VariantSpec::preset(variant_from_name(variant), cfg.beta);
    const ExperimentContext ctx = build_context(cfg);
    const ErrorCurve curve = run_variant_in(ctx, spec, cfg);
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = cfg.output_dir / ("curve_" + spec.name() + ".csv");
    write_error_curve_csv(curve, path);
    std::printf("%s: final error %.4f after %zu iterations -> %s\n", spec.name().c_str(),
                curve.errors.back(), curve.errors.size(), path.string().c_str());
    return 0;
}

int cmd_run_figure3(const ExperimentConfig& cfg) {
    run_figure3(cfg);
    std::printf("wrote %s\n", (cfg.output_dir / "figure3.csv").string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qualitative projection: similarity embeddings through per-image "
                 "projector networks"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    CliState st;
    FlagValues fv;
    OptionHandles oh;

    app.add_option("--config", st.config_path, "JSON config file");
    oh.data_dir = app.add_option("--data-dir", st.data_dir,
                                 "dataset root (default $QUALPROJ_DATA_DIR or ./data)");
    oh.out = app.add_option("--out", fv.out, "output directory");
    oh.workers = app.add_option("--workers", fv.workers, "worker thread cap (0 = all cores)");
    app.add_flag("--no-cache", st.no_cache, "ignore cached banks/projections");
    app.add_flag("--print-config", st.print_config,
                 "print the effective config as JSON and exit");
    oh.beta = app.add_option("--beta", fv.beta, "biased-sigmoid offset");
    oh.amplitude = app.add_option("--amplitude", fv.amplitude, "dither noise half-range");
    oh.replicates = app.add_option("--replicates", fv.replicates, "dither replicates");
    oh.n_projection_images =
        app.add_option("--n-projection-images", fv.n_projection_images, "bank size");
    oh.n_train = app.add_option("--n-train", fv.n_train, "MNIST training subset size");
    oh.projector_iters =
        app.add_option("--projector-iters", fv.projector_iters, "projector SGD iterations");
    oh.projector_lr =
        app.add_option("--projector-lr", fv.projector_lr, "projector learning rate");
    oh.classifier_iters =
        app.add_option("--classifier-iters", fv.classifier_iters, "classifier sweeps");
    oh.classifier_lr =
        app.add_option("--classifier-lr", fv.classifier_lr, "classifier learning rate");
    oh.seed_selection = app.add_option("--seed-selection", fv.seed_selection, "selection seed");
    oh.seed_bank = app.add_option("--seed-bank", fv.seed_bank, "bank base seed");
    oh.seed_classifier =
        app.add_option("--seed-classifier", fv.seed_classifier, "classifier init seed");
    oh.seed_dither = app.add_option("--seed-dither", fv.seed_dither, "dither noise seed");
    oh.projector_weight_init =
        app.add_option("--projector-weight-init", fv.projector_weight_init,
                       "inv_sqrt_fan_in|unit_uniform");
    oh.classifier_weight_init =
        app.add_option("--classifier-weight-init", fv.classifier_weight_init,
                       "inv_sqrt_fan_in|unit_uniform");

    auto* prepare = app.add_subcommand("prepare-data", "fetch/validate the dataset files");
    auto* bank_cmd = app.add_subcommand("train-bank", "train the projector bank for a variant");
    auto* project_cmd = app.add_subcommand("project", "project MNIST through a trained bank");
    auto* classifier_cmd =
        app.add_subcommand("train-classifier", "train the classifier for a variant");
    auto* figure3 = app.add_subcommand("run-figure3", "run all three variants end to end");
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "verify backprop against central differences");

    for (auto* sub : {bank_cmd, project_cmd, classifier_cmd}) {
        sub->add_option("--variant", st.variant, "plain|biased|biased_dither");
    }
    project_cmd->add_option("--split", st.split, "train|test|both");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help() << std::flush;
        return 2;
    }

    try {
        const ExperimentConfig cfg = resolve_config(st, oh, fv);
        if (st.print_config) {
            std::cout << experiment_config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
        if (prepare->parsed()) return cmd_prepare_data(cfg);
        if (bank_cmd->parsed()) return cmd_train_bank(cfg, st.variant);
        if (project_cmd->parsed()) return cmd_project(cfg, st.variant, st.split);
        if (classifier_cmd->parsed()) return cmd_train_classifier(cfg, st.variant);
        if (figure3->parsed()) return cmd_run_figure3(cfg);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck();
        std::cerr << "error: no subcommand given\n" << app.help() << std::flush;
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
