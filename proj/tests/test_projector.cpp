#include <doctest.h>

#include <cmath>

#include "qualproj/projector.hpp"
#include "testutil.hpp"

using namespace qualproj;

namespace {

ProjectorConfig small_cfg(double beta = 5.0) {
    ProjectorConfig cfg;
    cfg.hidden = 12;
    cfg.activation = ActivationKind::biased_sigmoid(beta);
    cfg.train = TrainConfig{1.0, 10, 0};
    return cfg;
}

std::vector<std::vector<double>> some_images(std::size_t n, std::uint64_t seed) {
    std::vector<std::vector<double>> images;
    for (std::size_t i = 0; i < n; ++i) {
        images.push_back(testutil::synth_projection_image(seed + i));
    }
    return images;
}

} // namespace

TEST_CASE("projector defaults match the stated configuration") {
    ProjectorConfig cfg;
    CHECK(cfg.hidden == 100);
    CHECK(cfg.train.iterations == 50);
    CHECK(cfg.train.learning_rate == 1.0);
    CHECK(cfg.activation == ActivationKind::biased_sigmoid(5.0));
    CHECK_FALSE(cfg.dither.has_value());
}

TEST_CASE("train_projector reduces the loss on its projection image") {
    const auto img = testutil::synth_projection_image(50);
    const auto cfg = small_cfg();
    const Mlp before = init_network({784, cfg.hidden, 1},
                                    {cfg.activation, cfg.activation}, 1717);
    const Mlp after = train_projector(img, cfg, 1717);
    const std::vector<double> target{1.0};
    const double loss_before =
        loss(LossKind::SquaredError, forward_output(before, img), target);
    const double loss_after = loss(LossKind::SquaredError, forward_output(after, img), target);
    CHECK(loss_after < loss_before);
}

TEST_CASE("trained projector outputs >= 0.9 on its own image (biased config)") {
    const auto img = testutil::synth_projection_image(51);
    ProjectorConfig cfg; // reference config: 100 hidden, 50 iters, lr 1
    const Mlp before = init_network({784, cfg.hidden, 1},
                                    {cfg.activation, cfg.activation}, 2024);
    const Mlp net = train_projector(img, cfg, 2024);
    CHECK(forward_output(net, img)[0] >= 0.9);

    const std::vector<double> target{1.0};
    CHECK(loss(LossKind::SquaredError, forward_output(net, img), target) <
          loss(LossKind::SquaredError, forward_output(before, img), target));
}

TEST_CASE("train_projector is deterministic per seed") {
    const auto img = testutil::synth_projection_image(52);
    const auto cfg = small_cfg();
    CHECK(train_projector(img, cfg, 5).same_parameters(train_projector(img, cfg, 5)));
    CHECK_FALSE(train_projector(img, cfg, 5).same_parameters(train_projector(img, cfg, 6)));
}

TEST_CASE("training dither at amplitude 0 equals undithered training exactly") {
    const auto img = testutil::synth_projection_image(53);
    auto cfg = small_cfg();
    const Mlp plain = train_projector(img, cfg, 9);
    cfg.dither = DitherConfig{5, 0.0, 77};
    const Mlp dithered = train_projector(img, cfg, 9);
    CHECK(plain.same_parameters(dithered));
}

TEST_CASE("training dither changes the trajectory when active") {
    const auto img = testutil::synth_projection_image(54);
    auto cfg = small_cfg();
    const Mlp plain = train_projector(img, cfg, 10);
    cfg.dither = DitherConfig{5, 0.5, 77};
    const Mlp dithered = train_projector(img, cfg, 10);
    CHECK_FALSE(plain.same_parameters(dithered));
}

TEST_CASE("train_bank: one projector per image, stable order, determinism") {
    const auto images = some_images(10, 60);
    const auto cfg = small_cfg();
    const auto a = train_bank(images, cfg, 100, 1);
    REQUIRE(a.size() == 10);
    const auto b = train_bank(images, cfg, 100, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.projectors[i].net.same_parameters(b.projectors[i].net));
        CHECK(a.projectors[i].image_id == i);
    }
}

TEST_CASE("train_bank: worker count does not change the result") {
    const auto images = some_images(8, 70);
    auto cfg = small_cfg();
    cfg.dither = DitherConfig{4, 0.5, 3};
    const auto serial = train_bank(images, cfg, 200, 1);
    const auto parallel = train_bank(images, cfg, 200, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial.projectors[i].net.same_parameters(parallel.projectors[i].net));
    }
}

TEST_CASE("train_bank: per-projector seeds derive from (base_seed, i)") {
    const auto images = some_images(3, 80);
    const auto cfg = small_cfg();
    const auto bank = train_bank(images, cfg, 300, 2);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Mlp solo = train_projector(images[i], cfg, rng::derive(300, i));
        CHECK(bank.projectors[i].net.same_parameters(solo));
    }
}

TEST_CASE("train_bank: share_init reuses the base seed for every projector") {
    const auto images = some_images(3, 90);
    const auto cfg = small_cfg();
    const auto bank = train_bank(images, cfg, 400, 1, {}, true);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Mlp solo = train_projector(images[i], cfg, 400);
        CHECK(bank.projectors[i].net.same_parameters(solo));
    }
}

TEST_CASE("train_bank: custom image ids and empty input") {
    const auto images = some_images(2, 95);
    const auto cfg = small_cfg();
    const auto bank = train_bank(images, cfg, 1, 1, {42, 17});
    CHECK(bank.projectors[0].image_id == 42);
    CHECK(bank.projectors[1].image_id == 17);
    CHECK_THROWS_AS((void)train_bank({}, cfg, 1, 1), ConfigError);
}

TEST_CASE("project: output has one component per projector, all in (0,1)") {
    const auto images = some_images(5, 100);
    const auto bank = train_bank(images, small_cfg(), 500, 1);
    const auto vec = project(bank, testutil::synth_projection_image(999), 0);
    REQUIRE(vec.size() == 5);
    for (double v : vec) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("project: own projection image scores near 1 and above cross-images") {
    // Self-similarity regression for the biased configuration.
    const auto images = some_images(6, 110);
    ProjectorConfig cfg;
    cfg.hidden = 100;
    cfg.train = TrainConfig{1.0, 50, 0};
    const auto bank = train_bank(images, cfg, 600, 2);
    double own_mean = 0.0, cross_mean = 0.0;
    std::size_t cross_n = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto vec = project(bank, images[i], i);
        own_mean += vec[i];
        for (std::size_t j = 0; j < vec.size(); ++j) {
            if (j != i) {
                cross_mean += vec[j];
                ++cross_n;
            }
        }
    }
    own_mean /= double(images.size());
    cross_mean /= double(cross_n);
    CHECK(own_mean >= 0.9);
    CHECK(own_mean > cross_mean);
}

TEST_CASE("project: zero-amplitude projection dither equals the undithered projection") {
    const auto images = some_images(4, 120);
    auto bank = train_bank(images, small_cfg(), 700, 1);
    const auto img = testutil::synth_projection_image(998);
    const auto plain = project(bank, img, 5);
    bank.projection_dither = DitherConfig{10, 0.0, 4};
    const auto dith = project(bank, img, 5);
    CHECK(plain == dith);
}

TEST_CASE("project: dithered projection equals dithered_output per projector") {
    const auto images = some_images(3, 130);
    auto bank = train_bank(images, small_cfg(), 800, 1);
    bank.projection_dither = DitherConfig{6, 0.5, 5};
    const auto img = testutil::synth_projection_image(997);
    const auto vec = project(bank, img, 9);
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto direct = dithered_output(bank.projectors[i].net, img,
                                            *bank.projection_dither, 9);
        CHECK(vec[i] == direct[0]);
    }
}

TEST_CASE("dithered projection of a trained projector stays near the undithered output") {
    // Regression bound measured on the built artifact: amplitude 0.5,
    // trained biased projector, own projection image.
    const auto img = testutil::synth_projection_image(140);
    ProjectorConfig cfg;
    const Mlp net = train_projector(img, cfg, 1);
    const double undithered = forward_output(net, img)[0];
    const DitherConfig dither{100, 0.5, 6};
    const double dithered = dithered_output(net, img, dither, 0)[0];
    CHECK(std::abs(dithered - undithered) <= 0.1);
}

TEST_CASE("project_dataset: independent rows with stream_id = row index") {
    const auto images = some_images(4, 150);
    auto bank = train_bank(images, small_cfg(), 900, 1);
    bank.projection_dither = DitherConfig{5, 0.5, 7};

    LabeledDataset data;
    for (std::size_t j = 0; j < 6; ++j) {
        data.images.push_back(testutil::synth_projection_image(300 + j));
        data.labels.push_back(int(j % 10));
    }
    const auto set = project_dataset(bank, data, 3);
    REQUIRE(set.size() == 6);
    CHECK(set.dim() == 4);
    CHECK(set.labels == data.labels);
    CHECK(set.bank_fingerprint == bank.fingerprint);
    for (std::size_t j : {std::size_t(0), std::size_t(3), std::size_t(5)}) {
        CHECK(set.vectors[j] == project(bank, data.images[j], j));
    }

    // worker-count independence
    const auto serial = project_dataset(bank, data, 1);
    CHECK(serial.vectors == set.vectors);
}

TEST_CASE("project_dataset: permuting input rows permutes output rows (undithered)") {
    const auto images = some_images(4, 155);
    const auto bank = train_bank(images, small_cfg(), 902, 1);
    LabeledDataset data;
    for (std::size_t j = 0; j < 5; ++j) {
        data.images.push_back(testutil::synth_projection_image(400 + j));
        data.labels.push_back(int(j));
    }
    LabeledDataset permuted;
    const std::size_t order[] = {3, 0, 4, 1, 2};
    for (std::size_t j : order) {
        permuted.images.push_back(data.images[j]);
        permuted.labels.push_back(data.labels[j]);
    }
    const auto a = project_dataset(bank, data, 1);
    const auto b = project_dataset(bank, permuted, 1);
    for (std::size_t j : {std::size_t(0), std::size_t(2), std::size_t(4)}) {
        CHECK(b.vectors[j] == a.vectors[order[j]]);
    }
}

TEST_CASE("projection values stay strictly inside (0,1) under dither") {
    const auto images = some_images(3, 160);
    auto bank = train_bank(images, small_cfg(), 901, 1);
    bank.projection_dither = DitherConfig{8, 1.0, 8};
    const auto vec = project(bank, testutil::synth_projection_image(996), 2);
    for (double v : vec) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}
