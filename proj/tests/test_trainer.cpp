#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "hyolo/rng.hpp"
#include "hyolo/synthdata.hpp"
#include "hyolo/trainer.hpp"

using namespace hyolo;

namespace {

// A tiny in-memory dataset: depth-2 taxonomy, single-color shapes.
struct Fixture {
    Taxonomy tax;
    LoadedDataset data;

    explicit Fixture(int scenes, std::uint64_t seed = 11) {
        SynthTaxonomySpec tspec;
        tspec.depth = 2;
        tax = parse_taxonomy(synth_taxonomy_text(tspec));
        SceneSpec sspec;
        sspec.canvas = 64;
        sspec.objects = 3;
        Rng rng(seed);
        for (int i = 0; i < scenes; ++i) {
            std::vector<int> items;
            for (int k = 0; k < sspec.objects; ++k)
                items.push_back(rng.uniform_int(0, tspec.leaf_count() - 1));
            const auto scene = compose_scene(tspec, sspec, tax, items, seed * 1000 + i);
            data.scenes.push_back({scene.image, scene.labels});
        }
    }
};

TrainConfig quick_config(int epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.patience = epochs + 1;
    tc.batch = 4;
    tc.lr0 = 0.01;
    tc.grad_clip = 3.0;
    return tc;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.width = 8;
    mc.reg_max = 4;
    return mc;
}

} // namespace

TEST_CASE("assign_targets maps boxes to center cells and keeps the larger on collision") {
    std::vector<HierLabel> labels = {
        {{0, 0}, Box{0.30, 0.30, 0.10, 0.10}},
        {{1, 2}, Box{0.80, 0.80, 0.20, 0.20}},
        // same cell as the first, larger area: replaces it
        {{2, 4}, Box{0.32, 0.31, 0.15, 0.15}},
    };
    const std::vector<const std::vector<HierLabel>*> labs = {&labels};
    const auto targets = assign_targets(labs, 8, 8);
    REQUIRE(targets.size() == 2);
    CHECK(targets[0].cx == 2);
    CHECK(targets[0].cy == 2);
    CHECK(targets[0].path == std::vector<int>{2, 4});
    CHECK(targets[1].cx == 6);
    CHECK(targets[1].cy == 6);
}

TEST_CASE("images_to_tensor lays out NCHW in [0,1]") {
    Image img;
    img.w = 2;
    img.h = 1;
    img.rgb = {255, 0, 0, 0, 255, 0}; // red px, green px
    const Tensor t = images_to_tensor({&img});
    CHECK(t.shape() == std::vector<int>{1, 3, 1, 2});
    CHECK(t.data()[0] == doctest::Approx(1.0)); // R channel, px 0
    CHECK(t.data()[1] == doctest::Approx(0.0)); // R channel, px 1
    CHECK(t.data()[3] == doctest::Approx(1.0)); // G channel, px 1
}

TEST_CASE("batch_loss handles an image with no objects") {
    const Fixture fx(2);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 1);
    const std::vector<HierLabel> empty;
    const std::vector<const std::vector<HierLabel>*> labs = {&empty};
    const Tensor images = images_to_tensor({&fx.data.scenes[0].image});
    const auto out = model.forward(images);
    LossConfig lc;
    lc.reg_max = 4;
    const auto bl = batch_loss(model, out, labs, lc);
    CHECK(bl.fg_cells == 0);
    CHECK(std::isfinite(bl.loss.item()));
    for (const auto& lv : bl.levels) {
        CHECK(lv.ciou == 0.0);
        CHECK(lv.dfl == 0.0);
    }
}

TEST_CASE("one epoch on four images logs one finite row per level") {
    const Fixture fx(4);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 2);
    std::ostringstream csv;
    const auto res = train(model, fx.data, fx.data, quick_config(1), &csv);
    CHECK(res.log.size() == 1);
    CHECK(res.log[0].levels.size() == 2);
    for (const auto& lv : res.log[0].levels) {
        CHECK(std::isfinite(lv.bce));
        CHECK(std::isfinite(lv.total()));
    }
    // header + one row per level
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,level,bce,penalty,ciou,dfl,total");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("overfitting eight images cuts the loss at least tenfold") {
    const Fixture fx(8);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 3);
    TrainConfig tc = quick_config(200);
    tc.loss.reg_max = 4;
    const auto res = train(model, fx.data, fx.data, tc);
    const double first = res.log.front().total;
    const double last = res.log.back().total;
    CHECK(last * 10.0 <= first);
}

TEST_CASE("same seed trains to bit-identical weights") {
    const Fixture fx(4);
    auto run = [&]() {
        Model model(HeadVariant::make(4), fx.tax, tiny_model(), 5);
        TrainConfig tc = quick_config(3);
        tc.loss.reg_max = 4;
        tc.seed = 9;
        train(model, fx.data, fx.data, tc);
        std::vector<std::uint64_t> bits;
        for (const auto& [name, t] : model.named_parameters())
            for (double v : t.data()) bits.push_back(std::bit_cast<std::uint64_t>(v));
        return bits;
    };
    CHECK(run() == run());
}

TEST_CASE("exploding updates abort with a loss diagnostic") {
    const Fixture fx(4);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 6);
    TrainConfig tc = quick_config(10);
    tc.lr0 = 1e7;
    tc.grad_clip = 0; // disabled
    CHECK_THROWS_AS(train(model, fx.data, fx.data, tc), NonFiniteLoss);
}

TEST_CASE("training rejects empty splits") {
    const Fixture fx(2);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 7);
    LoadedDataset empty;
    CHECK_THROWS_AS(train(model, empty, fx.data, quick_config(1)), DatasetEmpty);
    CHECK_THROWS_AS(train(model, fx.data, empty, quick_config(1)), DatasetEmpty);
}

TEST_CASE("early stopping triggers when validation stalls") {
    const Fixture fx(4);
    Model model(HeadVariant::make(4), fx.tax, tiny_model(), 8);
    TrainConfig tc = quick_config(50);
    tc.lr0 = 1e-12; // nothing moves, validation F1 never improves
    tc.patience = 5;
    const auto res = train(model, fx.data, fx.data, tc);
    CHECK(res.early_stopped);
    CHECK(static_cast<int>(res.log.size()) < 50);
}

TEST_CASE("hierarchy_consistency counts child-consistent argmax paths") {
    const Fixture fx(1);
    std::vector<ImageEval> evals(1);
    DetectionPrediction ok;
    ok.class_index = {0, 0}; // leaf 0 under shape 0: consistent
    ok.confidence = {0.9, 0.9};
    ok.primary_confidence = 0.9;
    DetectionPrediction bad;
    bad.class_index = {0, 5}; // leaf 5 belongs to shape 2: inconsistent
    bad.confidence = {0.9, 0.9};
    bad.primary_confidence = 0.9;
    evals[0].preds = {ok, bad};
    CHECK(hierarchy_consistency(evals, fx.tax) == doctest::Approx(0.5));
    CHECK(hierarchy_consistency({}, fx.tax) == doctest::Approx(1.0));
}
