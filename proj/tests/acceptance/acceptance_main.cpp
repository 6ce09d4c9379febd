// Acceptance suite: one numbered check per contract criterion, one PASS or
// FAIL line each, nonzero exit if anything fails. The slow checks (training
// runs) come last. Pass the CLI binary path as argv[1] so the report-merge
// check can exercise it end to end.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "hyolo/config.hpp"
#include "hyolo/evalkit.hpp"
#include "hyolo/hiermetrics.hpp"
#include "hyolo/losses.hpp"
#include "hyolo/model.hpp"
#include "hyolo/rng.hpp"
#include "hyolo/synthdata.hpp"
#include "hyolo/taxonomy.hpp"
#include "hyolo/trainer.hpp"

using namespace hyolo;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Criterion {
public:
    Criterion(int number, std::string what)
        : number_(number), what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}

    void expect(bool ok, const std::string& detail) {
        if (!ok && failure_.empty()) failure_ = detail;
        ok_ = ok_ && ok;
    }

    ~Criterion() {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
        if (ok_) {
            std::cout << "[PASS] C" << number_ << ": " << what_ << " (" << elapsed / 1000.0
                      << " s)\n";
        } else {
            std::cout << "[FAIL] C" << number_ << ": " << what_ << " -- " << failure_ << " ("
                      << elapsed / 1000.0 << " s)\n";
            ++g_failures;
        }
        std::cout.flush();
    }

    double seconds() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
                   .count() /
               1000.0;
    }

private:
    int number_;
    std::string what_;
    std::chrono::steady_clock::time_point start_;
    bool ok_ = true;
    std::string failure_;
};

const char* kFigTree =
    "depth=3 pad=false\n"
    "ROOT > A\nROOT > B\nROOT > C\n"
    "A > D\nB > F\nB > G\nC > H\n"
    "D > I\nD > J\nF > L\nF > M\nG > N\nH > O\nH > P\n";

RawTaxonomy random_raw_tree(Rng& rng, int max_nodes, int depth) {
    RawTaxonomy raw;
    raw.declared_depth = depth;
    raw.pad = true;
    std::vector<std::pair<std::string, int>> nodes = {{"ROOT", 0}};
    const int n = rng.uniform_int(2, max_nodes);
    for (int i = 0; i < n; ++i) {
        int pi = rng.uniform_int(0, static_cast<int>(nodes.size()) - 1);
        for (int tries = 0; nodes[pi].second >= depth && tries < 50; ++tries)
            pi = rng.uniform_int(0, static_cast<int>(nodes.size()) - 1);
        if (nodes[pi].second >= depth) continue;
        const std::string name = "n" + std::to_string(i);
        raw.edges.emplace_back(nodes[pi].first, name);
        nodes.emplace_back(name, nodes[pi].second + 1);
    }
    if (raw.edges.empty()) raw.edges.emplace_back("ROOT", "n0");
    return raw;
}

Ratio oracle_metric(const Taxonomy& tax, int num_node, int den_node) {
    std::set<int> a, b;
    for (int cur = num_node; cur != tax.root(); cur = tax.node(cur).parent) a.insert(cur);
    for (int cur = den_node; cur != tax.root(); cur = tax.node(cur).parent) b.insert(cur);
    std::int64_t common = 0;
    for (int id : a)
        if (b.count(id)) ++common;
    return Ratio(common, static_cast<std::int64_t>(a.size()));
}

void criterion1() {
    Criterion c(1, "worked-example fixture scores exactly 2/3, 1/3, 0");
    const Taxonomy tax = parse_taxonomy(kFigTree);
    const auto score = [&](const char* pred, const char* truth) {
        const HierPair pair{tax.find(pred), tax.find(truth)};
        const Ratio p = hier_precision(pair, tax);
        const Ratio r = hier_recall(pair, tax);
        const Ratio f = hier_f1(p, r);
        return std::tuple{p, r, f};
    };
    const auto [pm, rm, fm] = score("M", "L");
    c.expect(pm == Ratio(2, 3) && rm == Ratio(2, 3) && fm == Ratio(2, 3),
             "same-subgraph pair must score 2/3, got " + pm.str());
    const auto [pn, rn, fn] = score("N", "L");
    c.expect(pn == Ratio(1, 3) && rn == Ratio(1, 3) && fn == Ratio(1, 3),
             "one-common-ancestor pair must score 1/3, got " + pn.str());
    const auto [pp, rp, fp] = score("P", "L");
    c.expect(pp == Ratio::zero() && rp == Ratio::zero() && fp == Ratio::zero(),
             "no-common-ancestor pair must score 0, got " + pp.str());
}

void criterion2() {
    Criterion c(2, "1000 random tree/pair cases match the ancestor-set oracle exactly");
    Rng rng(0xC2);
    int cases = 0;
    while (cases < 1000) {
        const Taxonomy tax =
            pad_to_uniform_depth(random_raw_tree(rng, 100, rng.uniform_int(2, 6)));
        for (int k = 0; k < 8 && cases < 1000; ++k, ++cases) {
            const int a = rng.uniform_int(1, tax.node_count() - 1);
            const int b = rng.uniform_int(1, tax.node_count() - 1);
            const HierPair pair{a, b};
            c.expect(hier_precision(pair, tax) == oracle_metric(tax, a, b),
                     "precision mismatch on case " + std::to_string(cases));
            c.expect(hier_recall(pair, tax) == oracle_metric(tax, b, a),
                     "recall mismatch on case " + std::to_string(cases));
        }
    }
    c.expect(c.seconds() < 10.0, "exceeded the 10 s budget");
}

void criterion3() {
    Criterion c(3, "alpha=0 class loss equals w_cls*BCE bitwise on 100 random inputs");
    const Taxonomy tax = parse_taxonomy(kFigTree);
    LossConfig cfg;
    cfg.w_cls = 2.0;
    cfg.alpha = 0.0;
    Rng rng(0xC3);
    for (int trial = 0; trial < 100; ++trial) {
        const int level = rng.uniform_int(1, 2);
        const int s = tax.level_size(level);
        std::vector<double> z(s), t(s);
        for (auto& v : z) v = rng.uniform(-6, 6);
        for (auto& v : t) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const Tensor logits = Tensor::from_data({s}, z);
        const Tensor targets = Tensor::from_data({s}, t);
        const int parent = rng.uniform_int(0, tax.level_size(level - 1) - 1);
        const auto res = cls_loss_level(level, logits, targets, parent, tax, cfg);
        const double direct = mul_scalar(bce_with_logits(logits, targets), cfg.w_cls).item();
        c.expect(std::bit_cast<std::uint64_t>(res.loss.item()) ==
                     std::bit_cast<std::uint64_t>(direct),
                 "bitwise mismatch at trial " + std::to_string(trial));
        c.expect(res.penalty == 0.0, "penalty must be absent at alpha=0");
    }
    c.expect(c.seconds() < 1.0, "exceeded the 1 s budget");
}

void criterion4() {
    Criterion c(4, "penalty gradient is w_cls*alpha on violators and 0 on children");
    const Taxonomy tax = parse_taxonomy(kFigTree);
    const double w_cls = 2.0, alpha = 25.0;
    Rng rng(0xC4);
    for (int level = 1; level <= 2; ++level) {
        const int s = tax.level_size(level);
        for (int parent = 0; parent < tax.level_size(level - 1); ++parent) {
            std::vector<double> conf(s);
            for (auto& v : conf) v = rng.uniform(0.05, 0.95);
            std::vector<Tensor> inputs = {Tensor::from_data({s}, conf, true)};
            auto f = [&](const std::vector<Tensor>& in) {
                return mul_scalar(hier_penalty(in[0], level, parent, tax), w_cls * alpha);
            };
            const double err = gradcheck(f, inputs, 1e-4);
            c.expect(err < 1e-6, "gradcheck rel err " + std::to_string(err));
            inputs[0].zero_grad();
            Tensor y = f(inputs);
            y.backward();
            for (int i = 0; i < s; ++i) {
                const double expected = tax.is_child(level, i, parent) ? 0.0 : w_cls * alpha;
                const double got = inputs[0].grad()[i];
                c.expect(std::abs(got - expected) <= 1e-9 * std::max(1.0, std::abs(expected)),
                         "class " + std::to_string(i) + " grad " + std::to_string(got));
            }
        }
    }
    c.expect(c.seconds() < 10.0, "exceeded the 10 s budget");
}

void criterion5() {
    Criterion c(5, "composite loss through the V4 head passes gradcheck at 1e-4");
    const Taxonomy tax = parse_taxonomy(
        "depth=2 pad=false\nROOT > a\nROOT > b\na > a1\na > a2\nb > b1\nb > b2\n");
    ModelConfig mc;
    mc.width = 6;
    mc.reg_max = 4;
    Model model(HeadVariant::make(4), tax, mc, 0);
    LossConfig lc;
    lc.alpha = 0.5;
    lc.reg_max = 4;
    // finite differences need a locally constant parent choice, and small
    // weights keep cancellation noise under the tolerance on tiny gradients
    lc.parent_source = ParentSource::GroundTruth;
    lc.w_box = 0.5;
    lc.w_dfl = 0.25;
    lc.w_cls = 0.25;

    Rng rng(17);
    std::vector<double> img(3 * 16 * 16);
    for (auto& v : img) v = rng.uniform();
    const Tensor images = Tensor::from_data({1, 3, 16, 16}, std::move(img));
    std::vector<HierLabel> labels = {{{0, 1}, Box{0.4, 0.45, 0.5, 0.4}}};
    const std::vector<const std::vector<HierLabel>*> labs = {&labels};

    auto params = model.parameters();
    const double err = gradcheck(
        [&](const std::vector<Tensor>&) { return composite_loss(model, images, labs, lc); },
        params, 1e-3);
    c.expect(err < 1e-4, "max rel err " + std::to_string(err));
    c.expect(c.seconds() < 120.0, "exceeded the 2 min budget");
}

void criterion6() {
    Criterion c(6, "V1-V6 concatenation wiring: structural edges and ablation probes");
    const Taxonomy tax = parse_taxonomy(kFigTree);
    using EP = ExportPoint;
    using MP = MergePoint;
    const std::vector<std::vector<ConcatEdge>> expected = {
        {{0, EP::AfterLogits, 1, MP::BeforeConv1}, {1, EP::AfterLogits, 2, MP::BeforeConv1}},
        {{0, EP::AfterLogits, 1, MP::AfterConv2}, {1, EP::AfterLogits, 2, MP::AfterConv2}},
        {{0, EP::AfterConv1, 1, MP::AfterConv1}, {1, EP::AfterConv1, 2, MP::AfterConv1}},
        {{0, EP::AfterLogits, 1, MP::AfterFirstLogits},
         {1, EP::AfterLogits, 2, MP::AfterFirstLogits}},
        {{0, EP::AfterConv2, 1, MP::AfterConv2}, {1, EP::AfterConv2, 2, MP::AfterConv2}},
        {{0, EP::AfterLogits, 1, MP::AfterFirstLogits},
         {1, EP::AfterLogits, 2, MP::AfterFirstLogits},
         {0, EP::AfterLogits, 2, MP::AfterFirstLogits}},
    };
    Rng rng(0xC6);
    std::vector<double> img(3 * 32 * 32);
    for (auto& v : img) v = rng.uniform();
    const Tensor images = Tensor::from_data({1, 3, 32, 32}, std::move(img));
    ModelConfig mc;
    mc.width = 8;
    mc.reg_max = 4;

    for (int id = 1; id <= 6; ++id) {
        const HeadVariant v = HeadVariant::make(id);
        c.expect(concat_edges(v, 3) == expected[id - 1],
                 "edge set of V" + std::to_string(id) + " differs");

        const Model model(v, tax, mc, 7);
        const auto base = model.forward(images);
        AblationSpec cut0;
        cut0.zero_export_levels = {0};
        const auto ab = model.forward(images, &cut0);
        auto equal = [](const Tensor& x, const Tensor& y) {
            return std::memcmp(x.data().data(), y.data().data(),
                               x.data().size() * sizeof(double)) == 0;
        };
        c.expect(equal(base.level_logits[0], ab.level_logits[0]),
                 "V" + std::to_string(id) + ": level-0 logits changed under ablation");
        c.expect(!equal(base.level_logits[1], ab.level_logits[1]),
                 "V" + std::to_string(id) + ": level-1 logits ignored the level-0 export");
        AblationSpec noop;
        noop.zero_export_levels = {2};
        const auto same = model.forward(images, &noop);
        for (int l = 0; l < 3; ++l)
            c.expect(equal(base.level_logits[l], same.level_logits[l]),
                     "V" + std::to_string(id) + ": unused export ablation changed level " +
                         std::to_string(l));
    }
    c.expect(c.seconds() < 60.0, "exceeded the 1 min budget");
}

void criterion7() {
    Criterion c(7, "decoded boxes identical across levels");
    const Taxonomy tax = parse_taxonomy(kFigTree);
    ModelConfig mc;
    mc.width = 8;
    Rng rng(0xC7);
    const Model model(HeadVariant::make(4), tax, mc, 5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> img(2 * 3 * 64 * 64);
        for (auto& v : img) v = rng.uniform();
        const auto out = model.forward(Tensor::from_data({2, 3, 64, 64}, std::move(img)));
        for (int n = 0; n < 2; ++n) {
            const auto b0 = model.decode_boxes_at_level(out, 0, n);
            for (int l = 1; l < tax.depth(); ++l) {
                const auto bl = model.decode_boxes_at_level(out, l, n);
                c.expect(b0.size() == bl.size() &&
                             std::memcmp(b0.data(), bl.data(), b0.size() * sizeof(Box)) == 0,
                         "level " + std::to_string(l) + " boxes differ");
            }
        }
    }
}

void criterion11() {
    Criterion c(11, "generator keeps every object at or under 0.70 occlusion, larger first");
    SynthTaxonomySpec tspec;
    tspec.depth = 3;
    SceneSpec sspec;
    sspec.canvas = 64;
    sspec.objects = 8;
    const Taxonomy tax = parse_taxonomy(synth_taxonomy_text(tspec));
    Rng rng(0xC11);
    long rechecked = 0;
    for (int scene_i = 0; scene_i < 200; ++scene_i) {
        std::vector<int> items(sspec.objects);
        for (auto& it : items) it = rng.uniform_int(0, tspec.leaf_count() - 1);
        const auto scene = compose_scene(tspec, sspec, tax, items, 900 + scene_i);
        for (std::size_t i = 1; i < scene.labels.size(); ++i)
            c.expect(scene.labels[i - 1].box.area() >= scene.labels[i].box.area() - 1e-12,
                     "placement order violated in scene " + std::to_string(scene_i));
        // independent pixel-mask recount from the labels
        std::vector<std::vector<std::uint8_t>> masks;
        for (const auto& lab : scene.labels) {
            const auto attrs = leaf_attributes(tspec, lab.path);
            masks.push_back(object_mask(attrs[0], 0, lab.box, sspec.canvas));
        }
        for (std::size_t i = 0; i < masks.size(); ++i) {
            long area = 0, covered = 0;
            for (std::size_t px = 0; px < masks[i].size(); ++px) {
                if (!masks[i][px]) continue;
                ++area;
                for (std::size_t j = i + 1; j < masks.size(); ++j)
                    if (masks[j][px]) { ++covered; break; }
            }
            ++rechecked;
            const double occ = area ? static_cast<double>(covered) / area : 0.0;
            c.expect(occ <= 0.70 + 1e-12, "object occluded " + std::to_string(occ) +
                                              " in scene " + std::to_string(scene_i));
        }
    }
    c.expect(rechecked > 200, "recheck covered too few objects");
    c.expect(c.seconds() < 30.0, "exceeded the 30 s budget");
}

void criterion12() {
    Criterion c(12, "greedy NMS equals the quadratic reference on 100 instances of 200 boxes");
    Rng rng(0xC12);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<DetectionPrediction> dets;
        for (int i = 0; i < 200; ++i) {
            DetectionPrediction d;
            d.box.w = rng.uniform(0.05, 0.4);
            d.box.h = rng.uniform(0.05, 0.4);
            d.box.cx = rng.uniform(d.box.w / 2, 1 - d.box.w / 2);
            d.box.cy = rng.uniform(d.box.h / 2, 1 - d.box.h / 2);
            d.class_index = {rng.uniform_int(0, 6)};
            d.confidence = {rng.uniform()};
            d.primary_confidence = d.confidence[0];
            dets.push_back(std::move(d));
        }
        const double thr = rng.uniform(0.3, 0.8);
        // reference: repeatedly take the most confident survivor, erase overlap
        std::vector<int> alive(dets.size());
        std::iota(alive.begin(), alive.end(), 0);
        std::stable_sort(alive.begin(), alive.end(), [&](int a, int b) {
            return dets[a].primary_confidence > dets[b].primary_confidence;
        });
        std::vector<int> expected;
        while (!alive.empty()) {
            const int a = alive.front();
            expected.push_back(a);
            std::vector<int> rest;
            for (std::size_t i = 1; i < alive.size(); ++i)
                if (iou(dets[a].box, dets[alive[i]].box) <= thr) rest.push_back(alive[i]);
            alive = std::move(rest);
        }
        std::sort(expected.begin(), expected.end());
        c.expect(nms_indices(dets, thr) == expected,
                 "retained sets differ at trial " + std::to_string(trial));
    }
    c.expect(c.seconds() < 5.0, "exceeded the 5 s budget");
}

struct TrainedRun {
    double flat_f1_l0 = 0;
    double hier_f_deepest = 0;
    double consistency = 0;
    double seconds = 0;
};

TrainedRun run_training(const fs::path& data_dir, const fs::path& out_dir, double alpha) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg;
    cfg.epochs = 60;
    cfg.patience = 60;
    cfg.width = 16;
    cfg.alpha = alpha;
    cfg.seed = 3;
    cfg.hier_depth = 3;

    const Taxonomy tax = load_taxonomy(data_dir.string());
    Model model(HeadVariant::make(4), tax, cfg.model_config(), cfg.seed);
    const LoadedDataset tr = load_split(data_dir.string(), "train", tax);
    const LoadedDataset va = load_split(data_dir.string(), "val", tax);
    const LoadedDataset te = load_split(data_dir.string(), "test", tax);

    fs::create_directories(out_dir);
    std::ofstream loss_csv(out_dir / "loss.csv", std::ios::trunc);
    train(model, tr, va, cfg.train_config(), &loss_csv);

    const auto evals = run_inference(model, te, cfg.conf, cfg.iou);
    const EvaluationReport rep = evaluate(evals, tax, {});

    std::ofstream(out_dir / "config.txt") << cfg.resolved_text();
    std::ofstream(out_dir / "report.csv") << evaluation_csv(rep);
    std::ostringstream summary;
    summary << evaluation_summary(rep);
    summary << "hierarchy_consistency=" << hierarchy_consistency(evals, tax) << "\n";
    std::ofstream(out_dir / "summary.txt") << summary.str();

    TrainedRun out;
    out.flat_f1_l0 = rep.flat.front().f1;
    out.hier_f_deepest = rep.hier.per_level.empty() ? 0.0 : rep.hier.per_level.back().fbeta;
    out.consistency = hierarchy_consistency(evals, tax);
    out.seconds = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count() /
                  1000.0;
    return out;
}

void criteria_8_9_10(const char* hyolo_binary) {
    const fs::path work = fs::temp_directory_path() / "hyolo_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    // One shared dataset for both runs: depth 3, 200/50/50 scenes, 64 px.
    RunConfig gen;
    gen.hier_depth = 3;
    gen.imgsz = 64;
    gen.objects = 5;
    gen.scenes_train = 200;
    gen.scenes_val = 50;
    gen.scenes_test = 50;
    gen.seed = 3;
    generate_dataset(gen.taxonomy_spec(), gen.scene_spec(),
                     {gen.scenes_train, gen.scenes_val, gen.scenes_test}, gen.seed,
                     (work / "data").string());

    TrainedRun with_penalty, without_penalty;
    {
        Criterion c(8, "desk-scale training: level-0 flat F1 >= 0.90, deepest hier F1 >= 0.70");
        with_penalty = run_training(work / "data", work / "run_alpha25", 25.0);
        c.expect(with_penalty.flat_f1_l0 >= 0.90,
                 "level-0 flat F1 = " + std::to_string(with_penalty.flat_f1_l0));
        c.expect(with_penalty.hier_f_deepest >= 0.70,
                 "deepest hier F1 = " + std::to_string(with_penalty.hier_f_deepest));
        c.expect(with_penalty.seconds <= 900.0,
                 "training took " + std::to_string(with_penalty.seconds) + " s");
        std::cout << "       alpha=25: flat F1 level0 " << with_penalty.flat_f1_l0
                  << ", deepest hier F1 " << with_penalty.hier_f_deepest << ", "
                  << with_penalty.seconds << " s\n";
    }
    {
        Criterion c(9, "hierarchy-consistency no worse than the alpha=0 run minus 0.02");
        without_penalty = run_training(work / "data", work / "run_alpha0", 0.0);
        c.expect(with_penalty.consistency >= without_penalty.consistency - 0.02,
                 "consistency " + std::to_string(with_penalty.consistency) + " vs alpha=0 " +
                     std::to_string(without_penalty.consistency));
        std::cout << "       consistency alpha=25: " << with_penalty.consistency
                  << ", alpha=0: " << without_penalty.consistency << "\n";
    }
    {
        Criterion c(10, "report merger reproduces the comparison-table shape");
        if (!hyolo_binary) {
            c.expect(false, "CLI binary path not provided");
            return;
        }
        const fs::path merged = work / "merged.csv";
        const std::string cmd = std::string(hyolo_binary) + " report --runs " +
                                (work / "run_alpha25").string() + " " +
                                (work / "run_alpha0").string() + " --out " + merged.string();
        c.expect(std::system(cmd.c_str()) == 0, "report command failed");
        std::ifstream in(merged);
        std::string header;
        std::getline(in, header);
        c.expect(header.find("alpha") != std::string::npos &&
                     header.find("hier_fbeta") != std::string::npos &&
                     header.find("worst_class_fbeta") != std::string::npos &&
                     header.find("tp_conf") != std::string::npos,
                 "merged header lacks the table columns: " + header);
        int rows = 0;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        c.expect(rows == 6, "expected 6 rows (2 runs x 3 levels), got " + std::to_string(rows));
    }
}

} // namespace

int main(int argc, char** argv) {
    const char* hyolo_binary = argc > 1 ? argv[1] : nullptr;
    try {
        criterion1();
        criterion2();
        criterion3();
        criterion4();
        criterion5();
        criterion6();
        criterion7();
        criterion11();
        criterion12();
        criteria_8_9_10(hyolo_binary);
        std::cout << "[INFO] C10 note: absolute values of the published comparison tables "
                     "depend on a dataset that is not redistributable; the suite substitutes "
                     "criteria 1-9 plus the table-shaped report above.\n";
    } catch (const std::exception& e) {
        std::cout << "[FAIL] acceptance suite aborted: " << e.what() << "\n";
        return 1;
    }
    if (g_failures) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all criteria passed\n";
    return 0;
}
