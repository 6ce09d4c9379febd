#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hyolo/config.hpp"
#include "hyolo/rng.hpp"
#include "hyolo/evalkit.hpp"
#include "hyolo/model.hpp"
#include "hyolo/synthdata.hpp"
#include "hyolo/taxonomy.hpp"
#include "hyolo/trainer.hpp"

namespace fs = std::filesystem;
using namespace hyolo;

namespace {

RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.validate();
        return cfg;
    }
    return RunConfig::parse_file(path);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Model build_model_for(const RunConfig& cfg, const Taxonomy& tax) {
    if (tax.depth() != cfg.hier_depth)
        throw ModelDepthMismatch("config hier_depth=" + std::to_string(cfg.hier_depth) +
                                 " but taxonomy depth is " + std::to_string(tax.depth()));
    return Model(HeadVariant::make(cfg.variant), tax, cfg.model_config(), cfg.seed);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    const RunConfig cfg = load_config(config_path);
    const GenerateSummary summary =
        generate_dataset(cfg.taxonomy_spec(), cfg.scene_spec(),
                         {cfg.scenes_train, cfg.scenes_val, cfg.scenes_test}, cfg.seed, out_dir);
    std::cout << "scenes=" << summary.scenes << " dropped_items=" << summary.dropped << "\n";
    std::cout << "leaf histogram:\n";
    for (const auto& [name, n] : summary.leaf_histogram)
        std::cout << "  " << name << " " << n << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    const RunConfig cfg = load_config(config_path);
    const Taxonomy tax = load_taxonomy(data_dir);
    Model model = build_model_for(cfg, tax);

    const LoadedDataset train_ds = load_split(data_dir, "train", tax);
    const LoadedDataset val_ds = load_split(data_dir, "val", tax);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config.txt", cfg.resolved_text());

    std::ofstream loss_csv(fs::path(out_dir) / "loss.csv", std::ios::trunc);
    const TrainResult tr = train(model, train_ds, val_ds, cfg.train_config(), &loss_csv,
                                 &std::cout);

    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), model.named_parameters());

    const auto evals = run_inference(model, val_ds, cfg.conf, cfg.iou);
    EvalOptions eo;
    eo.match_iou = cfg.match_iou;
    eo.beta = cfg.beta;
    const EvaluationReport rep = evaluate(evals, tax, eo);
    write_text(fs::path(out_dir) / "report.csv", evaluation_csv(rep));
    std::ostringstream summary;
    summary << evaluation_summary(rep);
    summary << "hierarchy_consistency=" << hierarchy_consistency(evals, tax) << "\n";
    summary << "best_epoch=" << tr.best_epoch << "\n";
    summary << "best_val_fbeta=" << tr.best_val_fbeta << "\n";
    summary << "early_stopped=" << (tr.early_stopped ? 1 : 0) << "\n";
    summary << "epochs_run=" << tr.log.size() << "\n";
    write_text(fs::path(out_dir) / "summary.txt", summary.str());
    std::cout << "best val hier F" << cfg.beta << " " << tr.best_val_fbeta << " at epoch "
              << tr.best_epoch << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path,
             const std::string& data_dir, const std::string& split,
             const std::string& out_dir) {
    std::string cfg_path = config_path;
    if (cfg_path.empty()) {
        const fs::path beside = fs::path(checkpoint).parent_path() / "config.txt";
        if (fs::exists(beside)) cfg_path = beside.string();
    }
    const RunConfig cfg = load_config(cfg_path);
    const Taxonomy tax = load_taxonomy(data_dir);
    Model model = build_model_for(cfg, tax);
    model.load_parameters(load_checkpoint(checkpoint));

    const LoadedDataset ds = load_split(data_dir, split, tax);
    const auto evals = run_inference(model, ds, cfg.conf, cfg.iou);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config.txt", cfg.resolved_text());
    fs::create_directories(fs::path(out_dir) / "dumps");
    for (std::size_t i = 0; i < evals.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "img_%06zu.txt", i);
        write_text(fs::path(out_dir) / "dumps" / stem, dump_detections(evals[i].preds));
    }

    EvalOptions eo;
    eo.match_iou = cfg.match_iou;
    eo.beta = cfg.beta;
    const EvaluationReport rep = evaluate(evals, tax, eo);
    write_text(fs::path(out_dir) / "report.csv", evaluation_csv(rep));
    std::ostringstream summary;
    summary << evaluation_summary(rep);
    summary << "hierarchy_consistency=" << hierarchy_consistency(evals, tax) << "\n";
    write_text(fs::path(out_dir) / "summary.txt", summary.str());
    std::cout << evaluation_csv(rep);
    return 0;
}

int cmd_validate_tax(const std::string& file) {
    const Taxonomy tax = parse_taxonomy(read_text(file));
    std::cout << "valid taxonomy: depth=" << tax.depth() << " levels=[";
    for (int l = 0; l < tax.depth(); ++l) std::cout << (l ? "," : "") << tax.level_size(l);
    std::cout << "] nodes=" << tax.node_count() << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    // Small fixture: the check is about derivative correctness, not scale.
    const Taxonomy tax = parse_taxonomy(
        "depth=2 pad=false\n"
        "ROOT > a\nROOT > b\n"
        "a > a1\na > a2\nb > b1\nb > b2\n");
    ModelConfig mc;
    mc.width = 6;
    mc.reg_max = 4;
    Model model(HeadVariant::make(cfg.variant), tax, mc, cfg.seed);

    LossConfig lc = cfg.loss_config();
    if (lc.alpha == 0) lc.alpha = 0.5; // keep the penalty term in the graph
    lc.reg_max = mc.reg_max;
    // The finite-difference probe needs a locally smooth parent choice.
    lc.parent_source = ParentSource::GroundTruth;
    // Small weights keep the loss magnitude low; the central-difference
    // cancellation noise on near-zero gradients scales with it.
    lc.w_box = 0.5;
    lc.w_dfl = 0.25;
    lc.w_cls = 0.25;

    Rng rng(cfg.seed + 17);
    std::vector<double> img(3 * 16 * 16);
    for (auto& v : img) v = rng.uniform();
    const Tensor images = Tensor::from_data({1, 3, 16, 16}, std::move(img));
    std::vector<HierLabel> labels;
    labels.push_back({{0, 1}, Box{0.4, 0.45, 0.5, 0.4}});
    const std::vector<const std::vector<HierLabel>*> labs = {&labels};

    auto params = model.parameters();
    const double err = gradcheck(
        [&](const std::vector<Tensor>&) { return composite_loss(model, images, labs, lc); },
        params, 1e-3);
    std::cout << "composite loss gradcheck max rel err = " << err << "\n";
    if (!(err < 1e-4)) {
        std::cerr << "gradcheck failed: " << err << " >= 1e-4\n";
        return 4;
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_file) {
    std::ostringstream csv;
    csv << "run,variant,alpha,level,hier_precision,hier_recall,hier_fbeta,"
           "worst_class_fbeta,tp_conf,fp_conf,flat_f1\n";
    for (const auto& run : runs) {
        const RunConfig cfg = RunConfig::parse_file((fs::path(run) / "config.txt").string());
        std::map<std::string, std::string> kv;
        std::istringstream in(read_text(fs::path(run) / "summary.txt"));
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        const std::string name = fs::path(run).filename().string();
        auto get = [&](const std::string& k) { return kv.count(k) ? kv[k] : "0"; };
        // hier per-level rows come from report.csv
        std::istringstream rep(read_text(fs::path(run) / "report.csv"));
        std::getline(rep, line); // header
        while (std::getline(rep, line)) {
            std::vector<std::string> cols;
            std::istringstream ls(line);
            std::string col;
            while (std::getline(ls, col, ',')) cols.push_back(col);
            if (cols.size() < 12) continue;
            csv << name << ',' << cfg.variant << ',' << cfg.alpha << ',' << cols[0] << ','
                << cols[4] << ',' << cols[5] << ',' << cols[6] << ','
                << get("hier_worst_class_fbeta") << ',' << cols[7] << ',' << cols[8] << ','
                << cols[3] << "\n";
        }
    }
    if (out_file.empty())
        std::cout << csv.str();
    else
        write_text(out_file, csv.str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical detection and classification toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint, split = "test", tax_file, out_file;
    std::vector<std::string> runs;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--config", config_path, "run config file");
    gen->add_option("--out", out_dir, "output dataset directory")->required();

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config_path, "run config file");
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "run output directory")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    ev->add_option("--config", config_path, "run config (default: beside checkpoint)");
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--split", split, "train|val|test");
    ev->add_option("--out", out_dir, "output directory")->required();

    auto* vt = app.add_subcommand("validate-tax", "validate a taxonomy file");
    vt->add_option("file", tax_file, "taxonomy file")->required();

    auto* gc = app.add_subcommand("gradcheck", "central-difference check of the composite loss");
    gc->add_option("--config", config_path, "run config file");

    auto* rp = app.add_subcommand("report", "merge run directories into one table");
    rp->add_option("--runs", runs, "run directories")->required()->expected(-1);
    rp->add_option("--out", out_file, "output csv (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
        if (tr->parsed()) return cmd_train(config_path, data_dir, out_dir);
        if (ev->parsed()) return cmd_eval(checkpoint, config_path, data_dir, split, out_dir);
        if (vt->parsed()) return cmd_validate_tax(tax_file);
        if (gc->parsed()) return cmd_gradcheck(config_path);
        if (rp->parsed()) return cmd_report(runs, out_file);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
