#include "hyolo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "hyolo/rng.hpp"

namespace hyolo {

std::vector<CellTarget> assign_targets(const std::vector<const std::vector<HierLabel>*>& labels,
                                       int grid_h, int grid_w) {
    std::vector<CellTarget> targets;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        for (const auto& lab : *labels[n]) {
            CellTarget t;
            t.n = static_cast<int>(n);
            t.cx = std::clamp(static_cast<int>(lab.box.cx * grid_w), 0, grid_w - 1);
            t.cy = std::clamp(static_cast<int>(lab.box.cy * grid_h), 0, grid_h - 1);
            t.path = lab.path;
            t.box = lab.box;
            bool replaced = false, skip = false;
            for (auto& prev : targets) {
                if (prev.n == t.n && prev.cy == t.cy && prev.cx == t.cx) {
                    if (t.box.area() > prev.box.area()) { prev = t; }
                    replaced = true;
                    skip = true;
                    break;
                }
            }
            (void)replaced;
            if (!skip) targets.push_back(std::move(t));
        }
    }
    return targets;
}

Tensor images_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw DatasetEmpty("no images in batch");
    const int n = static_cast<int>(images.size());
    const int h = images[0]->h, w = images[0]->w;
    std::vector<double> data(static_cast<std::size_t>(n) * 3 * h * w);
    for (int ni = 0; ni < n; ++ni) {
        const Image& img = *images[ni];
        if (img.w != w || img.h != h) throw ShapeMismatch("mixed image sizes in batch");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    data[((static_cast<std::size_t>(ni) * 3 + c) * h + y) * w + x] =
                        img.rgb[3 * (static_cast<std::size_t>(y) * w + x) + c] / 255.0;
    }
    return Tensor::from_data({n, 3, h, w}, std::move(data));
}

namespace {

int argmax_at_cell(const Tensor& logits_map, int n, int y, int x) {
    const auto& s = logits_map.shape();
    const int nc = s[1];
    const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
    const double* d = logits_map.data().data();
    int best = 0;
    double best_z = -1e300;
    for (int c = 0; c < nc; ++c) {
        const double z = d[(static_cast<std::int64_t>(n) * nc + c) * hw + y * s[3] + x];
        if (z > best_z) { best_z = z; best = c; }
    }
    return best;
}

} // namespace

BatchLoss batch_loss(const Model& model, const HierHeadOutput& out,
                     const std::vector<const std::vector<HierLabel>*>& labels,
                     const LossConfig& cfg, double pos_weight) {
    cfg.validate();
    const Taxonomy& tax = model.taxonomy();
    const int depth = model.depth();
    const int gh = out.grid_h, gw = out.grid_w;
    const int rm = model.config().reg_max;
    const int batch = out.box_map.shape()[0];

    const auto targets = assign_targets(labels, gh, gw);
    const long fg = static_cast<long>(targets.size());
    const double fg_norm = 1.0 / std::max<long>(1, fg);

    BatchLoss result;
    result.fg_cells = fg;
    result.levels.resize(depth);

    // Shared box losses, computed once; every level's loss includes them.
    Tensor ciou_term = Tensor::scalar(0.0);
    Tensor dfl_term = Tensor::scalar(0.0);
    if (fg > 0) {
        std::vector<Tensor> cious, dfls;
        for (const auto& t : targets) {
            const Tensor cellz = cell_vector(out.box_map, t.n, t.cy, t.cx);
            const Tensor left = softmax_expect(slice1d(cellz, 0, rm));
            const Tensor top = softmax_expect(slice1d(cellz, rm, rm));
            const Tensor right = softmax_expect(slice1d(cellz, 2 * rm, rm));
            const Tensor bottom = softmax_expect(slice1d(cellz, 3 * rm, rm));
            const double ccx = t.cx + 0.5, ccy = t.cy + 0.5;

            // Predicted box in cell units.
            const Tensor px = ccx + (right - left) * 0.5;
            const Tensor py = ccy + (bottom - top) * 0.5;
            const Tensor pw = max_scalar(left + right, 1e-6);
            const Tensor ph = max_scalar(top + bottom, 1e-6);
            const std::array<double, 4> gt = {t.box.cx * gw, t.box.cy * gh, t.box.w * gw,
                                              t.box.h * gh};
            cious.push_back(ciou_loss(stack_scalars({px, py, pw, ph}), gt));

            const double max_off = rm - 1 - 1e-3;
            const double lt = std::clamp(ccx - (t.box.cx - t.box.w / 2) * gw, 0.0, max_off);
            const double tt = std::clamp(ccy - (t.box.cy - t.box.h / 2) * gh, 0.0, max_off);
            const double rt = std::clamp((t.box.cx + t.box.w / 2) * gw - ccx, 0.0, max_off);
            const double bt = std::clamp((t.box.cy + t.box.h / 2) * gh - ccy, 0.0, max_off);
            Tensor side_sum = dfl_loss(slice1d(cellz, 0, rm), lt);
            side_sum = add(side_sum, dfl_loss(slice1d(cellz, rm, rm), tt));
            side_sum = add(side_sum, dfl_loss(slice1d(cellz, 2 * rm, rm), rt));
            side_sum = add(side_sum, dfl_loss(slice1d(cellz, 3 * rm, rm), bt));
            dfls.push_back(mul_scalar(side_sum, 0.25));
        }
        Tensor csum = cious[0], dsum = dfls[0];
        for (std::size_t i = 1; i < cious.size(); ++i) {
            csum = add(csum, cious[i]);
            dsum = add(dsum, dfls[i]);
        }
        ciou_term = mul_scalar(csum, fg_norm);
        dfl_term = mul_scalar(dsum, fg_norm);
    }
    const Tensor reg_total =
        add(mul_scalar(ciou_term, cfg.w_box), mul_scalar(dfl_term, cfg.w_dfl));

    std::vector<Tensor> per_level;
    for (int l = 0; l < depth; ++l) {
        const int nc = tax.level_size(l);
        std::vector<double> tmap(static_cast<std::size_t>(batch) * nc * gh * gw, 0.0);
        for (const auto& t : targets) {
            const std::size_t idx =
                ((static_cast<std::size_t>(t.n) * nc + t.path[l]) * gh + t.cy) * gw + t.cx;
            tmap[idx] = 1.0;
        }
        std::vector<double> wmap;
        if (pos_weight != 1.0) {
            wmap.assign(static_cast<std::size_t>(batch) * nc * gh * gw, 1.0);
            for (const auto& t : targets)
                wmap[((static_cast<std::size_t>(t.n) * nc + t.path[l]) * gh + t.cy) * gw +
                     t.cx] = pos_weight;
        }
        const Tensor target_map = Tensor::from_data({batch, nc, gh, gw}, std::move(tmap));
        // Sum reduction normalized by foreground count, the detection-head
        // convention; a plain mean over the map starves the sparse positives.
        Tensor bce;
        if (pos_weight != 1.0) {
            const Tensor weight_map = Tensor::from_data({batch, nc, gh, gw}, std::move(wmap));
            bce = mul_scalar(
                bce_with_logits(out.level_logits[l], target_map, Reduction::Sum, &weight_map),
                fg_norm);
        } else {
            bce = mul_scalar(bce_with_logits(out.level_logits[l], target_map, Reduction::Sum),
                             fg_norm);
        }

        Tensor cls;
        double penalty_value = 0;
        if (l == 0 || cfg.alpha == 0.0 || fg == 0) {
            cls = mul_scalar(bce, cfg.w_cls);
        } else {
            std::vector<Tensor> pens;
            for (const auto& t : targets) {
                int parent;
                if (cfg.parent_source == ParentSource::Predicted)
                    parent = argmax_at_cell(out.level_logits[l - 1], t.n, t.cy, t.cx);
                else
                    parent = t.path[l - 1];
                const Tensor conf = sigmoid(cell_vector(out.level_logits[l], t.n, t.cy, t.cx));
                pens.push_back(hier_penalty(conf, l, parent, tax));
            }
            Tensor psum = pens[0];
            for (std::size_t i = 1; i < pens.size(); ++i) psum = add(psum, pens[i]);
            const Tensor pen_mean = mul_scalar(psum, fg_norm);
            penalty_value = pen_mean.item();
            cls = mul_scalar(add(bce, mul_scalar(pen_mean, cfg.alpha)), cfg.w_cls);
        }

        LevelLossBreakdown& br = result.levels[l];
        br.bce = bce.item();
        br.penalty = penalty_value;
        br.ciou = ciou_term.item();
        br.dfl = dfl_term.item();
        br.cls_total = cls.item();
        br.reg_total = reg_total.item();

        per_level.push_back(add(reg_total, cls));
    }

    result.loss = total_loss(per_level, cfg.level_agg);
    return result;
}

Tensor composite_loss(const Model& model, const Tensor& images,
                      const std::vector<const std::vector<HierLabel>*>& labels,
                      const LossConfig& cfg) {
    const HierHeadOutput out = model.forward(images);
    return batch_loss(model, out, labels, cfg).loss;
}

std::vector<ImageEval> run_inference(const Model& model, const LoadedDataset& ds,
                                     double conf_threshold, double nms_iou) {
    std::vector<ImageEval> evals;
    for (const auto& scene : ds.scenes) {
        const Tensor img = images_to_tensor({&scene.image});
        const HierHeadOutput out = model.forward(img);
        ImageEval ie;
        ie.preds = nms(model.decode(out, conf_threshold), nms_iou);
        ie.truths = scene.labels;
        evals.push_back(std::move(ie));
    }
    return evals;
}

double hierarchy_consistency(const std::vector<ImageEval>& images, const Taxonomy& tax) {
    long total = 0, ok = 0;
    for (const auto& img : images) {
        for (const auto& p : img.preds) {
            ++total;
            bool consistent = true;
            for (int l = 1; l < tax.depth(); ++l)
                if (!tax.is_child(l, p.class_index[l], p.class_index[l - 1])) {
                    consistent = false;
                    break;
                }
            if (consistent) ++ok;
        }
    }
    return total ? static_cast<double>(ok) / total : 1.0;
}

TrainResult train(Model& model, const LoadedDataset& train_ds, const LoadedDataset& val_ds,
                  const TrainConfig& cfg, std::ostream* loss_csv, std::ostream* progress) {
    if (train_ds.scenes.empty()) throw DatasetEmpty("training split is empty");
    if (val_ds.scenes.empty()) throw DatasetEmpty("validation split is empty");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
    cfg.loss.validate();

    auto params = model.parameters();
    SgdOptimizer opt(cfg.lr0, cfg.momentum);
    Rng rng(splitmix64(cfg.seed ^ 0x7261696e5f686fULL));

    if (loss_csv) *loss_csv << "epoch,level,bce,penalty,ciou,dfl,total\n";

    TrainResult result;
    std::vector<std::vector<double>> best_weights;
    double best_f = -1;
    int best_epoch = -1;

    const int n_scenes = static_cast<int>(train_ds.scenes.size());
    std::vector<int> order(n_scenes);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.warmup_epochs > 0 && epoch <= cfg.warmup_epochs) {
            opt.set_lr(cfg.lr0 * (0.1 + 0.9 * (epoch - 1) / cfg.warmup_epochs));
        } else {
            // Linear decay to lr0/10 across the run.
            const double t = cfg.epochs > 1 ? static_cast<double>(epoch - 1) / (cfg.epochs - 1) : 0.0;
            opt.set_lr(cfg.lr0 * (1.0 - 0.9 * t));
        }
        rng.shuffle(order);
        std::vector<LevelLossBreakdown> acc(model.depth());
        double total_acc = 0;
        int batches = 0;

        for (int start = 0; start < n_scenes; start += cfg.batch) {
            const int end = std::min(n_scenes, start + cfg.batch);
            std::vector<const Image*> imgs;
            std::vector<const std::vector<HierLabel>*> labs;
            for (int i = start; i < end; ++i) {
                imgs.push_back(&train_ds.scenes[order[i]].image);
                labs.push_back(&train_ds.scenes[order[i]].labels);
            }
            BatchLoss bl;
            try {
                const Tensor images = images_to_tensor(imgs);
                const HierHeadOutput out = model.forward(images);
                bl = batch_loss(model, out, labs, cfg.loss, cfg.pos_weight);
                for (auto& p : params) p.zero_grad();
                bl.loss.backward();
            } catch (const NonFiniteValue& e) {
                throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches) + ": " + e.what());
            }
            // Per-tensor norm clip: the refinement convs sit on logit-scale
            // inputs and would otherwise dominate a global norm, starving
            // every other layer of its step.
            if (cfg.grad_clip > 0) {
                for (auto& p : params) {
                    double norm2 = 0;
                    for (double g : p.grad()) norm2 += g * g;
                    const double norm = std::sqrt(norm2);
                    if (norm > cfg.grad_clip) {
                        const double scale = cfg.grad_clip / norm;
                        auto* node = p.node();
                        for (auto& g : node->grad) g *= scale;
                    }
                }
            }
            opt.step(params);
            for (int l = 0; l < model.depth(); ++l) {
                acc[l].bce += bl.levels[l].bce;
                acc[l].penalty += bl.levels[l].penalty;
                acc[l].ciou += bl.levels[l].ciou;
                acc[l].dfl += bl.levels[l].dfl;
                acc[l].cls_total += bl.levels[l].cls_total;
                acc[l].reg_total += bl.levels[l].reg_total;
            }
            total_acc += bl.loss.item();
            ++batches;
        }

        EpochLog log;
        log.epoch = epoch;
        for (auto& a : acc) {
            a.bce /= batches; a.penalty /= batches; a.ciou /= batches;
            a.dfl /= batches; a.cls_total /= batches; a.reg_total /= batches;
        }
        log.levels = acc;
        log.total = total_acc / batches;

        const auto val_evals = run_inference(model, val_ds, cfg.conf_threshold, cfg.nms_iou);
        EvalOptions eo;
        eo.match_iou = cfg.match_iou;
        double val_f = 0;
        try {
            const EvaluationReport rep = evaluate(val_evals, model.taxonomy(), eo);
            // Selection tracks the deepest-level flat F1: unlike the
            // matched-pairs hierarchical score it punishes misses and false
            // alarms, so a lucky near-empty epoch cannot win.
            val_f = rep.flat.back().f1;
        } catch (const EmptySplit&) {
            val_f = 0;
        }
        log.val_fbeta = val_f;
        result.log.push_back(log);

        if (loss_csv) {
            for (int l = 0; l < model.depth(); ++l)
                *loss_csv << epoch << ',' << l << ',' << acc[l].bce << ',' << acc[l].penalty
                          << ',' << acc[l].ciou << ',' << acc[l].dfl << ','
                          << acc[l].total() << "\n";
            loss_csv->flush();
        }
        if (progress)
            *progress << "epoch " << epoch << " loss " << log.total << " val_hier_f "
                      << val_f << "\n";

        // Ties keep the most recent weights; the patience clock only resets
        // on strict improvement.
        if (val_f >= best_f) {
            if (val_f > best_f) best_epoch = epoch;
            best_f = val_f;
            best_weights.clear();
            for (auto& p : params)
                best_weights.emplace_back(p.data().begin(), p.data().end());
        }
        if (epoch - std::max(best_epoch, 1) >= cfg.patience && epoch < cfg.epochs) {
            result.early_stopped = true;
            break;
        }
    }

    if (!best_weights.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto dst = params[i].mutable_data();
            std::copy(best_weights[i].begin(), best_weights[i].end(), dst.begin());
        }
    }
    result.best_epoch = best_epoch;
    result.best_val_fbeta = best_f;
    return result;
}

} // namespace hyolo
