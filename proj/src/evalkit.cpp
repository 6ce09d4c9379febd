#include "hyolo/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace hyolo {

std::vector<int> nms_indices(const std::vector<DetectionPrediction>& dets,
                             double iou_threshold) {
    if (iou_threshold <= 0 || iou_threshold > 1)
        throw ConfigError("nms threshold must be in (0, 1]");
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[a].primary_confidence > dets[b].primary_confidence;
    });
    std::vector<bool> suppressed(dets.size(), false);
    std::vector<int> keep;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int a = order[i];
        if (suppressed[a]) continue;
        keep.push_back(a);
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            const int b = order[j];
            if (!suppressed[b] && iou(dets[a].box, dets[b].box) > iou_threshold)
                suppressed[b] = true;
        }
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

std::vector<DetectionPrediction> nms(const std::vector<DetectionPrediction>& dets,
                                     double iou_threshold) {
    std::vector<DetectionPrediction> out;
    for (int i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
    return out;
}

MatchResult match(const std::vector<DetectionPrediction>& preds,
                  const std::vector<HierLabel>& truths, double iou_threshold) {
    MatchResult res;
    std::vector<int> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return preds[a].primary_confidence > preds[b].primary_confidence;
    });
    std::vector<bool> truth_taken(truths.size(), false);
    for (int pi : order) {
        int best = -1;
        double best_iou = 0;
        for (std::size_t ti = 0; ti < truths.size(); ++ti) {
            if (truth_taken[ti]) continue;
            const double v = iou(preds[pi].box, truths[ti].box);
            if (v > best_iou) { best_iou = v; best = static_cast<int>(ti); }
        }
        if (best >= 0 && best_iou >= iou_threshold) {
            truth_taken[best] = true;
            res.pairs.push_back({pi, best, best_iou});
        } else {
            res.unmatched_preds.push_back(pi);
        }
    }
    for (std::size_t ti = 0; ti < truths.size(); ++ti)
        if (!truth_taken[ti]) res.unmatched_truths.push_back(static_cast<int>(ti));
    std::sort(res.unmatched_preds.begin(), res.unmatched_preds.end());
    return res;
}

namespace {

struct ConfAcc {
    double sum = 0;
    long n = 0;
    double mean() const { return n ? sum / n : 0.0; }
};

bool same_subgraph(const Taxonomy& tax, int pred_leaf_idx, int truth_leaf_idx,
                   bool strict_parent) {
    const int depth = tax.depth();
    const int pred_node = tax.node_at(depth - 1, pred_leaf_idx);
    const int truth_node = tax.node_at(depth - 1, truth_leaf_idx);
    if (strict_parent) {
        if (depth < 2) return false;
        return tax.node(pred_node).parent == tax.node(truth_node).parent;
    }
    const AncestorSet ap = tax.ancestors(pred_node);
    const AncestorSet at = tax.ancestors(truth_node);
    for (int id : ap.members)
        if (at.contains(id)) return true;
    return false;
}

} // namespace

EvaluationReport evaluate(const std::vector<ImageEval>& images, const Taxonomy& tax,
                          const EvalOptions& opts) {
    if (images.empty()) throw EmptySplit("evaluate: no images");
    const int depth = tax.depth();

    EvaluationReport rep;
    rep.images = static_cast<long>(images.size());

    struct ClassCounts {
        long tp = 0, fp = 0, fn = 0;
        ConfAcc tp_conf, fp_conf;
    };
    std::vector<std::map<int, ClassCounts>> per_level(depth);
    std::vector<PathPair> hier_pairs;

    long fp_same = 0, fp_considered = 0, fp_no_overlap = 0;

    for (const auto& img : images) {
        rep.truths += static_cast<long>(img.truths.size());
        rep.preds += static_cast<long>(img.preds.size());
        const MatchResult mr = match(img.preds, img.truths, opts.match_iou);
        rep.matched += static_cast<long>(mr.pairs.size());

        for (const auto& pair : mr.pairs) {
            const auto& p = img.preds[pair.pred_index];
            const auto& t = img.truths[pair.truth_index];
            hier_pairs.push_back({p.class_index, t.path});
            for (int l = 0; l < depth; ++l) {
                auto& counts = per_level[l];
                if (p.class_index[l] == t.path[l]) {
                    auto& c = counts[t.path[l]];
                    c.tp += 1;
                    c.tp_conf.sum += p.confidence[l];
                    c.tp_conf.n += 1;
                } else {
                    auto& cf = counts[p.class_index[l]];
                    cf.fp += 1;
                    cf.fp_conf.sum += p.confidence[l];
                    cf.fp_conf.n += 1;
                    counts[t.path[l]].fn += 1;
                }
            }
            // Matched but wrong at the leaf: counts toward the subgraph split.
            if (p.class_index[depth - 1] != t.path[depth - 1]) {
                ++fp_considered;
                if (same_subgraph(tax, p.class_index[depth - 1], t.path[depth - 1],
                                  opts.subgraph_strict_parent))
                    ++fp_same;
            }
        }
        for (int pi : mr.unmatched_preds) {
            const auto& p = img.preds[pi];
            for (int l = 0; l < depth; ++l) {
                auto& cf = per_level[l][p.class_index[l]];
                cf.fp += 1;
                cf.fp_conf.sum += p.confidence[l];
                cf.fp_conf.n += 1;
            }
            // Reference truth: best IoU regardless of matching.
            int best = -1;
            double best_iou = 0;
            for (std::size_t ti = 0; ti < img.truths.size(); ++ti) {
                const double v = iou(p.box, img.truths[ti].box);
                if (v > best_iou) { best_iou = v; best = static_cast<int>(ti); }
            }
            if (best < 0 || best_iou < opts.fp_overlap_floor) {
                ++fp_no_overlap;
            } else {
                ++fp_considered;
                if (same_subgraph(tax, p.class_index[depth - 1], img.truths[best].path[depth - 1],
                                  opts.subgraph_strict_parent))
                    ++fp_same;
            }
        }
        for (int ti : mr.unmatched_truths) {
            const auto& t = img.truths[ti];
            for (int l = 0; l < depth; ++l) per_level[l][t.path[l]].fn += 1;
        }
    }

    for (int l = 0; l < depth; ++l) {
        LevelFlatRow row;
        row.level = l;
        double psum = 0, rsum = 0, fsum = 0;
        long classes = 0;
        ConfAcc tp_means, fp_means;
        for (const auto& [ci, c] : per_level[l]) {
            (void)ci;
            row.tp += c.tp;
            row.fp += c.fp;
            row.fn += c.fn;
            if (c.tp + c.fp + c.fn == 0) continue;
            ++classes;
            // Classes without predictions report precision 0 explicitly.
            const double prec = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
            if (c.tp + c.fp == 0) ++row.zero_count_classes;
            const double rec = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
            const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
            psum += prec; rsum += rec; fsum += f1;
            if (c.tp_conf.n) { tp_means.sum += c.tp_conf.mean(); tp_means.n += 1; }
            if (c.fp_conf.n) { fp_means.sum += c.fp_conf.mean(); fp_means.n += 1; }
            row.tp_conf_global += c.tp_conf.sum;
            row.fp_conf_global += c.fp_conf.sum;
            row.tp_n += c.tp_conf.n;
            row.fp_n += c.fp_conf.n;
        }
        if (opts.aggregation == AggregationMode::Macro && classes > 0) {
            row.precision = psum / classes;
            row.recall = rsum / classes;
            row.f1 = fsum / classes;
        } else {
            const double p = row.tp + row.fp > 0 ? static_cast<double>(row.tp) / (row.tp + row.fp) : 0.0;
            const double r = row.tp + row.fn > 0 ? static_cast<double>(row.tp) / (row.tp + row.fn) : 0.0;
            row.precision = p;
            row.recall = r;
            row.f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        }
        row.tp_conf = tp_means.mean();
        row.fp_conf = fp_means.mean();
        row.tp_conf_global = row.tp_n ? row.tp_conf_global / row.tp_n : 0.0;
        row.fp_conf_global = row.fp_n ? row.fp_conf_global / row.fp_n : 0.0;
        rep.flat.push_back(row);
    }

    if (!hier_pairs.empty())
        rep.hier = aggregate_scores(hier_pairs, tax, opts.beta, opts.aggregation);
    rep.fp_subgraph_n = fp_considered;
    rep.fp_no_overlap = fp_no_overlap;
    rep.fp_same_subgraph = fp_considered ? static_cast<double>(fp_same) / fp_considered : 0.0;
    return rep;
}

std::string evaluation_csv(const EvaluationReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "level,flat_precision,flat_recall,flat_f1,hier_precision,hier_recall,hier_fbeta,"
           "tp_conf,fp_conf,tp,fp,fn\n";
    for (std::size_t l = 0; l < report.flat.size(); ++l) {
        const auto& f = report.flat[l];
        double hp = 0, hr = 0, hf = 0;
        if (l < report.hier.per_level.size()) {
            hp = report.hier.per_level[l].precision;
            hr = report.hier.per_level[l].recall;
            hf = report.hier.per_level[l].fbeta;
        }
        out << f.level << ',' << f.precision << ',' << f.recall << ',' << f.f1 << ',' << hp
            << ',' << hr << ',' << hf << ',' << f.tp_conf << ',' << f.fp_conf << ',' << f.tp
            << ',' << f.fp << ',' << f.fn << "\n";
    }
    return out.str();
}

std::string evaluation_summary(const EvaluationReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "images=" << report.images << "\n"
        << "truths=" << report.truths << "\n"
        << "predictions=" << report.preds << "\n"
        << "matched=" << report.matched << "\n";
    for (const auto& f : report.flat) {
        out << "flat_f1_level" << f.level << "=" << f.f1 << "\n";
        out << "tp_conf_level" << f.level << "=" << f.tp_conf << "\n";
        out << "fp_conf_level" << f.level << "=" << f.fp_conf << "\n";
        out << "tp_conf_global_level" << f.level << "=" << f.tp_conf_global << "\n";
        out << "fp_conf_global_level" << f.level << "=" << f.fp_conf_global << "\n";
    }
    for (const auto& h : report.hier.per_level)
        out << "hier_fbeta_level" << h.level << "=" << h.fbeta << "\n";
    out << "hier_worst_class_fbeta=" << report.hier.worst_class_fbeta << "\n"
        << "hier_worst_class=" << report.hier.worst_class_name << "\n"
        << "fp_same_subgraph=" << report.fp_same_subgraph << "\n"
        << "fp_same_subgraph_n=" << report.fp_subgraph_n << "\n"
        << "fp_no_overlap=" << report.fp_no_overlap << "\n";
    return out.str();
}

} // namespace hyolo
