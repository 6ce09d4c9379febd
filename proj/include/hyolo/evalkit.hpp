#ifndef HYOLO_EVALKIT_HPP
#define HYOLO_EVALKIT_HPP

#include <string>
#include <vector>

#include "hyolo/detection.hpp"
#include "hyolo/hiermetrics.hpp"
#include "hyolo/synthdata.hpp"
#include "hyolo/taxonomy.hpp"

namespace hyolo {

class EmptySplit : public DataError { public: using DataError::DataError; };

/// Greedy class-agnostic suppression by descending primary confidence.
/// Returns indices into `dets` of the retained detections, ascending.
std::vector<int> nms_indices(const std::vector<DetectionPrediction>& dets,
                             double iou_threshold);
std::vector<DetectionPrediction> nms(const std::vector<DetectionPrediction>& dets,
                                     double iou_threshold = 0.7);

struct MatchedPair {
    int pred_index = -1;
    int truth_index = -1;
    double iou = 0;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    std::vector<int> unmatched_preds;  // false positives (no box)
    std::vector<int> unmatched_truths; // false negatives
};

/// Greedy one-to-one matching by descending prediction confidence; each
/// prediction takes the highest-IoU unmatched truth at or above the
/// threshold.
MatchResult match(const std::vector<DetectionPrediction>& preds,
                  const std::vector<HierLabel>& truths, double iou_threshold = 0.5);

struct ImageEval {
    std::vector<DetectionPrediction> preds; // post-NMS
    std::vector<HierLabel> truths;
};

struct EvalOptions {
    double match_iou = 0.5;
    double beta = 1.0;
    AggregationMode aggregation = AggregationMode::Macro;
    /// FPs whose best IoU against any truth is below this have nothing to
    /// compare against and are excluded from the same-subgraph fraction.
    double fp_overlap_floor = 0.1;
    /// false: same subgraph = shares any non-root ancestor; true: shares the
    /// immediate parent.
    bool subgraph_strict_parent = false;
};

struct LevelFlatRow {
    int level = 0;
    double precision = 0, recall = 0, f1 = 0;
    long tp = 0, fp = 0, fn = 0;
    long zero_count_classes = 0; // classes reported as 0 for lack of predictions
    double tp_conf = 0, fp_conf = 0;               // mean of per-class means
    double tp_conf_global = 0, fp_conf_global = 0; // instance-weighted
    long tp_n = 0, fp_n = 0;
};

struct EvaluationReport {
    std::vector<LevelFlatRow> flat;
    AggregateReport hier;
    double fp_same_subgraph = 0; // leaf level
    long fp_subgraph_n = 0;      // FPs entering the fraction
    long fp_no_overlap = 0;      // FPs excluded for lack of any overlapping truth
    long images = 0, truths = 0, preds = 0, matched = 0;
};

EvaluationReport evaluate(const std::vector<ImageEval>& images, const Taxonomy& tax,
                          const EvalOptions& opts = {});

std::string evaluation_csv(const EvaluationReport& report);
std::string evaluation_summary(const EvaluationReport& report); // flat key=value text

} // namespace hyolo

#endif
