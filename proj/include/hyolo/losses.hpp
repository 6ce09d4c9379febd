#ifndef HYOLO_LOSSES_HPP
#define HYOLO_LOSSES_HPP

#include <array>

#include "hyolo/taxonomy.hpp"
#include "hyolo/tensor.hpp"

namespace hyolo {

class DegenerateBox : public DataError { public: using DataError::DataError; };
class TargetOutOfRange : public LogicError { public: using LogicError::LogicError; };
class EmptyLevels : public LogicError { public: using LogicError::LogicError; };

enum class LevelAgg { Mean, Sum };
enum class ParentSource { Predicted, GroundTruth };

struct LossConfig {
    double w_box = 7.5;
    double w_dfl = 1.5;
    double w_cls = 2.0;
    double alpha = 0.0;
    LevelAgg level_agg = LevelAgg::Mean;
    ParentSource parent_source = ParentSource::Predicted;
    int reg_max = 8;

    void validate() const;
};

/// Per-level loss components of one epoch or one batch, for logging.
/// cls_total = w_cls * (bce + alpha * penalty); reg_total = w_box * ciou +
/// w_dfl * dfl.
struct LevelLossBreakdown {
    double bce = 0;
    double penalty = 0;
    double ciou = 0;
    double dfl = 0;
    double cls_total = 0;
    double reg_total = 0;

    double total() const { return cls_total + reg_total; }
};

enum class Reduction { Mean, Sum };

/// Numerically stable binary cross entropy on logits:
/// max(z,0) - z t + log(1 + exp(-|z|)), reduced over all elements. An
/// optional per-element weight tensor scales each term (and its gradient).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets,
                       Reduction reduction = Reduction::Mean,
                       const Tensor* weights = nullptr);

/// Complete-IoU loss of a predicted box {cx,cy,w,h} against a fixed ground
/// truth: (1 - IoU) + rho^2/c^2 + alpha_v v, v the squared-atan aspect term.
/// alpha_v = v / ((1 - IoU) + v + 1e-9) participates in the gradient.
Tensor ciou_loss(const Tensor& pred_box, const std::array<double, 4>& gt_box);

/// Distribution focal loss for one box side over reg_max bins: cross entropy
/// against the two bins bracketing the fractional target; integer targets
/// reduce to the single-bin term.
Tensor dfl_loss(const Tensor& side_logits, double target_offset);

/// Sum of confidences of classes that are not children of the chosen parent:
/// sum_i (1 - delta_il) conf_il. Gradient flows through the confidences.
Tensor hier_penalty(const Tensor& confidences, int level, int parent_class_prev,
                    const Taxonomy& tax);

Tensor cls_loss_level0(const Tensor& logits, const Tensor& targets, const LossConfig& cfg);

struct ClsLossResult {
    Tensor loss;
    double penalty = 0;
};

/// w_cls * (BCE + alpha * penalty) for level >= 1; level 0 carries no
/// penalty term. With alpha = 0 this evaluates exactly the level-0 branch,
/// so the reduction to w_cls * BCE is bitwise.
ClsLossResult cls_loss_level(int level, const Tensor& logits, const Tensor& targets,
                             int parent_class_prev, const Taxonomy& tax,
                             const LossConfig& cfg);

/// Level aggregation: mean (default) or plain sum of the per-level losses.
Tensor total_loss(const std::vector<Tensor>& per_level_losses, LevelAgg agg);

} // namespace hyolo

#endif
