#include "hyolo/losses.hpp"

#include <cmath>

namespace hyolo {

void LossConfig::validate() const {
    if (w_box < 0 || w_dfl < 0 || w_cls < 0)
        throw ConfigError("loss weights must be non-negative");
    if (alpha < 0) throw ConfigError("alpha must be non-negative");
    if (reg_max < 2) throw ConfigError("reg_max must be at least 2");
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, Reduction reduction,
                       const Tensor* weights) {
    if (logits.shape() != targets.shape())
        throw ShapeMismatch("bce_with_logits: logits and targets differ in shape");
    if (weights && weights->shape() != logits.shape())
        throw ShapeMismatch("bce_with_logits: weight shape differs");
    auto z = logits.data();
    auto t = targets.data();
    const std::int64_t n = logits.size();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double e = std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
        acc += weights ? weights->data()[i] * e : e;
    }
    const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    std::vector<double> tv(t.begin(), t.end());
    std::vector<double> wv;
    if (weights) wv.assign(weights->data().begin(), weights->data().end());
    return make_op({1}, {acc * scale}, {logits},
                   [tv = std::move(tv), wv = std::move(wv), scale](detail::TensorNode& self) {
        detail::TensorNode* pz = self.parent_node(0);
        pz->ensure_grad();
        const double g = self.grad[0] * scale;
        for (std::size_t i = 0; i < tv.size(); ++i) {
            const double zi = pz->data[i];
            const double sig = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
            const double w = wv.empty() ? 1.0 : wv[i];
            pz->grad[i] += g * w * (sig - tv[i]);
        }
    });
}

Tensor ciou_loss(const Tensor& pred_box, const std::array<double, 4>& gt_box) {
    if (pred_box.shape() != std::vector<int>{4})
        throw ShapeMismatch("ciou_loss: pred_box must have shape {4}");
    const double pw0 = pred_box.data()[2], ph0 = pred_box.data()[3];
    const double gw = gt_box[2], gh = gt_box[3];
    if (pw0 <= 0 || ph0 <= 0)
        throw DegenerateBox("predicted box has non-positive extent");
    if (gw <= 0 || gh <= 0)
        throw DegenerateBox("ground-truth box has non-positive extent");

    const Tensor cx = at(pred_box, 0), cy = at(pred_box, 1);
    const Tensor w = at(pred_box, 2), h = at(pred_box, 3);
    const Tensor x1 = cx - w * 0.5, x2 = cx + w * 0.5;
    const Tensor y1 = cy - h * 0.5, y2 = cy + h * 0.5;

    const double gx1 = gt_box[0] - gw * 0.5, gx2 = gt_box[0] + gw * 0.5;
    const double gy1 = gt_box[1] - gh * 0.5, gy2 = gt_box[1] + gh * 0.5;
    const Tensor tgx1 = Tensor::scalar(gx1), tgx2 = Tensor::scalar(gx2);
    const Tensor tgy1 = Tensor::scalar(gy1), tgy2 = Tensor::scalar(gy2);

    const Tensor iw = max_scalar(vmin(x2, tgx2) - vmax(x1, tgx1), 0.0);
    const Tensor ih = max_scalar(vmin(y2, tgy2) - vmax(y1, tgy1), 0.0);
    const Tensor inter = iw * ih;
    const Tensor uni = w * h + gw * gh - inter;
    const Tensor iou = inter / uni;

    const Tensor rho2 = square(cx - gt_box[0]) + square(cy - gt_box[1]);
    const Tensor cw = vmax(x2, tgx2) - vmin(x1, tgx1);
    const Tensor ch = vmax(y2, tgy2) - vmin(y1, tgy1);
    const Tensor c2 = square(cw) + square(ch);

    const double pi2 = M_PI * M_PI;
    const Tensor v = square(atan(w / h) - std::atan(gw / gh)) * (4.0 / pi2);
    const Tensor one_minus_iou = 1.0 - iou;
    const Tensor alpha_v = v / (one_minus_iou + v + 1e-9);

    return one_minus_iou + rho2 / c2 + alpha_v * v;
}

Tensor dfl_loss(const Tensor& side_logits, double target_offset) {
    if (side_logits.shape().size() != 1)
        throw ShapeMismatch("dfl_loss expects rank-1 logits");
    const std::int64_t reg_max = side_logits.size();
    if (!(target_offset >= 0.0 && target_offset <= static_cast<double>(reg_max - 1)))
        throw TargetOutOfRange("dfl target " + std::to_string(target_offset) +
                               " outside [0, " + std::to_string(reg_max - 1) + "]");

    auto z = side_logits.data();
    double zmax = z[0];
    for (double x : z) zmax = std::max(zmax, x);
    std::vector<double> soft(static_cast<std::size_t>(reg_max));
    double den = 0;
    for (std::int64_t i = 0; i < reg_max; ++i) {
        soft[i] = std::exp(z[i] - zmax);
        den += soft[i];
    }
    for (auto& s : soft) s /= den;

    const std::int64_t lo = static_cast<std::int64_t>(std::floor(target_offset));
    const std::int64_t hi = lo + 1;
    const double w_hi = target_offset - static_cast<double>(lo);
    const double w_lo = 1.0 - w_hi;

    double loss = -w_lo * std::log(soft[lo]);
    if (w_hi > 0) loss -= w_hi * std::log(soft[hi]);

    return make_op({1}, {loss}, {side_logits},
                   [soft = std::move(soft), lo, hi, w_lo, w_hi](detail::TensorNode& self) {
        detail::TensorNode* pz = self.parent_node(0);
        pz->ensure_grad();
        const double g = self.grad[0];
        for (std::size_t j = 0; j < soft.size(); ++j) {
            double d = soft[j] * (w_lo + w_hi);
            if (static_cast<std::int64_t>(j) == lo) d -= w_lo;
            if (static_cast<std::int64_t>(j) == hi) d -= w_hi;
            pz->grad[j] += g * d;
        }
    });
}

Tensor hier_penalty(const Tensor& confidences, int level, int parent_class_prev,
                    const Taxonomy& tax) {
    if (confidences.shape().size() != 1)
        throw ShapeMismatch("hier_penalty expects rank-1 confidences");
    const int s = tax.level_size(level);
    if (confidences.size() != s)
        throw ShapeMismatch("hier_penalty: confidence count != classes at level");
    std::vector<double> mask(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i)
        mask[i] = tax.is_child(level, i, parent_class_prev) ? 0.0 : 1.0;
    return sum(mul(confidences, Tensor::from_data({s}, std::move(mask))));
}

Tensor cls_loss_level0(const Tensor& logits, const Tensor& targets, const LossConfig& cfg) {
    return mul_scalar(bce_with_logits(logits, targets), cfg.w_cls);
}

ClsLossResult cls_loss_level(int level, const Tensor& logits, const Tensor& targets,
                             int parent_class_prev, const Taxonomy& tax,
                             const LossConfig& cfg) {
    ClsLossResult out;
    if (level == 0 || cfg.alpha == 0.0) {
        out.loss = cls_loss_level0(logits, targets, cfg);
        return out;
    }
    const Tensor bce = bce_with_logits(logits, targets);
    const Tensor conf = sigmoid(logits);
    const Tensor pen = hier_penalty(conf, level, parent_class_prev, tax);
    out.penalty = pen.item();
    out.loss = mul_scalar(add(bce, mul_scalar(pen, cfg.alpha)), cfg.w_cls);
    return out;
}

Tensor total_loss(const std::vector<Tensor>& per_level_losses, LevelAgg agg) {
    if (per_level_losses.empty()) throw EmptyLevels("total_loss: no levels");
    Tensor acc = per_level_losses[0];
    for (std::size_t i = 1; i < per_level_losses.size(); ++i)
        acc = add(acc, per_level_losses[i]);
    if (agg == LevelAgg::Mean)
        acc = mul_scalar(acc, 1.0 / static_cast<double>(per_level_losses.size()));
    return acc;
}

} // namespace hyolo
