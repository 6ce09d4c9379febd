#ifndef HYOLO_TRAINER_HPP
#define HYOLO_TRAINER_HPP

#include <iosfwd>
#include <optional>

#include "hyolo/evalkit.hpp"
#include "hyolo/losses.hpp"
#include "hyolo/model.hpp"
#include "hyolo/synthdata.hpp"

namespace hyolo {

class DatasetEmpty : public DataError { public: using DataError::DataError; };
class NonFiniteLoss : public NumericError { public: using NumericError::NumericError; };

/// One ground-truth box assigned to the grid cell holding its center. Cell
/// collisions keep the larger box.
struct CellTarget {
    int n = 0, cy = 0, cx = 0;
    std::vector<int> path;
    Box box;
};

std::vector<CellTarget> assign_targets(const std::vector<const std::vector<HierLabel>*>& labels,
                                       int grid_h, int grid_w);

Tensor images_to_tensor(const std::vector<const Image*>& images);

struct BatchLoss {
    Tensor loss;
    std::vector<LevelLossBreakdown> levels;
    long fg_cells = 0;
};

/// The full training objective on one forward output: per level, BCE over
/// the class map (sum normalized by foreground count) plus the alpha-scaled
/// hierarchy penalty on foreground cells; CIoU and DFL on the shared box
/// branch enter every level's loss. Levels combine per cfg.level_agg.
BatchLoss batch_loss(const Model& model, const HierHeadOutput& out,
                     const std::vector<const std::vector<HierLabel>*>& labels,
                     const LossConfig& cfg, double pos_weight = 1.0);

/// Convenience wrapper for gradient checks: forward + batch_loss as one
/// scalar function of the parameters.
Tensor composite_loss(const Model& model, const Tensor& images,
                      const std::vector<const std::vector<HierLabel>*>& labels,
                      const LossConfig& cfg);

struct TrainConfig {
    int epochs = 60;
    int patience = 30;
    int batch = 8;
    double lr0 = 0.01;
    double momentum = 0.937;
    double conf_threshold = 0.25;
    double nms_iou = 0.7;
    double match_iou = 0.5;
    double grad_clip = 3.0;  // per-tensor gradient norm cap; <= 0 disables
    int warmup_epochs = 0;   // optional linear lr ramp from lr0/10
    double pos_weight = 1.0; // extra weight on foreground class targets
    LossConfig loss;
    std::uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    std::vector<LevelLossBreakdown> levels;
    double total = 0;
    double val_fbeta = 0; // deepest-level hierarchical F-beta on the val split
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_fbeta = 0;
    bool early_stopped = false;
};

/// Deterministic single-threaded SGD training with early stopping on the
/// validation deepest-level hierarchical F1; the best-epoch weights are
/// restored before returning. `loss_csv`, when set, receives rows
/// `epoch,level,bce,penalty,ciou,dfl,total`.
TrainResult train(Model& model, const LoadedDataset& train_ds, const LoadedDataset& val_ds,
                  const TrainConfig& cfg, std::ostream* loss_csv = nullptr,
                  std::ostream* progress = nullptr);

/// Runs the detector over a split: forward, decode, NMS.
std::vector<ImageEval> run_inference(const Model& model, const LoadedDataset& ds,
                                     double conf_threshold, double nms_iou);

/// Fraction of detections whose per-level argmax path satisfies the child
/// relation at every step.
double hierarchy_consistency(const std::vector<ImageEval>& images, const Taxonomy& tax);

} // namespace hyolo

#endif
