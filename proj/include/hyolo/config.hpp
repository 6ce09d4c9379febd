#ifndef HYOLO_CONFIG_HPP
#define HYOLO_CONFIG_HPP

#include <cstdint>
#include <string>

#include "hyolo/losses.hpp"
#include "hyolo/synthdata.hpp"
#include "hyolo/trainer.hpp"

namespace hyolo {

/// Flat key=value run configuration. Unknown keys are rejected; every value
/// is range checked at parse time.
struct RunConfig {
    // training
    int epochs = 60;
    int patience = 30;
    int batch = 8;
    int imgsz = 64;
    double iou = 0.7;          // NMS threshold
    double conf = 0.25;        // decode confidence threshold
    double match_iou = 0.5;
    double box = 7.5;          // w_box
    double dfl = 1.5;          // w_dfl
    double cls = 2.0;          // w_cls
    double lr0 = 0.01;
    double momentum = 0.937;
    std::uint64_t seed = 0;
    // hierarchy
    int hier_depth = 3;
    double alpha = 0.0;
    int variant = 4;
    std::string level_agg = "mean";
    std::string parent_source = "predicted";
    int reg_max = 8;
    int width = 32;
    double beta = 1.0;
    // data generation
    int objects = 18;
    double occlusion = 0.70;
    int scenes_train = 200;
    int scenes_val = 50;
    int scenes_test = 50;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text);
    void validate() const;
    std::string resolved_text() const;

    LossConfig loss_config() const;
    TrainConfig train_config() const;
    ModelConfig model_config() const;
    SynthTaxonomySpec taxonomy_spec() const;
    SceneSpec scene_spec() const;
};

} // namespace hyolo

#endif
