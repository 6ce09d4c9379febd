#ifndef HYOLO_MODEL_HPP
#define HYOLO_MODEL_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hyolo/detection.hpp"
#include "hyolo/taxonomy.hpp"
#include "hyolo/tensor.hpp"

namespace hyolo {

class ModelDepthMismatch : public ConfigError { public: using ConfigError::ConfigError; };

/// Where a level exports its features from, and where the next level merges
/// them. Each classification stream is Conv1 -> Conv2 -> Logits1
/// [-> Logits2 when the variant refines after the merge].
enum class ExportPoint { AfterConv1, AfterConv2, AfterLogits };
enum class MergePoint { BeforeConv1, AfterConv1, AfterConv2, AfterFirstLogits };

struct HeadVariant {
    int id = 4;
    ExportPoint export_point = ExportPoint::AfterLogits;
    MergePoint merge_point = MergePoint::AfterFirstLogits;
    bool extra_conv = true;   // a second class conv refines the merged features
    bool multi_source = false; // level 0 also exports to every level >= 2

    static HeadVariant make(int id);
    std::string name() const { return "V" + std::to_string(id); }
};

/// One feature-concatenation edge between classification streams.
struct ConcatEdge {
    int src_level;
    ExportPoint src_point;
    int dst_level;
    MergePoint dst_point;

    bool operator<(const ConcatEdge& o) const {
        return std::tie(src_level, src_point, dst_level, dst_point) <
               std::tie(o.src_level, o.src_point, o.dst_level, o.dst_point);
    }
    bool operator==(const ConcatEdge& o) const {
        return src_level == o.src_level && src_point == o.src_point &&
               dst_level == o.dst_level && dst_point == o.dst_point;
    }
};

std::vector<ConcatEdge> concat_edges(const HeadVariant& variant, int depth);

struct ModelConfig {
    int width = 32;       // backbone / head channel width
    int reg_max = 8;      // DFL bins per box side
    int stride = 8;       // fixed by the three stride-2 backbone convs
    double logit_bias = 0.0; // initial bias of each level's final class conv
    // Uniform weight-init bound is init_gain / sqrt(fan_in). The default
    // sqrt(6) keeps activation variance roughly constant through the SiLU
    // stack, which has no normalization layers to correct attenuation.
    double init_gain = 2.449489742783178;
};

/// Raw forward outputs: one class-logit map per level and a single box map
/// shared by all levels.
struct HierHeadOutput {
    std::vector<Tensor> level_logits; // {N, S_l, h, w}
    Tensor box_map;                   // {N, 4*reg_max, h, w}
    int grid_h = 0;
    int grid_w = 0;
};

/// Zero the listed levels' exported features before any concatenation; used
/// by the wiring probes.
struct AblationSpec {
    std::set<int> zero_export_levels;
};

/// Toy detector: three stride-2 backbone convs, a shared box branch, and one
/// classification stream per taxonomy level wired per the head variant.
class Model {
public:
    Model(const HeadVariant& variant, const Taxonomy& tax, const ModelConfig& cfg,
          std::uint64_t seed);

    HierHeadOutput forward(const Tensor& images, const AblationSpec* ablate = nullptr) const;

    std::vector<DetectionPrediction> decode(const HierHeadOutput& out, double conf_threshold) const;

    /// The shared box map decoded as level `level` sees it. All levels read
    /// the same map; the invariance test compares these byte for byte.
    std::vector<Box> decode_boxes_at_level(const HierHeadOutput& out, int level,
                                           int image_index) const;

    const HeadVariant& variant() const { return variant_; }
    const ModelConfig& config() const { return cfg_; }
    const Taxonomy& taxonomy() const { return *tax_; }
    int depth() const { return depth_; }

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::int64_t parameter_count() const;
    void load_parameters(const std::vector<std::pair<std::string, Tensor>>& params);

private:
    struct ConvLayer {
        Tensor weight;
        Tensor bias;
        ConvSpec spec;
        std::string name;
    };

    ConvLayer make_conv(const std::string& name, int in_ch, int out_ch, int k, int s, int p,
                        class Rng& rng, double bias_init = 0.0);
    Tensor run(const ConvLayer& layer, const Tensor& x) const { return conv2d(x, layer.weight, layer.bias, layer.spec); }

    HeadVariant variant_;
    ModelConfig cfg_;
    const Taxonomy* tax_;
    int depth_;

    std::vector<ConvLayer> backbone_;
    std::vector<ConvLayer> box_branch_;
    struct LevelStream {
        ConvLayer conv1;
        ConvLayer conv2;
        ConvLayer logits1;
        std::optional<ConvLayer> logits2;
    };
    std::vector<LevelStream> streams_;

    std::vector<const ConvLayer*> all_layers() const;
};

/// Decode one cell's four DFL side distributions into a normalized box.
Box decode_cell_box(const double* side_logits, int reg_max, int cy, int cx, int grid_h,
                    int grid_w);

} // namespace hyolo

#endif
