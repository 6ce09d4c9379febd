#ifndef HYOLO_SYNTHDATA_HPP
#define HYOLO_SYNTHDATA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hyolo/detection.hpp"
#include "hyolo/taxonomy.hpp"

namespace hyolo {

class CanvasTooSmall : public ConfigError { public: using ConfigError::ConfigError; };
class MalformedLine : public DataError { public: using DataError::DataError; };
class InvalidPath : public DataError { public: using DataError::DataError; };
class BoxOutOfRange : public DataError { public: using DataError::DataError; };

struct Image {
    int w = 0, h = 0;
    std::vector<unsigned char> rgb; // row-major, 3 bytes per pixel

    unsigned char* px(int x, int y) { return rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x); }
    const unsigned char* px(int x, int y) const {
        return rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x);
    }
};

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Class ladder for the generated hierarchy. The attribute order is fixed
/// shape-first; `depth` selects how many rungs are used (2..5).
struct SynthTaxonomySpec {
    int depth = 3;

    static const std::vector<std::string>& attribute_names();          // shape,size,color,pattern,shade
    static const std::vector<std::vector<std::string>>& attribute_values();

    int level_value_count(int level) const;
    int leaf_count() const;
    void validate() const;
};

struct SceneSpec {
    int canvas = 64;            // square canvas, pixels
    int objects = 18;           // 1 focal + co-placed extras
    double occlusion_cap = 0.70;
    int retry_budget = 10;      // placements tried per item before dropping it

    void validate() const;
};

/// Multi-level ground truth for one object.
struct HierLabel {
    std::vector<int> path; // dense class index per level, root-to-leaf
    Box box;               // normalized to the canvas
};

/// Taxonomy file text for the spec, edges in nested attribute order.
std::string synth_taxonomy_text(const SynthTaxonomySpec& spec);

/// Attribute value indices encoded in a leaf path (shape, size, color, ...).
std::vector<int> leaf_attributes(const SynthTaxonomySpec& spec, const std::vector<int>& path);

/// Rasterized footprint of one object: 1 byte per canvas pixel, 1 = opaque.
/// Shape and pattern fully determine the mask given the box, so a scene's
/// occlusion can be recomputed from its labels alone.
std::vector<std::uint8_t> object_mask(int shape, int pattern, const Box& box_norm, int canvas);

struct ComposedScene {
    Image image;
    std::vector<HierLabel> labels; // placement order: areas non-increasing
    int dropped = 0;               // items that found no placement under the cap
};

/// Places the given leaf instances largest-first at random positions,
/// rejecting placements that push any object's occluded-area fraction over
/// the cap; items with no valid position within the retry budget are dropped.
ComposedScene compose_scene(const SynthTaxonomySpec& tspec, const SceneSpec& sspec,
                            const Taxonomy& tax, const std::vector<int>& leaf_paths_flat,
                            std::uint64_t seed);

struct DatasetCounts {
    int train = 0, val = 0, test = 0;
};

struct GenerateSummary {
    std::map<std::string, long> leaf_histogram; // leaf name -> instances over all splits
    long dropped = 0;
    long scenes = 0;
};

/// Writes images/{train,val,test}/, labels/{train,val,test}/, taxonomy.txt
/// and gen-config.txt under out_dir. Same seed, same bytes.
GenerateSummary generate_dataset(const SynthTaxonomySpec& tspec, const SceneSpec& sspec,
                                 const DatasetCounts& counts, std::uint64_t seed,
                                 const std::string& out_dir);

std::string format_labels(const std::vector<HierLabel>& labels);
std::vector<HierLabel> parse_labels(const std::string& text, const Taxonomy& tax);
void write_labels(const std::string& path, const std::vector<HierLabel>& labels);
std::vector<HierLabel> read_labels(const std::string& path, const Taxonomy& tax);

struct SceneSample {
    Image image;
    std::vector<HierLabel> labels;
};

struct LoadedDataset {
    std::vector<SceneSample> scenes;
};

LoadedDataset load_split(const std::string& data_dir, const std::string& split,
                         const Taxonomy& tax);
Taxonomy load_taxonomy(const std::string& data_dir);

} // namespace hyolo

#endif
