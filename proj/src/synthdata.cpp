#include "hyolo/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hyolo/rng.hpp"

namespace fs = std::filesystem;

namespace hyolo {

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw DataError("write failure: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw DataError("not a P6 ppm: " + path);
    int w, h, maxval;
    in >> w >> h >> maxval;
    if (!in || maxval != 255 || w <= 0 || h <= 0) throw DataError("bad ppm header: " + path);
    in.get(); // single whitespace after header
    Image img;
    img.w = w;
    img.h = h;
    img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (!in) throw DataError("truncated ppm: " + path);
    return img;
}

const std::vector<std::string>& SynthTaxonomySpec::attribute_names() {
    static const std::vector<std::string> names = {"shape", "size", "color", "pattern", "shade"};
    return names;
}

const std::vector<std::vector<std::string>>& SynthTaxonomySpec::attribute_values() {
    static const std::vector<std::vector<std::string>> values = {
        {"disc", "square", "triangle"},
        {"small", "large"},
        {"red", "green", "blue"},
        {"solid", "hollow"},
        {"bright", "dark"},
    };
    return values;
}

int SynthTaxonomySpec::level_value_count(int level) const {
    return static_cast<int>(attribute_values()[level].size());
}

int SynthTaxonomySpec::leaf_count() const {
    int n = 1;
    for (int l = 0; l < depth; ++l) n *= level_value_count(l);
    return n;
}

void SynthTaxonomySpec::validate() const {
    if (depth < 2 || depth > 5)
        throw ConfigError("hier_depth must be in [2, 5], got " + std::to_string(depth));
}

void SceneSpec::validate() const {
    if (canvas < 16) throw CanvasTooSmall("canvas must be >= 16 px");
    if (objects < 1) throw ConfigError("objects per scene must be >= 1");
    if (occlusion_cap < 0.0 || occlusion_cap > 1.0)
        throw ConfigError("occlusion cap must be in [0, 1]");
    if (retry_budget < 1) throw ConfigError("retry budget must be >= 1");
}

std::string synth_taxonomy_text(const SynthTaxonomySpec& spec) {
    spec.validate();
    const auto& values = SynthTaxonomySpec::attribute_values();
    std::ostringstream out;
    out << "depth=" << spec.depth << " pad=false\n";
    // Nested enumeration; a level-l class index factors as
    // parent_index * n_l + value_index.
    std::vector<std::string> prev = {""};
    for (int l = 0; l < spec.depth; ++l) {
        std::vector<std::string> cur;
        for (const auto& parent : prev) {
            for (const auto& val : values[l]) {
                const std::string name = parent.empty() ? val : parent + "-" + val;
                out << (parent.empty() ? "ROOT" : parent) << " > " << name << "\n";
                cur.push_back(name);
            }
        }
        prev = std::move(cur);
    }
    return out.str();
}

std::vector<int> leaf_attributes(const SynthTaxonomySpec& spec, const std::vector<int>& path) {
    if (static_cast<int>(path.size()) != spec.depth)
        throw InvalidPath("path length != depth");
    std::vector<int> attrs(spec.depth);
    for (int l = 0; l < spec.depth; ++l)
        attrs[l] = path[l] % spec.level_value_count(l);
    return attrs;
}

namespace {

constexpr int kShapeDisc = 0;
constexpr int kShapeSquare = 1;
constexpr int kShapeTriangle = 2;
constexpr int kPatternHollow = 1;

bool inside_shape(int shape, double u, double v) {
    // (u, v) in [-1, 1]^2 box coordinates.
    switch (shape) {
    case kShapeDisc:
        return u * u + v * v <= 1.0;
    case kShapeSquare:
        return true;
    case kShapeTriangle: {
        // Apex at the top center, base along the bottom edge.
        const double t = (v + 1.0) / 2.0; // 0 at apex row, 1 at base
        return std::abs(u) <= t;
    }
    default:
        return false;
    }
}

bool opaque_at(int shape, int pattern, double u, double v) {
    if (!inside_shape(shape, u, v)) return false;
    if (pattern == kPatternHollow) {
        // Hollow variants keep a border band and open the middle.
        if (inside_shape(shape, u / 0.55, v / 0.55)) return false;
    }
    return true;
}

struct Rgb {
    double r, g, b;
};

Rgb base_color(int color, int shade) {
    Rgb c;
    switch (color) {
    case 0: c = {205, 55, 50}; break;  // red
    case 1: c = {55, 185, 70}; break;  // green
    default: c = {60, 80, 215}; break; // blue
    }
    const double k = shade == 0 ? 1.12 : 0.62; // bright / dark
    return {c.r * k, c.g * k, c.b * k};
}

struct PlacedObject {
    int leaf_index = 0;            // dense leaf index at the deepest level
    std::vector<int> path;
    Box box;                       // normalized
    std::vector<std::uint8_t> mask;
    long mask_area = 0;
    std::vector<std::uint8_t> visible; // pixels not yet covered by later objects
    long visible_area = 0;
    Rgb color{};
};

} // namespace

std::vector<std::uint8_t> object_mask(int shape, int pattern, const Box& box_norm, int canvas) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(canvas) * canvas, 0);
    const double x1 = box_norm.x1() * canvas, x2 = box_norm.x2() * canvas;
    const double y1 = box_norm.y1() * canvas, y2 = box_norm.y2() * canvas;
    const int px1 = std::max(0, static_cast<int>(std::floor(x1)));
    const int px2 = std::min(canvas - 1, static_cast<int>(std::ceil(x2)));
    const int py1 = std::max(0, static_cast<int>(std::floor(y1)));
    const int py2 = std::min(canvas - 1, static_cast<int>(std::ceil(y2)));
    const double w = x2 - x1, h = y2 - y1;
    if (w <= 0 || h <= 0) return mask;
    for (int y = py1; y <= py2; ++y) {
        for (int x = px1; x <= px2; ++x) {
            const double u = ((x + 0.5) - (x1 + w / 2)) / (w / 2);
            const double v = ((y + 0.5) - (y1 + h / 2)) / (h / 2);
            if (std::abs(u) <= 1.0 && std::abs(v) <= 1.0 && opaque_at(shape, pattern, u, v))
                mask[static_cast<std::size_t>(y) * canvas + x] = 1;
        }
    }
    return mask;
}

ComposedScene compose_scene(const SynthTaxonomySpec& tspec, const SceneSpec& sspec,
                            const Taxonomy& tax, const std::vector<int>& leaf_indices,
                            std::uint64_t seed) {
    tspec.validate();
    sspec.validate();
    if (leaf_indices.empty()) throw ConfigError("compose_scene: no items");
    Rng rng(seed);
    const int canvas = sspec.canvas;

    struct Pending {
        int leaf_index;
        std::vector<int> path;
        std::vector<int> attrs;
        double w_px, h_px;
        Rgb color;
    };
    std::vector<Pending> pending;
    for (int leaf : leaf_indices) {
        Pending it;
        it.leaf_index = leaf;
        it.path = tax.leaf_path(tax.node_at(tspec.depth - 1, leaf));
        it.attrs = leaf_attributes(tspec, it.path);
        const bool large = it.attrs[1] == 1;
        const double lo = large ? 0.26 : 0.13;
        const double hi = large ? 0.34 : 0.18;
        it.w_px = rng.uniform(lo, hi) * canvas;
        it.h_px = it.w_px * rng.uniform(0.85, 1.18);
        const int color = tspec.depth > 2 ? it.attrs[2] : 0;
        const int shade = tspec.depth > 4 ? it.attrs[4] : 0;
        it.color = base_color(color, shade);
        // slight per-object hue jitter
        it.color.r += rng.uniform(-10, 10);
        it.color.g += rng.uniform(-10, 10);
        it.color.b += rng.uniform(-10, 10);
        pending.push_back(std::move(it));
    }
    std::stable_sort(pending.begin(), pending.end(),
                     [](const Pending& a, const Pending& b) { return a.w_px * a.h_px > b.w_px * b.h_px; });

    ComposedScene scene;
    std::vector<PlacedObject> placed;

    for (const auto& it : pending) {
        if (it.w_px >= canvas - 2 || it.h_px >= canvas - 2)
            throw CanvasTooSmall("object extent " + std::to_string(it.w_px) +
                                 "px does not fit canvas " + std::to_string(canvas));
        bool ok = false;
        for (int attempt = 0; attempt < sspec.retry_budget && !ok; ++attempt) {
            Box box;
            box.w = it.w_px / canvas;
            box.h = it.h_px / canvas;
            box.cx = rng.uniform(box.w / 2, 1.0 - box.w / 2);
            box.cy = rng.uniform(box.h / 2, 1.0 - box.h / 2);
            auto mask = object_mask(it.attrs[0], tspec.depth > 3 ? it.attrs[3] : 0, box, canvas);
            const long area = std::accumulate(mask.begin(), mask.end(), 0L);
            if (area == 0) continue;
            // The candidate is drawn on top, so only already-placed objects
            // can lose visibility.
            bool cap_ok = true;
            for (const auto& po : placed) {
                long lost = 0;
                for (std::size_t i = 0; i < mask.size(); ++i)
                    if (mask[i] && po.visible[i]) ++lost;
                const double occ =
                    1.0 - static_cast<double>(po.visible_area - lost) / po.mask_area;
                if (occ > sspec.occlusion_cap + 1e-12) { cap_ok = false; break; }
            }
            if (!cap_ok) continue;
            PlacedObject po;
            po.leaf_index = it.leaf_index;
            po.path = it.path;
            po.box = box;
            po.mask = mask;
            po.mask_area = area;
            po.visible = std::move(mask);
            po.visible_area = area;
            po.color = it.color;
            for (auto& prev : placed) {
                for (std::size_t i = 0; i < po.mask.size(); ++i)
                    if (po.mask[i] && prev.visible[i]) {
                        prev.visible[i] = 0;
                        --prev.visible_area;
                    }
            }
            placed.push_back(std::move(po));
            ok = true;
        }
        if (!ok) ++scene.dropped;
    }

    // Noisy gray background, then objects in placement order.
    scene.image.w = canvas;
    scene.image.h = canvas;
    scene.image.rgb.resize(static_cast<std::size_t>(canvas) * canvas * 3);
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            const double g = 128 + rng.uniform(-14, 14);
            unsigned char* p = scene.image.px(x, y);
            p[0] = p[1] = p[2] = static_cast<unsigned char>(std::clamp(g, 0.0, 255.0));
        }
    for (const auto& po : placed) {
        const unsigned char r = static_cast<unsigned char>(std::clamp(po.color.r, 0.0, 255.0));
        const unsigned char g = static_cast<unsigned char>(std::clamp(po.color.g, 0.0, 255.0));
        const unsigned char b = static_cast<unsigned char>(std::clamp(po.color.b, 0.0, 255.0));
        for (int y = 0; y < canvas; ++y)
            for (int x = 0; x < canvas; ++x)
                if (po.mask[static_cast<std::size_t>(y) * canvas + x]) {
                    unsigned char* p = scene.image.px(x, y);
                    p[0] = r; p[1] = g; p[2] = b;
                }
        HierLabel label;
        label.path = po.path;
        label.box = po.box;
        scene.labels.push_back(std::move(label));
    }
    return scene;
}

std::string format_labels(const std::vector<HierLabel>& labels) {
    std::ostringstream out;
    for (const auto& l : labels) {
        for (int c : l.path) out << c << ' ';
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f", l.box.cx, l.box.cy, l.box.w,
                      l.box.h);
        out << buf << "\n";
    }
    return out.str();
}

std::vector<HierLabel> parse_labels(const std::string& text, const Taxonomy& tax) {
    std::vector<HierLabel> labels;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    const int depth = tax.depth();
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        HierLabel label;
        label.path.resize(depth);
        for (int l = 0; l < depth; ++l)
            if (!(ls >> label.path[l]))
                throw MalformedLine("label line " + std::to_string(lineno) +
                                    ": expected " + std::to_string(depth) + " class indices");
        if (!(ls >> label.box.cx >> label.box.cy >> label.box.w >> label.box.h))
            throw MalformedLine("label line " + std::to_string(lineno) + ": expected 4 box coords");
        std::string extra;
        if (ls >> extra)
            throw MalformedLine("label line " + std::to_string(lineno) + ": trailing tokens");
        for (int l = 0; l < depth; ++l)
            if (label.path[l] < 0 || label.path[l] >= tax.level_size(l))
                throw InvalidPath("label line " + std::to_string(lineno) + ": index " +
                                  std::to_string(label.path[l]) + " out of range at level " +
                                  std::to_string(l));
        for (int l = 1; l < depth; ++l)
            if (!tax.is_child(l, label.path[l], label.path[l - 1]))
                throw InvalidPath("label line " + std::to_string(lineno) +
                                  ": class at level " + std::to_string(l) +
                                  " is not a child of its level-" + std::to_string(l - 1) +
                                  " parent");
        const Box& b = label.box;
        if (!(b.cx >= 0 && b.cx <= 1 && b.cy >= 0 && b.cy <= 1 && b.w > 0 && b.h > 0 &&
              b.x1() >= -1e-6 && b.y1() >= -1e-6 && b.x2() <= 1 + 1e-6 && b.y2() <= 1 + 1e-6))
            throw BoxOutOfRange("label line " + std::to_string(lineno) +
                                ": box outside the unit canvas");
        labels.push_back(std::move(label));
    }
    return labels;
}

void write_labels(const std::string& path, const std::vector<HierLabel>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write labels: " + path);
    out << format_labels(labels);
    if (!out) throw DataError("write failure: " + path);
}

std::vector<HierLabel> read_labels(const std::string& path, const Taxonomy& tax) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read labels: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_labels(ss.str(), tax);
}

namespace {

std::string scene_stem(long index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06ld", index);
    return buf;
}

} // namespace

GenerateSummary generate_dataset(const SynthTaxonomySpec& tspec, const SceneSpec& sspec,
                                 const DatasetCounts& counts, std::uint64_t seed,
                                 const std::string& out_dir) {
    tspec.validate();
    sspec.validate();
    if (counts.train < 1 || counts.val < 1 || counts.test < 1)
        throw ConfigError("each split needs at least one scene");

    const std::string tax_text = synth_taxonomy_text(tspec);
    const Taxonomy tax = parse_taxonomy(tax_text);
    const int leaves = tspec.leaf_count();

    fs::create_directories(out_dir);
    {
        std::ofstream tf(out_dir + "/taxonomy.txt", std::ios::trunc);
        tf << tax_text;
    }

    GenerateSummary summary;
    const std::pair<std::string, int> splits[3] = {
        {"train", counts.train}, {"val", counts.val}, {"test", counts.test}};

    for (int si = 0; si < 3; ++si) {
        const auto& [split, n_scenes] = splits[si];
        fs::create_directories(out_dir + "/images/" + split);
        fs::create_directories(out_dir + "/labels/" + split);
        Rng split_rng = Rng(seed).fork(1000 + si);

        // Balanced leaf coverage: draw items from a reshuffled full deck of
        // leaves so every class count stays near the mean.
        std::vector<int> deck;
        std::size_t deck_pos = 0;
        auto draw_leaf = [&]() {
            if (deck_pos >= deck.size()) {
                deck.resize(leaves);
                std::iota(deck.begin(), deck.end(), 0);
                split_rng.shuffle(deck);
                deck_pos = 0;
            }
            return deck[deck_pos++];
        };

        for (int i = 0; i < n_scenes; ++i) {
            std::vector<int> items(sspec.objects);
            for (auto& it : items) it = draw_leaf();
            const std::uint64_t scene_seed =
                splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(si) << 32) | i));
            ComposedScene scene = compose_scene(tspec, sspec, tax, items, scene_seed);
            const std::string stem = scene_stem(i);
            write_ppm(out_dir + "/images/" + split + "/" + stem + ".ppm", scene.image);
            write_labels(out_dir + "/labels/" + split + "/" + stem + ".txt", scene.labels);
            summary.dropped += scene.dropped;
            summary.scenes += 1;
            for (const auto& l : scene.labels) {
                const int leaf = l.path[tspec.depth - 1];
                summary.leaf_histogram[tax.node(tax.node_at(tspec.depth - 1, leaf)).name] += 1;
            }
        }
    }

    {
        std::ofstream cf(out_dir + "/gen-config.txt", std::ios::trunc);
        cf << "hier_depth=" << tspec.depth << "\n"
           << "canvas=" << sspec.canvas << "\n"
           << "objects=" << sspec.objects << "\n"
           << "occlusion=" << sspec.occlusion_cap << "\n"
           << "retry_budget=" << sspec.retry_budget << "\n"
           << "scenes_train=" << counts.train << "\n"
           << "scenes_val=" << counts.val << "\n"
           << "scenes_test=" << counts.test << "\n"
           << "seed=" << seed << "\n";
    }
    return summary;
}

LoadedDataset load_split(const std::string& data_dir, const std::string& split,
                         const Taxonomy& tax) {
    LoadedDataset ds;
    const fs::path img_dir = fs::path(data_dir) / "images" / split;
    const fs::path lbl_dir = fs::path(data_dir) / "labels" / split;
    if (!fs::is_directory(img_dir))
        throw DataError("missing split directory: " + img_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(img_dir))
        if (e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        SceneSample s;
        s.image = read_ppm(f.string());
        s.labels = read_labels((lbl_dir / f.stem()).string() + ".txt", tax);
        ds.scenes.push_back(std::move(s));
    }
    if (ds.scenes.empty()) throw DataError("no scenes in split " + split);
    return ds;
}

Taxonomy load_taxonomy(const std::string& data_dir) {
    std::ifstream in(fs::path(data_dir) / "taxonomy.txt");
    if (!in) throw DataError("missing taxonomy.txt in " + data_dir);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_taxonomy(ss.str());
}

} // namespace hyolo
