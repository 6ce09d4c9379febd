#include "hyolo/model.hpp"

#include <algorithm>
#include <cmath>

#include "hyolo/rng.hpp"

namespace hyolo {

HeadVariant HeadVariant::make(int id) {
    HeadVariant v;
    v.id = id;
    switch (id) {
    case 1:
        v.export_point = ExportPoint::AfterLogits;
        v.merge_point = MergePoint::BeforeConv1;
        v.extra_conv = false;
        v.multi_source = false;
        break;
    case 2:
        v.export_point = ExportPoint::AfterLogits;
        v.merge_point = MergePoint::AfterConv2;
        v.extra_conv = false;
        v.multi_source = false;
        break;
    case 3:
        v.export_point = ExportPoint::AfterConv1;
        v.merge_point = MergePoint::AfterConv1;
        v.extra_conv = false;
        v.multi_source = false;
        break;
    case 4:
        v.export_point = ExportPoint::AfterLogits;
        v.merge_point = MergePoint::AfterFirstLogits;
        v.extra_conv = true;
        v.multi_source = false;
        break;
    case 5:
        v.export_point = ExportPoint::AfterConv2;
        v.merge_point = MergePoint::AfterConv2;
        v.extra_conv = false;
        v.multi_source = false;
        break;
    case 6:
        v.export_point = ExportPoint::AfterLogits;
        v.merge_point = MergePoint::AfterFirstLogits;
        v.extra_conv = true;
        v.multi_source = true;
        break;
    default:
        throw ConfigError("head variant must be 1..6, got " + std::to_string(id));
    }
    return v;
}

std::vector<ConcatEdge> concat_edges(const HeadVariant& variant, int depth) {
    std::vector<ConcatEdge> edges;
    for (int l = 1; l < depth; ++l) {
        edges.push_back({l - 1, variant.export_point, l, variant.merge_point});
        if (variant.multi_source && l >= 2)
            edges.push_back({0, variant.export_point, l, variant.merge_point});
    }
    return edges;
}

namespace {

int export_channels(const HeadVariant& v, int src_level, int width, const Taxonomy& tax) {
    switch (v.export_point) {
    case ExportPoint::AfterConv1:
    case ExportPoint::AfterConv2:
        return width;
    case ExportPoint::AfterLogits:
        return tax.level_size(src_level);
    }
    return 0;
}

int incoming_channels(const HeadVariant& v, int dst_level, int width, const Taxonomy& tax,
                      int depth) {
    int total = 0;
    for (const auto& e : concat_edges(v, depth))
        if (e.dst_level == dst_level) total += export_channels(v, e.src_level, width, tax);
    return total;
}

} // namespace

Model::ConvLayer Model::make_conv(const std::string& name, int in_ch, int out_ch, int k,
                                  int s, int p, Rng& rng, double bias_init) {
    ConvLayer layer;
    layer.name = name;
    layer.spec = ConvSpec{k, s, p, in_ch, out_ch};
    const int fan_in = in_ch * k * k;
    const double bound = cfg_.init_gain / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> w(static_cast<std::size_t>(out_ch) * in_ch * k * k);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    layer.weight = Tensor::from_data({out_ch, in_ch, k, k}, std::move(w), true);
    layer.bias = Tensor::from_data({out_ch}, std::vector<double>(out_ch, bias_init), true);
    return layer;
}

Model::Model(const HeadVariant& variant, const Taxonomy& tax, const ModelConfig& cfg,
             std::uint64_t seed)
    : variant_(variant), cfg_(cfg), tax_(&tax), depth_(tax.depth()) {
    if (depth_ < 1) throw ModelDepthMismatch("taxonomy must have depth >= 1");
    if (cfg.reg_max < 2) throw ConfigError("reg_max must be at least 2");
    Rng rng(seed);
    const int w = cfg_.width;

    backbone_.push_back(make_conv("backbone.0", 3, w, 3, 2, 1, rng));
    backbone_.push_back(make_conv("backbone.1", w, w, 3, 2, 1, rng));
    backbone_.push_back(make_conv("backbone.2", w, w, 3, 2, 1, rng));

    box_branch_.push_back(make_conv("box.0", w, w, 3, 1, 1, rng));
    box_branch_.push_back(make_conv("box.1", w, w, 3, 1, 1, rng));
    box_branch_.push_back(make_conv("box.2", w, 4 * cfg_.reg_max, 3, 1, 1, rng));

    const double logit_bias = cfg_.logit_bias;
    for (int l = 0; l < depth_; ++l) {
        const int nc = tax_->level_size(l);
        const int inc = l == 0 ? 0 : incoming_channels(variant_, l, w, *tax_, depth_);
        LevelStream st;
        const std::string prefix = "level" + std::to_string(l) + ".";
        int c1_in = w + (variant_.merge_point == MergePoint::BeforeConv1 ? inc : 0);
        st.conv1 = make_conv(prefix + "conv1", c1_in, w, 3, 1, 1, rng);
        int c2_in = w + (variant_.merge_point == MergePoint::AfterConv1 ? inc : 0);
        st.conv2 = make_conv(prefix + "conv2", c2_in, w, 3, 1, 1, rng);
        int l1_in = w + (variant_.merge_point == MergePoint::AfterConv2 ? inc : 0);
        const bool refined = variant_.extra_conv && l > 0;
        // Only the level's final conv carries the background-prior bias; a
        // refinement conv in front of it acts as an intermediate layer.
        st.logits1 = make_conv(prefix + "logits1", l1_in, nc, 3, 1, 1, rng,
                               refined ? 0.0 : logit_bias);
        if (refined) {
            st.logits2 = make_conv(prefix + "logits2", nc + inc, nc, 3, 1, 1, rng, logit_bias);
        }
        streams_.push_back(std::move(st));
    }
}

HierHeadOutput Model::forward(const Tensor& images, const AblationSpec* ablate) const {
    const auto& is = images.shape();
    if (is.size() != 4 || is[1] != 3) throw ShapeMismatch("forward expects {N,3,H,W} images");
    if (is[2] % cfg_.stride != 0 || is[3] % cfg_.stride != 0)
        throw ShapeMismatch("image size must be divisible by stride " +
                            std::to_string(cfg_.stride));

    Tensor feat = images;
    for (const auto& layer : backbone_) feat = silu(run(layer, feat));

    HierHeadOutput out;
    out.grid_h = feat.shape()[2];
    out.grid_w = feat.shape()[3];

    Tensor bx = feat;
    bx = silu(run(box_branch_[0], bx));
    bx = silu(run(box_branch_[1], bx));
    out.box_map = run(box_branch_[2], bx);

    const auto edges = concat_edges(variant_, depth_);
    std::vector<Tensor> exports(depth_);

    auto incoming = [&](int dst, const Tensor& own) -> Tensor {
        std::vector<Tensor> parts{own};
        for (const auto& e : edges) {
            if (e.dst_level != dst) continue;
            Tensor src = exports[e.src_level];
            if (ablate && ablate->zero_export_levels.count(e.src_level))
                src = Tensor::zeros(src.shape());
            parts.push_back(src);
        }
        return parts.size() == 1 ? own : concat_channels(parts);
    };

    for (int l = 0; l < depth_; ++l) {
        const LevelStream& st = streams_[l];
        Tensor x = feat;
        if (l > 0 && variant_.merge_point == MergePoint::BeforeConv1) x = incoming(l, x);
        x = silu(run(st.conv1, x));
        if (variant_.export_point == ExportPoint::AfterConv1) exports[l] = x;
        if (l > 0 && variant_.merge_point == MergePoint::AfterConv1) x = incoming(l, x);
        x = silu(run(st.conv2, x));
        if (variant_.export_point == ExportPoint::AfterConv2) exports[l] = x;
        if (l > 0 && variant_.merge_point == MergePoint::AfterConv2) x = incoming(l, x);
        Tensor y = run(st.logits1, x);
        if (st.logits2) {
            Tensor merged = incoming(l, y); // AfterFirstLogits merge
            y = run(*st.logits2, merged);
        }
        if (variant_.export_point == ExportPoint::AfterLogits) exports[l] = y;
        out.level_logits.push_back(y);
    }
    return out;
}

Box decode_cell_box(const double* z, int reg_max, int cy, int cx, int grid_h, int grid_w) {
    double side[4];
    for (int s = 0; s < 4; ++s) {
        const double* g = z + s * reg_max;
        double zmax = g[0];
        for (int i = 1; i < reg_max; ++i) zmax = std::max(zmax, g[i]);
        double den = 0, e = 0;
        for (int i = 0; i < reg_max; ++i) {
            const double p = std::exp(g[i] - zmax);
            den += p;
            e += i * p;
        }
        side[s] = e / den; // distance from the cell center, cell units
    }
    const double ccx = cx + 0.5, ccy = cy + 0.5;
    double x1 = (ccx - side[0]) / grid_w, y1 = (ccy - side[1]) / grid_h;
    double x2 = (ccx + side[2]) / grid_w, y2 = (ccy + side[3]) / grid_h;
    x1 = std::clamp(x1, 0.0, 1.0);
    y1 = std::clamp(y1, 0.0, 1.0);
    x2 = std::clamp(x2, 0.0, 1.0);
    y2 = std::clamp(y2, 0.0, 1.0);
    return Box{(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
}

std::vector<DetectionPrediction> Model::decode(const HierHeadOutput& out,
                                               double conf_threshold) const {
    std::vector<DetectionPrediction> dets;
    const int n = out.box_map.shape()[0];
    const int gh = out.grid_h, gw = out.grid_w;
    const int rm = cfg_.reg_max;
    const double* box_data = out.box_map.data().data();

    for (int ni = 0; ni < n; ++ni) {
        for (int y = 0; y < gh; ++y) {
            for (int x = 0; x < gw; ++x) {
                DetectionPrediction d;
                for (int l = 0; l < depth_; ++l) {
                    const int nc = tax_->level_size(l);
                    const double* lz = out.level_logits[l].data().data();
                    const std::int64_t hw = static_cast<std::int64_t>(gh) * gw;
                    int best = 0;
                    double best_z = -1e300;
                    for (int c = 0; c < nc; ++c) {
                        const double z =
                            lz[(static_cast<std::int64_t>(ni) * nc + c) * hw + y * gw + x];
                        if (z > best_z) { best_z = z; best = c; }
                    }
                    d.class_index.push_back(best);
                    d.confidence.push_back(1.0 / (1.0 + std::exp(-best_z)));
                }
                d.primary_confidence = d.confidence.back();
                if (d.primary_confidence < conf_threshold) continue;
                std::vector<double> cellz(4 * rm);
                const std::int64_t hw = static_cast<std::int64_t>(gh) * gw;
                for (int c = 0; c < 4 * rm; ++c)
                    cellz[c] = box_data[(static_cast<std::int64_t>(ni) * 4 * rm + c) * hw +
                                        y * gw + x];
                d.box = decode_cell_box(cellz.data(), rm, y, x, gh, gw);
                dets.push_back(std::move(d));
            }
        }
    }
    return dets;
}

std::vector<Box> Model::decode_boxes_at_level(const HierHeadOutput& out, int level,
                                              int image_index) const {
    if (level < 0 || level >= depth_) throw LevelOutOfRange("decode level");
    // Every level reads the one shared box map; `level` only names the caller.
    std::vector<Box> boxes;
    const int gh = out.grid_h, gw = out.grid_w;
    const int rm = cfg_.reg_max;
    const double* box_data = out.box_map.data().data();
    const std::int64_t hw = static_cast<std::int64_t>(gh) * gw;
    for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x) {
            std::vector<double> cellz(4 * rm);
            for (int c = 0; c < 4 * rm; ++c)
                cellz[c] = box_data[(static_cast<std::int64_t>(image_index) * 4 * rm + c) * hw +
                                    y * gw + x];
            boxes.push_back(decode_cell_box(cellz.data(), rm, y, x, gh, gw));
        }
    return boxes;
}

std::vector<const Model::ConvLayer*> Model::all_layers() const {
    std::vector<const ConvLayer*> layers;
    for (const auto& l : backbone_) layers.push_back(&l);
    for (const auto& l : box_branch_) layers.push_back(&l);
    for (const auto& st : streams_) {
        layers.push_back(&st.conv1);
        layers.push_back(&st.conv2);
        layers.push_back(&st.logits1);
        if (st.logits2) layers.push_back(&*st.logits2);
    }
    return layers;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (const auto* l : all_layers()) {
        out.push_back(l->weight);
        out.push_back(l->bias);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto* l : all_layers()) {
        out.emplace_back(l->name + ".weight", l->weight);
        out.emplace_back(l->name + ".bias", l->bias);
    }
    return out;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& t : parameters()) n += t.size();
    return n;
}

void Model::load_parameters(const std::vector<std::pair<std::string, Tensor>>& params) {
    auto mine = named_parameters();
    if (params.size() != mine.size())
        throw DataError("checkpoint parameter count mismatch: " +
                        std::to_string(params.size()) + " vs " + std::to_string(mine.size()));
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (params[i].first != mine[i].first)
            throw DataError("checkpoint parameter '" + params[i].first +
                            "' does not match model parameter '" + mine[i].first + "'");
        if (params[i].second.shape() != mine[i].second.shape())
            throw DataError("checkpoint shape mismatch for " + params[i].first);
        auto dst = mine[i].second.mutable_data();
        auto src = params[i].second.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

} // namespace hyolo
