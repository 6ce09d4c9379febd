#include "hyolo/config.hpp"

#include <fstream>
#include <sstream>

#include "hyolo/model.hpp"

namespace hyolo {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos;
        unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (...) {
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

} // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");

        if (key == "epochs") cfg.epochs = to_int(key, val);
        else if (key == "patience") cfg.patience = to_int(key, val);
        else if (key == "batch") cfg.batch = to_int(key, val);
        else if (key == "imgsz") cfg.imgsz = to_int(key, val);
        else if (key == "iou") cfg.iou = to_double(key, val);
        else if (key == "conf") cfg.conf = to_double(key, val);
        else if (key == "match_iou") cfg.match_iou = to_double(key, val);
        else if (key == "box") cfg.box = to_double(key, val);
        else if (key == "dfl") cfg.dfl = to_double(key, val);
        else if (key == "cls") cfg.cls = to_double(key, val);
        else if (key == "lr0") cfg.lr0 = to_double(key, val);
        else if (key == "momentum") cfg.momentum = to_double(key, val);
        else if (key == "seed") cfg.seed = to_u64(key, val);
        else if (key == "hier_depth") cfg.hier_depth = to_int(key, val);
        else if (key == "alpha") cfg.alpha = to_double(key, val);
        else if (key == "variant") {
            std::string v = val;
            if (!v.empty() && (v[0] == 'V' || v[0] == 'v')) v = v.substr(1);
            cfg.variant = to_int(key, v);
        }
        else if (key == "level_agg") cfg.level_agg = val;
        else if (key == "parent_source") cfg.parent_source = val;
        else if (key == "reg_max") cfg.reg_max = to_int(key, val);
        else if (key == "width") cfg.width = to_int(key, val);
        else if (key == "beta") cfg.beta = to_double(key, val);
        else if (key == "objects") cfg.objects = to_int(key, val);
        else if (key == "occlusion") cfg.occlusion = to_double(key, val);
        else if (key == "scenes_train") cfg.scenes_train = to_int(key, val);
        else if (key == "scenes_val") cfg.scenes_val = to_int(key, val);
        else if (key == "scenes_test") cfg.scenes_test = to_int(key, val);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

void RunConfig::validate() const {
    if (epochs < 1) throw ConfigError("key 'epochs': must be >= 1");
    if (patience < 1) throw ConfigError("key 'patience': must be >= 1");
    if (batch < 1) throw ConfigError("key 'batch': must be >= 1");
    if (imgsz < 16 || imgsz % 8 != 0)
        throw ConfigError("key 'imgsz': must be >= 16 and divisible by 8");
    if (iou <= 0 || iou > 1) throw ConfigError("key 'iou': must be in (0, 1]");
    if (conf < 0 || conf > 1) throw ConfigError("key 'conf': must be in [0, 1]");
    if (match_iou <= 0 || match_iou > 1) throw ConfigError("key 'match_iou': must be in (0, 1]");
    if (box < 0) throw ConfigError("key 'box': must be >= 0");
    if (dfl < 0) throw ConfigError("key 'dfl': must be >= 0");
    if (cls < 0) throw ConfigError("key 'cls': must be >= 0");
    if (lr0 <= 0) throw ConfigError("key 'lr0': must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("key 'momentum': must be in [0, 1)");
    if (hier_depth < 1 || hier_depth > 5) throw ConfigError("key 'hier_depth': must be in [1, 5]");
    if (alpha < 0) throw ConfigError("key 'alpha': must be >= 0");
    if (variant < 1 || variant > 6) throw ConfigError("key 'variant': must be 1..6");
    if (level_agg != "mean" && level_agg != "sum")
        throw ConfigError("key 'level_agg': must be mean or sum");
    if (parent_source != "predicted" && parent_source != "ground_truth")
        throw ConfigError("key 'parent_source': must be predicted or ground_truth");
    if (reg_max < 2) throw ConfigError("key 'reg_max': must be >= 2");
    if (width < 2) throw ConfigError("key 'width': must be >= 2");
    if (beta < 0) throw ConfigError("key 'beta': must be >= 0");
    if (objects < 1) throw ConfigError("key 'objects': must be >= 1");
    if (occlusion < 0 || occlusion > 1) throw ConfigError("key 'occlusion': must be in [0, 1]");
    if (scenes_train < 1) throw ConfigError("key 'scenes_train': must be >= 1");
    if (scenes_val < 1) throw ConfigError("key 'scenes_val': must be >= 1");
    if (scenes_test < 1) throw ConfigError("key 'scenes_test': must be >= 1");
}

std::string RunConfig::resolved_text() const {
    std::ostringstream out;
    out << "epochs=" << epochs << "\n"
        << "patience=" << patience << "\n"
        << "batch=" << batch << "\n"
        << "imgsz=" << imgsz << "\n"
        << "iou=" << iou << "\n"
        << "conf=" << conf << "\n"
        << "match_iou=" << match_iou << "\n"
        << "box=" << box << "\n"
        << "dfl=" << dfl << "\n"
        << "cls=" << cls << "\n"
        << "lr0=" << lr0 << "\n"
        << "momentum=" << momentum << "\n"
        << "seed=" << seed << "\n"
        << "hier_depth=" << hier_depth << "\n"
        << "alpha=" << alpha << "\n"
        << "variant=" << variant << "\n"
        << "level_agg=" << level_agg << "\n"
        << "parent_source=" << parent_source << "\n"
        << "reg_max=" << reg_max << "\n"
        << "width=" << width << "\n"
        << "beta=" << beta << "\n"
        << "objects=" << objects << "\n"
        << "occlusion=" << occlusion << "\n"
        << "scenes_train=" << scenes_train << "\n"
        << "scenes_val=" << scenes_val << "\n"
        << "scenes_test=" << scenes_test << "\n";
    return out.str();
}

LossConfig RunConfig::loss_config() const {
    LossConfig lc;
    lc.w_box = box;
    lc.w_dfl = dfl;
    lc.w_cls = cls;
    lc.alpha = alpha;
    lc.level_agg = level_agg == "sum" ? LevelAgg::Sum : LevelAgg::Mean;
    lc.parent_source =
        parent_source == "ground_truth" ? ParentSource::GroundTruth : ParentSource::Predicted;
    lc.reg_max = reg_max;
    return lc;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.patience = patience;
    tc.batch = batch;
    tc.lr0 = lr0;
    tc.momentum = momentum;
    tc.conf_threshold = conf;
    tc.nms_iou = iou;
    tc.match_iou = match_iou;
    tc.loss = loss_config();
    tc.seed = seed;
    return tc;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.width = width;
    mc.reg_max = reg_max;
    return mc;
}

SynthTaxonomySpec RunConfig::taxonomy_spec() const {
    SynthTaxonomySpec ts;
    ts.depth = hier_depth;
    return ts;
}

SceneSpec RunConfig::scene_spec() const {
    SceneSpec ss;
    ss.canvas = imgsz;
    ss.objects = objects;
    ss.occlusion_cap = occlusion;
    return ss;
}

} // namespace hyolo
