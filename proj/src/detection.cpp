#include "hyolo/detection.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "hyolo/errors.hpp"

namespace hyolo {

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
    const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

std::string dump_detections(const std::vector<DetectionPrediction>& dets) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const auto& d : dets) {
        out << d.primary_confidence;
        for (std::size_t l = 0; l < d.class_index.size(); ++l)
            out << ' ' << d.class_index[l] << ' ' << d.confidence[l];
        out << ' ' << d.box.cx << ' ' << d.box.cy << ' ' << d.box.w << ' ' << d.box.h << "\n";
    }
    return out.str();
}

std::vector<DetectionPrediction> parse_detection_dump(const std::string& text) {
    std::vector<DetectionPrediction> dets;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        // 1 primary + 2 per level + 4 box
        if (vals.size() < 7 || (vals.size() - 5) % 2 != 0)
            throw DataError("malformed detection dump line: " + line);
        DetectionPrediction d;
        d.primary_confidence = vals[0];
        const std::size_t levels = (vals.size() - 5) / 2;
        for (std::size_t l = 0; l < levels; ++l) {
            d.class_index.push_back(static_cast<int>(vals[1 + 2 * l]));
            d.confidence.push_back(vals[2 + 2 * l]);
        }
        const std::size_t b = 1 + 2 * levels;
        d.box = Box{vals[b], vals[b + 1], vals[b + 2], vals[b + 3]};
        dets.push_back(std::move(d));
    }
    return dets;
}

} // namespace hyolo
