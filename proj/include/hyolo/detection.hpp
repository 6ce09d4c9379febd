#ifndef HYOLO_DETECTION_HPP
#define HYOLO_DETECTION_HPP

#include <array>
#include <string>
#include <vector>

namespace hyolo {

/// Axis-aligned box as center/extent, coordinates normalized to [0,1].
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;

    double area() const { return w * h; }
    double x1() const { return cx - w / 2; }
    double y1() const { return cy - h / 2; }
    double x2() const { return cx + w / 2; }
    double y2() const { return cy + h / 2; }
};

double iou(const Box& a, const Box& b);

/// One decoded detection: a box plus the per-level class decision and its
/// sigmoid confidence. The primary confidence is the deepest level's score.
struct DetectionPrediction {
    Box box;
    std::vector<int> class_index;
    std::vector<double> confidence;
    double primary_confidence = 0;
};

/// Text dump, one line per detection:
/// `conf c0 conf0 c1 conf1 ... cx cy w h`.
std::string dump_detections(const std::vector<DetectionPrediction>& dets);
std::vector<DetectionPrediction> parse_detection_dump(const std::string& text);

} // namespace hyolo

#endif
