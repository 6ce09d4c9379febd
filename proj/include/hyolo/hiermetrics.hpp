#ifndef HYOLO_HIERMETRICS_HPP
#define HYOLO_HIERMETRICS_HPP

#include <string>
#include <vector>

#include "hyolo/rational.hpp"
#include "hyolo/taxonomy.hpp"

namespace hyolo {

class EmptyInput : public DataError { public: using DataError::DataError; };

/// One prediction/ground-truth node pair; both non-root nodes of one taxonomy.
struct HierPair {
    int predicted = -1;
    int truth = -1;
};

struct HierScore {
    double precision = 0.0;
    double recall = 0.0;
    double fbeta = 0.0;
    double beta = 1.0;
};

/// |Ancest(pred) ∩ Ancest(truth)| / |Ancest(pred)|, exact.
Ratio hier_precision(const HierPair& pair, const Taxonomy& tax);

/// |Ancest(pred) ∩ Ancest(truth)| / |Ancest(truth)|, exact.
Ratio hier_recall(const HierPair& pair, const Taxonomy& tax);

/// (beta^2 + 1) P R / (beta^2 P + R); 0 when the denominator vanishes.
double hier_fbeta(double precision, double recall, double beta);

/// Exact F1 for the beta = 1 case.
Ratio hier_f1(const Ratio& precision, const Ratio& recall);

HierScore hier_score(const HierPair& pair, const Taxonomy& tax, double beta);

/// A matched detection's class outcome, one dense index per level for both
/// the predicted path and the ground-truth path.
struct PathPair {
    std::vector<int> predicted;
    std::vector<int> truth;
};

enum class AggregationMode { Macro, Micro };

struct ClassScoreRow {
    int level = 0;
    int class_index = 0;
    std::string class_name;
    double precision = 0.0;
    double recall = 0.0;
    double fbeta = 0.0;
    long n = 0;
};

struct LevelScoreRow {
    int level = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fbeta = 0.0;
    long n = 0;
};

struct AggregateReport {
    std::vector<ClassScoreRow> per_class;  // grouped by ground-truth class
    std::vector<LevelScoreRow> per_level;
    double worst_class_fbeta = 0.0;        // minimum per-class mean at the deepest level
    std::string worst_class_name;
    double beta = 1.0;
};

/// Scores every pair at every level (the pair of nodes at that level) and
/// aggregates per class and per level. Macro averages class means; micro
/// averages over pairs directly. Worst class is taken at the deepest level.
AggregateReport aggregate_scores(const std::vector<PathPair>& pairs, const Taxonomy& tax,
                                 double beta = 1.0,
                                 AggregationMode mode = AggregationMode::Macro);

/// CSV with columns level,class,precision,recall,fbeta,n; per-level summary
/// rows use class `*`, and the worst-class row is `*,worst`.
std::string aggregate_report_csv(const AggregateReport& report);

} // namespace hyolo

#endif
