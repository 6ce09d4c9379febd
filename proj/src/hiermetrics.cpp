#include "hyolo/hiermetrics.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace hyolo {

namespace {

std::int64_t intersection_size(const AncestorSet& a, const AncestorSet& b) {
    std::int64_t n = 0;
    auto ia = a.members.begin();
    auto ib = b.members.begin();
    while (ia != a.members.end() && ib != b.members.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else { ++n; ++ia; ++ib; }
    }
    return n;
}

} // namespace

Ratio hier_precision(const HierPair& pair, const Taxonomy& tax) {
    const AncestorSet ap = tax.ancestors(pair.predicted);
    const AncestorSet at = tax.ancestors(pair.truth);
    return Ratio(intersection_size(ap, at), static_cast<std::int64_t>(ap.size()));
}

Ratio hier_recall(const HierPair& pair, const Taxonomy& tax) {
    const AncestorSet ap = tax.ancestors(pair.predicted);
    const AncestorSet at = tax.ancestors(pair.truth);
    return Ratio(intersection_size(ap, at), static_cast<std::int64_t>(at.size()));
}

double hier_fbeta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    if (den == 0.0) return 0.0;
    return (b2 + 1.0) * precision * recall / den;
}

Ratio hier_f1(const Ratio& precision, const Ratio& recall) {
    const Ratio den = precision + recall;
    if (den.num == 0) return Ratio::zero();
    return Ratio(2, 1) * precision * recall / den;
}

HierScore hier_score(const HierPair& pair, const Taxonomy& tax, double beta) {
    HierScore s;
    s.beta = beta;
    s.precision = hier_precision(pair, tax).value();
    s.recall = hier_recall(pair, tax).value();
    s.fbeta = hier_fbeta(s.precision, s.recall, beta);
    return s;
}

AggregateReport aggregate_scores(const std::vector<PathPair>& pairs, const Taxonomy& tax,
                                 double beta, AggregationMode mode) {
    if (pairs.empty()) throw EmptyInput("aggregate_scores: no pairs");
    const int depth = tax.depth();
    for (const auto& pp : pairs) {
        if (static_cast<int>(pp.predicted.size()) != depth ||
            static_cast<int>(pp.truth.size()) != depth)
            throw IndexOutOfRange("path length does not match taxonomy depth");
    }

    AggregateReport report;
    report.beta = beta;

    struct Acc {
        double p = 0, r = 0, f = 0;
        long n = 0;
    };

    for (int l = 0; l < depth; ++l) {
        std::map<int, Acc> per_class; // truth class index -> accumulator
        Acc level_micro;
        for (const auto& pp : pairs) {
            HierPair np;
            np.predicted = tax.node_at(l, pp.predicted[l]);
            np.truth = tax.node_at(l, pp.truth[l]);
            const HierScore s = hier_score(np, tax, beta);
            Acc& a = per_class[pp.truth[l]];
            a.p += s.precision; a.r += s.recall; a.f += s.fbeta; a.n += 1;
            level_micro.p += s.precision; level_micro.r += s.recall;
            level_micro.f += s.fbeta; level_micro.n += 1;
        }

        double mp = 0, mr = 0, mf = 0;
        for (const auto& [ci, a] : per_class) {
            ClassScoreRow row;
            row.level = l;
            row.class_index = ci;
            row.class_name = tax.node(tax.node_at(l, ci)).name;
            row.precision = a.p / a.n;
            row.recall = a.r / a.n;
            row.fbeta = a.f / a.n;
            row.n = a.n;
            report.per_class.push_back(row);
            mp += row.precision; mr += row.recall; mf += row.fbeta;
            if (l == depth - 1 &&
                (report.worst_class_name.empty() || row.fbeta < report.worst_class_fbeta)) {
                report.worst_class_fbeta = row.fbeta;
                report.worst_class_name = row.class_name;
            }
        }

        LevelScoreRow lr;
        lr.level = l;
        lr.n = level_micro.n;
        const double nc = static_cast<double>(per_class.size());
        if (mode == AggregationMode::Macro) {
            lr.precision = mp / nc;
            lr.recall = mr / nc;
            lr.fbeta = mf / nc;
        } else {
            lr.precision = level_micro.p / level_micro.n;
            lr.recall = level_micro.r / level_micro.n;
            lr.fbeta = level_micro.f / level_micro.n;
        }
        report.per_level.push_back(lr);
    }
    return report;
}

std::string aggregate_report_csv(const AggregateReport& report) {
    std::ostringstream out;
    out << "level,class,precision,recall,fbeta,n\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& row : report.per_class)
        out << row.level << ',' << row.class_name << ',' << row.precision << ','
            << row.recall << ',' << row.fbeta << ',' << row.n << "\n";
    for (const auto& row : report.per_level)
        out << row.level << ",*," << row.precision << ',' << row.recall << ','
            << row.fbeta << ',' << row.n << "\n";
    out << "*,worst,,," << report.worst_class_fbeta << ",\n";
    return out.str();
}

} // namespace hyolo
