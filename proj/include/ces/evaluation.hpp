#pragma once

// Tolerance-based boundary matching and averaged precision / recall / F1.

#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ces/errors.hpp"

namespace ces::evaluation {

inline constexpr std::size_t kDefaultTolerance = 5;

struct MatchResult {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detected, ground truth)
    std::vector<std::size_t> false_positives;
    std::vector<std::size_t> false_negatives;
    std::size_t tolerance = kDefaultTolerance;

    std::size_t true_positives() const { return pairs.size(); }

    /// 0 when nothing was detected.
    double precision() const {
        const std::size_t detected = pairs.size() + false_positives.size();
        return detected == 0 ? 0.0 : static_cast<double>(pairs.size()) / static_cast<double>(detected);
    }

    double recall() const {
        const std::size_t truth = pairs.size() + false_negatives.size();
        return truth == 0 ? 0.0 : static_cast<double>(pairs.size()) / static_cast<double>(truth);
    }

    double f1() const {
        const double p = precision();
        const double r = recall();
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
};

inline void require_strictly_increasing(std::span<const std::size_t> v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] <= v[i - 1]) {
            throw ShapeError(std::string(what) + " boundaries must be sorted and unique");
        }
    }
}

/// Detections, in ascending order, each claim the nearest still-unmatched
/// ground-truth boundary within `tolerance` frames (the earlier one on ties).
/// Unclaimed detections are false positives; unclaimed ground truth are
/// false negatives.
inline MatchResult match(std::span<const std::size_t> detected, std::span<const std::size_t> truth,
                         std::size_t tolerance = kDefaultTolerance) {
    require_strictly_increasing(detected, "detected");
    require_strictly_increasing(truth, "ground-truth");
    MatchResult res;
    res.tolerance = tolerance;
    std::vector<bool> used(truth.size(), false);
    for (std::size_t d : detected) {
        std::size_t best = truth.size();
        std::size_t best_dist = 0;
        for (std::size_t g = 0; g < truth.size(); ++g) {
            if (used[g]) {
                continue;
            }
            const std::size_t dist = d > truth[g] ? d - truth[g] : truth[g] - d;
            if (dist <= tolerance && (best == truth.size() || dist < best_dist)) {
                best = g;
                best_dist = dist;
            }
        }
        if (best == truth.size()) {
            res.false_positives.push_back(d);
        } else {
            used[best] = true;
            res.pairs.emplace_back(d, truth[best]);
        }
    }
    for (std::size_t g = 0; g < truth.size(); ++g) {
        if (!used[g]) {
            res.false_negatives.push_back(truth[g]);
        }
    }
    return res;
}

struct LifelogScore {
    std::string id;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
};

/// Per-lifelog scores and their unweighted means.
struct EvalReport {
    std::vector<LifelogScore> lifelogs;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline EvalReport report(std::span<const std::pair<std::string, MatchResult>> results) {
    if (results.empty()) {
        throw ConfigError("report: no lifelogs to evaluate");
    }
    EvalReport rep;
    for (const auto& [id, m] : results) {
        LifelogScore s{id, m.precision(), m.recall(), m.f1(), m.true_positives(), m.false_positives.size(),
                       m.false_negatives.size()};
        rep.precision += s.precision;
        rep.recall += s.recall;
        rep.f1 += s.f1;
        rep.lifelogs.push_back(std::move(s));
    }
    const auto n = static_cast<double>(results.size());
    rep.precision /= n;
    rep.recall /= n;
    rep.f1 /= n;
    return rep;
}

inline void write_csv(std::ostream& out, const EvalReport& rep) {
    out << "id,precision,recall,f1,tp,fp,fn\n";
    out << std::fixed << std::setprecision(6);
    for (const LifelogScore& s : rep.lifelogs) {
        out << s.id << ',' << s.precision << ',' << s.recall << ',' << s.f1 << ',' << s.true_positives << ','
            << s.false_positives << ',' << s.false_negatives << '\n';
    }
    out << "average," << rep.precision << ',' << rep.recall << ',' << rep.f1 << ",,,\n";
}

inline std::string format_table(const EvalReport& rep) {
    std::size_t width = 7;
    for (const LifelogScore& s : rep.lifelogs) {
        width = std::max(width, s.id.size());
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "lifelog" << std::right << std::setw(10) << "P"
        << std::setw(10) << "R" << std::setw(10) << "F1" << std::setw(6) << "TP" << std::setw(6) << "FP"
        << std::setw(6) << "FN" << '\n';
    out << std::fixed << std::setprecision(3);
    for (const LifelogScore& s : rep.lifelogs) {
        out << std::left << std::setw(static_cast<int>(width)) << s.id << std::right << std::setw(10) << s.precision
            << std::setw(10) << s.recall << std::setw(10) << s.f1 << std::setw(6) << s.true_positives << std::setw(6)
            << s.false_positives << std::setw(6) << s.false_negatives << '\n';
    }
    out << std::left << std::setw(static_cast<int>(width)) << "average" << std::right << std::setw(10)
        << rep.precision << std::setw(10) << rep.recall << std::setw(10) << rep.f1 << '\n';
    return out.str();
}

}  // namespace ces::evaluation
