#pragma once

// Supervised pruning of candidate boundaries. Two clusters are formed from
// the frames on either side of a candidate; their consistency indicators are
// scored by a linear SVM trained on labeled candidates.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ces/binary_io.hpp"
#include "ces/errors.hpp"
#include "ces/numerics.hpp"
#include "ces/segmentation.hpp"

namespace ces::pruning {

using segmentation::Segmentation;

inline constexpr std::size_t kIndicatorCount = 6;
using IndicatorArray = std::array<double, kIndicatorCount>;

struct BoundaryIndicators {
    double correlation = 0.0;
    double compact_left = 0.0;
    double compact_right = 0.0;
    double compact_union = 0.0;
    double betacv = 0.0;
    double ncut = 0.0;
    bool correlation_degenerate = false;

    IndicatorArray values() const {
        return {correlation, compact_left, compact_right, compact_union, betacv, ncut};
    }
};

inline constexpr std::array<const char*, kIndicatorCount> kIndicatorNames{
    "correlation", "compact_left", "compact_right", "compact_union", "betacv", "ncut"};

/// Mean Euclidean distance of the rows to their centroid.
inline double compactness(const Matrix& cluster) {
    if (cluster.rows() == 0) {
        throw ShapeError("compactness: empty cluster");
    }
    const Eigen::RowVectorXd centroid = cluster.colwise().mean();
    return (cluster.rowwise() - centroid).rowwise().norm().mean();
}

/// Mean intra-cluster pairwise distance over mean inter-cluster pairwise distance.
inline double betacv(const Matrix& left, const Matrix& right) {
    double intra = 0.0;
    std::size_t intra_pairs = 0;
    for (const Matrix* c : {&left, &right}) {
        for (Eigen::Index i = 0; i < c->rows(); ++i) {
            for (Eigen::Index j = i + 1; j < c->rows(); ++j) {
                intra += (c->row(i) - c->row(j)).norm();
                ++intra_pairs;
            }
        }
    }
    double inter = 0.0;
    for (Eigen::Index i = 0; i < left.rows(); ++i) {
        for (Eigen::Index j = 0; j < right.rows(); ++j) {
            inter += (left.row(i) - right.row(j)).norm();
        }
    }
    const double inter_pairs = static_cast<double>(left.rows() * right.rows());
    if (intra_pairs == 0 || inter_pairs == 0.0) {
        throw ShapeError("betacv: clusters too small");
    }
    const double mean_inter = inter / inter_pairs;
    const double mean_intra = intra / static_cast<double>(intra_pairs);
    if (mean_inter == 0.0) {
        return mean_intra == 0.0 ? 1.0 : std::numeric_limits<double>::max();
    }
    return mean_intra / mean_inter;
}

/// sum over both clusters of cut(C) / vol(C), with similarity 1 / (1 + |a - b|)
/// and volumes summed over all other points (no self-similarity).
inline double normalized_cut(const Matrix& left, const Matrix& right) {
    const auto sim = [](const auto& a, const auto& b) { return 1.0 / (1.0 + (a - b).norm()); };
    double cut = 0.0;
    for (Eigen::Index i = 0; i < left.rows(); ++i) {
        for (Eigen::Index j = 0; j < right.rows(); ++j) {
            cut += sim(left.row(i), right.row(j));
        }
    }
    const auto internal = [&](const Matrix& c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            for (Eigen::Index j = 0; j < c.rows(); ++j) {
                if (i != j) {
                    s += sim(c.row(i), c.row(j));
                }
            }
        }
        return s;
    };
    const double vol_left = internal(left) + cut;
    const double vol_right = internal(right) + cut;
    if (vol_left == 0.0 || vol_right == 0.0) {
        throw ShapeError("normalized_cut: empty cluster");
    }
    return cut / vol_left + cut / vol_right;
}

/// Indicators for a candidate boundary at frame t. The left cluster holds
/// frames [t - half, t - 1] and the right cluster [t, t + half - 1], both
/// truncated at the sequence edges.
inline BoundaryIndicators indicators(const Matrix& frames, std::size_t t, std::size_t half_window = 15) {
    const auto T = static_cast<std::size_t>(frames.rows());
    const std::size_t left_begin = t >= half_window ? t - half_window : 0;
    const std::size_t right_end = std::min(T, t + half_window);
    if (t > T || t - left_begin < 2 || right_end < t + 2) {
        throw ShapeError("boundary too close to edge");
    }
    const Matrix left = frames.middleRows(static_cast<Eigen::Index>(left_begin), static_cast<Eigen::Index>(t - left_begin));
    const Matrix right = frames.middleRows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(right_end - t));
    const Matrix both = frames.middleRows(static_cast<Eigen::Index>(left_begin),
                                          static_cast<Eigen::Index>(right_end - left_begin));

    BoundaryIndicators out;
    const Vector cl = left.colwise().mean().transpose();
    const Vector cr = right.colwise().mean().transpose();
    if (cl.size() >= 2) {
        const PearsonResult p = pearson_correlation_checked(cl, cr);
        out.correlation = p.value;
        out.correlation_degenerate = p.degenerate;
    } else {
        out.correlation_degenerate = true;
    }
    out.compact_left = compactness(left);
    out.compact_right = compactness(right);
    out.compact_union = compactness(both);
    out.betacv = betacv(left, right);
    out.ncut = normalized_cut(left, right);
    return out;
}

/// Linear classifier on standardized indicators: positive decision = keep.
struct LinearSvm {
    IndicatorArray mean{};
    IndicatorArray stddev{1, 1, 1, 1, 1, 1};
    IndicatorArray weights{};
    double bias = 0.0;

    double decision(const IndicatorArray& x) const {
        double s = bias;
        for (std::size_t k = 0; k < kIndicatorCount; ++k) {
            s += weights[k] * (x[k] - mean[k]) / stddev[k];
        }
        return s;
    }

    bool keep(const BoundaryIndicators& ind) const { return decision(ind.values()) > 0.0; }

    static LinearSvm always_keep() {
        LinearSvm m;
        m.bias = 1.0;
        return m;
    }
};

struct LabeledIndicators {
    BoundaryIndicators indicators;
    bool is_boundary = false;
};

struct SvmTrainConfig {
    double lambda = 1e-3;
    int epochs = 200;
    std::uint64_t seed = 0;
    bool balance_classes = true;
};

struct SvmTrainResult {
    LinearSvm model;
    double training_accuracy = 0.0;
};

/// Hinge loss + lambda |w|^2 minimized by stochastic subgradient descent
/// (step 1 / (lambda t)) on standardized features. The bias is not
/// regularized. With balance_classes, each class carries equal total weight.
inline SvmTrainResult svm_train(std::span<const LabeledIndicators> samples, const SvmTrainConfig& cfg = {}) {
    if (!(cfg.lambda > 0.0) || cfg.epochs < 1) {
        throw ConfigError("svm_train: lambda must be positive and epochs at least 1");
    }
    std::size_t positives = 0;
    for (const auto& s : samples) {
        positives += s.is_boundary ? 1 : 0;
    }
    const std::size_t negatives = samples.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw ConfigError("svm_train: both classes must be present");
    }

    LinearSvm model;
    const auto n = static_cast<double>(samples.size());
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
        double m = 0.0;
        for (const auto& s : samples) {
            m += s.indicators.values()[k];
        }
        m /= n;
        double v = 0.0;
        for (const auto& s : samples) {
            const double d = s.indicators.values()[k] - m;
            v += d * d;
        }
        const double sd = std::sqrt(v / n);
        model.mean[k] = m;
        model.stddev[k] = sd > 1e-12 ? sd : 1.0;
    }

    std::vector<IndicatorArray> x;
    std::vector<double> y;
    std::vector<double> weight;
    for (const auto& s : samples) {
        IndicatorArray z = s.indicators.values();
        for (std::size_t k = 0; k < kIndicatorCount; ++k) {
            z[k] = (z[k] - model.mean[k]) / model.stddev[k];
        }
        x.push_back(z);
        y.push_back(s.is_boundary ? 1.0 : -1.0);
        if (cfg.balance_classes) {
            weight.push_back(n / (2.0 * static_cast<double>(s.is_boundary ? positives : negatives)));
        } else {
            weight.push_back(1.0);
        }
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(samples.size());
    double step_count = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        rng.shuffle(order);
        for (std::size_t i : order) {
            step_count += 1.0;
            const double eta = 1.0 / (cfg.lambda * step_count);
            double margin = model.bias;
            for (std::size_t k = 0; k < kIndicatorCount; ++k) {
                margin += model.weights[k] * x[i][k];
            }
            margin *= y[i];
            for (double& w : model.weights) {
                w *= 1.0 - eta * cfg.lambda;
            }
            if (margin < 1.0) {
                for (std::size_t k = 0; k < kIndicatorCount; ++k) {
                    model.weights[k] += eta * weight[i] * y[i] * x[i][k];
                }
                model.bias += eta * weight[i] * y[i];
            }
        }
    }
    // The running iterate's bias can be thrown far by the first large steps;
    // refit it against the final weights on the training hinge loss.
    {
        std::vector<double> scores(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < kIndicatorCount; ++k) {
                s += model.weights[k] * x[i][k];
            }
            scores[i] = s;
        }
        const auto hinge = [&](double b) {
            double total = 0.0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                total += weight[i] * std::max(0.0, 1.0 - y[i] * (scores[i] + b));
            }
            return total;
        };
        double best_b = model.bias;
        double best = hinge(best_b);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            // The hinge objective is piecewise linear with kinks at y_i - s_i.
            const double b = y[i] - scores[i];
            const double h = hinge(b);
            if (h < best) {
                best = h;
                best_b = b;
            }
        }
        model.bias = best_b;
    }

    std::size_t correct = 0;
    for (const auto& s : samples) {
        correct += model.keep(s.indicators) == s.is_boundary ? 1 : 0;
    }
    return {model, static_cast<double>(correct) / n};
}

/// Drops boundaries the classifier rejects. Boundaries too close to a
/// sequence edge for indicator extraction are kept unchanged.
inline Segmentation prune(const Segmentation& seg, const Matrix& frames, const LinearSvm& model,
                          std::size_t half_window = 15) {
    Segmentation out;
    out.source = seg.source + "+pruned";
    out.signal = seg.signal;
    for (std::size_t b : seg.boundaries) {
        try {
            if (model.keep(indicators(frames, b, half_window))) {
                out.boundaries.push_back(b);
            }
        } catch (const ShapeError&) {
            out.boundaries.push_back(b);
        }
    }
    return out;
}

// Model file: "CSVM", u32 version, then 6 means, 6 stds, 6 weights and the
// bias as little-endian f32.
inline constexpr std::uint32_t kSvmFileVersion = 1;

inline std::vector<char> serialize(const LinearSvm& m) {
    io::Writer out;
    out.bytes("CSVM");
    out.u32(kSvmFileVersion);
    for (const IndicatorArray* a : {&m.mean, &m.stddev, &m.weights}) {
        for (double v : *a) {
            out.f32_from(v);
        }
    }
    out.f32_from(m.bias);
    return out.data();
}

inline LinearSvm deserialize_svm(std::vector<char> bytes) {
    io::Reader in(std::move(bytes));
    in.expect_magic("CSVM");
    const std::uint32_t version = in.u32();
    if (version != kSvmFileVersion) {
        throw FormatError("unsupported SVM file version " + std::to_string(version));
    }
    LinearSvm m;
    for (IndicatorArray* a : {&m.mean, &m.stddev, &m.weights}) {
        for (double& v : *a) {
            v = in.finite_f32();
        }
    }
    m.bias = in.finite_f32();
    in.expect_end();
    for (double s : m.stddev) {
        if (!(s > 0.0)) {
            throw FormatError("SVM file: standard deviations must be positive");
        }
    }
    return m;
}

inline void save_svm(const LinearSvm& m, const std::string& path) {
    io::Writer out;
    const auto bytes = serialize(m);
    out.bytes(std::string_view(bytes.data(), bytes.size()));
    out.save(path);
}

inline LinearSvm load_svm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open SVM model: " + path);
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_svm(std::move(bytes));
}

}  // namespace ces::pruning
