#pragma once

// Comparison segmenters: k-means with iterative temporal majority smoothing,
// temporally constrained agglomerative clustering on color features, and
// kernel temporal segmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ces/errors.hpp"
#include "ces/numerics.hpp"
#include "ces/segmentation.hpp"

namespace ces::baselines {

using segmentation::Segmentation;

/// Boundaries at every label change between consecutive frames.
inline std::vector<std::size_t> label_changes(std::span<const int> labels) {
    std::vector<std::size_t> out;
    for (std::size_t t = 1; t < labels.size(); ++t) {
        if (labels[t] != labels[t - 1]) {
            out.push_back(t);
        }
    }
    return out;
}

/// Renumbers labels to [0, k') in order of first appearance.
inline std::vector<int> densify_labels(std::span<const int> labels) {
    std::map<int, int> remap;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. An empty cluster is re-seeded at
/// the point farthest from its current centroid.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, Rng& rng, int max_iterations = 300,
                           double tolerance = 1e-6) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) {
        throw ConfigError("kmeans: k must be at least 1");
    }
    if (n < k) {
        throw ShapeError("kmeans: fewer frames than clusters");
    }
    const Eigen::Index K = static_cast<Eigen::Index>(k);
    KMeansResult res{std::vector<int>(n, 0), Matrix(K, points.cols()), 0};

    // k-means++ seeding.
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t pick = rng.index(n);
    for (Eigen::Index c = 0; c < K; ++c) {
        res.centroids.row(c) = points.row(static_cast<Eigen::Index>(pick));
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(c)).squaredNorm());
            total += nearest[i];
        }
        if (c + 1 == K) {
            break;
        }
        if (total <= 0.0) {
            pick = rng.index(n);
            continue;
        }
        double target = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            target -= nearest[i];
            if (target < 0.0 && nearest[i] > 0.0) {
                pick = i;
                break;
            }
        }
    }

    std::vector<double> dist(n, 0.0);
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (Eigen::Index c = 0; c < K; ++c) {
                const double d = (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(c)).squaredNorm();
                if (d < best) {
                    best = d;
                    arg = static_cast<int>(c);
                }
            }
            res.labels[i] = arg;
            dist[i] = best;
        }
        Matrix next = Matrix::Zero(K, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            next.row(res.labels[i]) += points.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(res.labels[i])];
        }
        std::vector<bool> taken(n, false);
        for (Eigen::Index c = 0; c < K; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            taken[far] = true;
            next.row(c) = points.row(static_cast<Eigen::Index>(far));
        }
        const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
        res.centroids = std::move(next);
        if (shift < tolerance) {
            break;
        }
    }
    // Final assignment against the converged centroids.
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < K; ++c) {
            const double d = (points.row(static_cast<Eigen::Index>(i)) - res.centroids.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                res.labels[i] = static_cast<int>(c);
            }
        }
    }
    return res;
}

/// Replaces each label by the most common label in a centered window
/// (truncated at the edges), sweeping in place until nothing changes or T
/// sweeps have run. A tie keeps the current label when it is among the most
/// common, otherwise picks the smallest tied label. Returns the sweep count.
inline int smooth_labels(std::vector<int>& labels, std::size_t window = 5) {
    if (window < 1 || window % 2 == 0) {
        throw ConfigError("smooth_labels: window must be odd");
    }
    const std::size_t T = labels.size();
    const std::size_t r = window / 2;
    std::map<int, std::size_t> counts;
    for (std::size_t pass = 1; pass <= std::max<std::size_t>(T, 1); ++pass) {
        bool changed = false;
        for (std::size_t t = 0; t < T; ++t) {
            counts.clear();
            const std::size_t lo = t >= r ? t - r : 0;
            const std::size_t hi = std::min(T - 1, t + r);
            for (std::size_t k = lo; k <= hi; ++k) {
                ++counts[labels[k]];
            }
            std::size_t best = counts[labels[t]];
            int choice = labels[t];
            for (const auto& [label, count] : counts) {
                if (count > best) {
                    best = count;
                    choice = label;
                }
            }
            if (choice != labels[t]) {
                labels[t] = choice;
                changed = true;
            }
        }
        if (!changed) {
            return static_cast<int>(pass);
        }
    }
    return static_cast<int>(T);
}

/// k-means on all frames, then temporal smoothing; clusters may vanish.
inline Segmentation kmeans_smoothed(const Matrix& frames, std::size_t k = 30, std::size_t window = 5,
                                    std::uint64_t seed = 0) {
    Rng rng(seed);
    KMeansResult km = kmeans(frames, k, rng);
    smooth_labels(km.labels, window);
    const std::vector<int> dense = densify_labels(km.labels);
    return {label_changes(dense), "kmeans", std::nullopt};
}

/// 3 x median distance between consecutive frames.
inline double default_merge_threshold(const Matrix& frames) {
    if (frames.rows() < 2) {
        return 0.0;
    }
    std::vector<double> d;
    for (Eigen::Index t = 1; t < frames.rows(); ++t) {
        d.push_back((frames.row(t) - frames.row(t - 1)).norm());
    }
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double median = *mid;
    if (d.size() % 2 == 0) {
        median = 0.5 * (median + *std::max_element(d.begin(), mid));
    }
    return 3.0 * median;
}

/// Agglomerative clustering restricted to temporally adjacent segments:
/// starting from single frames, repeatedly merge the adjacent pair with the
/// smallest complete-linkage (maximum pairwise Euclidean) distance, leftmost
/// pair on ties, until that distance exceeds `threshold`.
inline Segmentation ac_color(const Matrix& color, std::optional<double> threshold = std::nullopt) {
    const Eigen::Index T = color.rows();
    if (T < 1) {
        throw ShapeError("ac_color: empty sequence");
    }
    const double tau = threshold ? *threshold : default_merge_threshold(color);
    Eigen::MatrixXd dist(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < T; ++j) {
            dist(i, j) = dist(j, i) = (color.row(i) - color.row(j)).norm();
        }
    }
    std::vector<Eigen::Index> starts(static_cast<std::size_t>(T));
    for (Eigen::Index t = 0; t < T; ++t) {
        starts[static_cast<std::size_t>(t)] = t;
    }
    const auto seg_end = [&](std::size_t s) {
        return s + 1 < starts.size() ? starts[s + 1] : T;
    };
    const auto linkage = [&](std::size_t s) {
        const Eigen::Index a = starts[s];
        const Eigen::Index b = starts[s + 1];
        const Eigen::Index c = seg_end(s + 1);
        return dist.block(a, b, b - a, c - b).maxCoeff();
    };
    std::vector<double> link;
    for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
        link.push_back(linkage(s));
    }
    while (!link.empty()) {
        const auto best = std::min_element(link.begin(), link.end());
        if (*best > tau) {
            break;
        }
        const auto s = static_cast<std::size_t>(best - link.begin());
        starts.erase(starts.begin() + static_cast<std::ptrdiff_t>(s + 1));
        link.erase(link.begin() + static_cast<std::ptrdiff_t>(s));
        if (s > 0) {
            link[s - 1] = linkage(s - 1);
        }
        if (s < link.size()) {
            link[s] = linkage(s);
        }
    }
    Segmentation seg;
    seg.source = "ac-color";
    for (std::size_t s = 1; s < starts.size(); ++s) {
        seg.boundaries.push_back(static_cast<std::size_t>(starts[s]));
    }
    return seg;
}

enum class Kernel { linear, rbf };

struct KtsConfig {
    Kernel kernel = Kernel::linear;
    double gamma = 1.0;                   // rbf: exp(-gamma |a - b|^2)
    std::size_t max_segments = 0;         // maximum number of change points; 0 = T / 5
    std::optional<double> penalty_weight; // C; unset = half the mean per-frame scatter of the whole stream

    void validate() const {
        if (penalty_weight && !(*penalty_weight >= 0.0)) {
            throw ConfigError("kts: penalty weight must be non-negative");
        }
        if (kernel == Kernel::rbf && !(gamma > 0.0)) {
            throw ConfigError("kts: gamma must be positive");
        }
    }
};

inline Eigen::MatrixXd gram_matrix(const Matrix& frames, const KtsConfig& cfg) {
    Eigen::MatrixXd K = frames * frames.transpose();
    if (cfg.kernel == Kernel::rbf) {
        const Vector sq = K.diagonal();
        for (Eigen::Index i = 0; i < K.rows(); ++i) {
            for (Eigen::Index j = 0; j < K.cols(); ++j) {
                K(i, j) = std::exp(-cfg.gamma * std::max(0.0, sq[i] + sq[j] - 2.0 * K(i, j)));
            }
        }
    }
    return K;
}

/// Within-segment kernel scatter of [a, b) in O(1) from prefix sums:
/// sum_i K_ii - (1/n) sum_ij K_ij.
class ScatterTable {
public:
    explicit ScatterTable(const Eigen::MatrixXd& K) : n_(K.rows()), diag_(n_ + 1), block_(n_ + 1, n_ + 1) {
        diag_[0] = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) {
            diag_[i + 1] = diag_[i] + K(i, i);
        }
        block_.setZero();
        for (Eigen::Index i = 0; i < n_; ++i) {
            for (Eigen::Index j = 0; j < n_; ++j) {
                block_(i + 1, j + 1) = K(i, j) + block_(i, j + 1) + block_(i + 1, j) - block_(i, j);
            }
        }
    }

    double operator()(Eigen::Index a, Eigen::Index b) const {
        const double within = block_(b, b) - block_(a, b) - block_(b, a) + block_(a, a);
        return std::max(0.0, diag_[b] - diag_[a] - within / static_cast<double>(b - a));
    }

private:
    Eigen::Index n_;
    Vector diag_;
    Eigen::MatrixXd block_;
};

/// m (log(T/m) + 1), the segment-count penalty; 0 for m = 0.
inline double kts_penalty(std::size_t m, std::size_t T) {
    if (m == 0) {
        return 0.0;
    }
    const double md = static_cast<double>(m);
    return md * (std::log(static_cast<double>(T) / md) + 1.0);
}

struct KtsResult {
    std::vector<std::size_t> boundaries;
    std::size_t change_points = 0;
    std::vector<double> scatter;  // minimal total scatter for m = 0..max
    double penalty_weight = 0.0;
};

/// Dynamic program over change-point counts. For each m, the boundary set
/// minimizing total within-segment scatter is found exactly; m is then chosen
/// to minimize scatter + C * m (log(T/m) + 1), or fixed by `forced`.
inline KtsResult kts_solve(const Matrix& frames, const KtsConfig& cfg, std::optional<std::size_t> forced = std::nullopt) {
    cfg.validate();
    const Eigen::Index T = frames.rows();
    if (T < 2) {
        throw ShapeError("kts: need at least 2 frames");
    }
    const Eigen::MatrixXd K = gram_matrix(frames, cfg);
    const ScatterTable scatter(K);
    const auto Tz = static_cast<std::size_t>(T);
    std::size_t max_m = cfg.max_segments == 0 ? std::max<std::size_t>(1, Tz / 5) : cfg.max_segments;
    if (forced) {
        max_m = std::max(max_m, *forced);
    }
    max_m = std::min(max_m, Tz - 1);
    if (forced && *forced > max_m) {
        throw ConfigError("kts: forced change-point count exceeds T - 1");
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    // cost(m, t): best scatter of frames [0, t) split by m change points.
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(max_m) + 1, T + 1, inf);
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg =
        Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>::Zero(static_cast<Eigen::Index>(max_m) + 1, T + 1);
    for (Eigen::Index t = 1; t <= T; ++t) {
        cost(0, t) = scatter(0, t);
    }
    for (Eigen::Index m = 1; m <= static_cast<Eigen::Index>(max_m); ++m) {
        for (Eigen::Index t = m + 1; t <= T; ++t) {
            double best = inf;
            Eigen::Index best_s = m;
            for (Eigen::Index s = m; s < t; ++s) {
                const double c = cost(m - 1, s) + scatter(s, t);
                if (c < best) {
                    best = c;
                    best_s = s;
                }
            }
            cost(m, t) = best;
            arg(m, t) = best_s;
        }
    }

    KtsResult res;
    for (std::size_t m = 0; m <= max_m; ++m) {
        res.scatter.push_back(cost(static_cast<Eigen::Index>(m), T));
    }
    // With unit-norm features this is the customary C = 1/2; in general it
    // scales with the variance of the stream.
    res.penalty_weight =
        cfg.penalty_weight ? *cfg.penalty_weight : std::max(0.5 * res.scatter[0] / static_cast<double>(T), 1e-12);
    std::size_t chosen = 0;
    if (forced) {
        chosen = *forced;
    } else {
        double best = inf;
        for (std::size_t m = 0; m <= max_m; ++m) {
            const double objective = res.scatter[m] + res.penalty_weight * kts_penalty(m, Tz);
            if (objective < best) {
                best = objective;
                chosen = m;
            }
        }
    }
    res.change_points = chosen;
    Eigen::Index t = T;
    for (auto m = static_cast<Eigen::Index>(chosen); m > 0; --m) {
        t = arg(m, t);
        res.boundaries.push_back(static_cast<std::size_t>(t));
    }
    std::reverse(res.boundaries.begin(), res.boundaries.end());
    return res;
}

inline Segmentation kts(const Matrix& frames, const KtsConfig& cfg = {}) {
    return {kts_solve(frames, cfg).boundaries, "kts", std::nullopt};
}

}  // namespace ces::baselines
