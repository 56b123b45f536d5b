#pragma once

// Uniform entry point over every segmenter, selected by name.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ces/baselines.hpp"
#include "ces/dataio.hpp"
#include "ces/errors.hpp"
#include "ces/evaluation.hpp"
#include "ces/segmentation.hpp"
#include "ces/vcp.hpp"

namespace ces {

inline constexpr std::array<std::string_view, 7> kMethodNames{"ces",    "ces-error", "ces-mean", "ces-pca",
                                                              "kmeans", "ac-color",  "kts"};

struct MethodConfig {
    std::string method = "ces";
    std::size_t window = 5;    // local maxima, and k-means smoothing
    std::size_t context = 10;  // ces-mean / ces-pca
    std::size_t clusters = 30;
    std::uint64_t seed = 0;
    std::optional<double> merge_threshold;
    baselines::KtsConfig kts;

    bool needs_weights() const { return method == "ces" || method == "ces-error"; }
};

inline void validate_method(const std::string& name) {
    for (std::string_view m : kMethodNames) {
        if (m == name) {
            return;
        }
    }
    throw ConfigError("unknown method: " + name);
}

inline segmentation::Segmentation run_method(const dataio::FeatureSequence& seq, const MethodConfig& cfg,
                                             const vcp::VcpWeights* weights = nullptr) {
    validate_method(cfg.method);
    using segmentation::SignalMethod;
    const auto signal_method = [&](SignalMethod m) {
        segmentation::SignalConfig sc{m, cfg.window, cfg.context};
        return segmentation::segment(seq.frames, sc, weights);
    };
    if (cfg.method == "ces") {
        return signal_method(SignalMethod::ces);
    }
    if (cfg.method == "ces-error") {
        return signal_method(SignalMethod::ces_error);
    }
    if (cfg.method == "ces-mean") {
        return signal_method(SignalMethod::ces_mean);
    }
    if (cfg.method == "ces-pca") {
        return signal_method(SignalMethod::ces_pca);
    }
    if (cfg.method == "kmeans") {
        return baselines::kmeans_smoothed(seq.frames, cfg.clusters, cfg.window, cfg.seed);
    }
    if (cfg.method == "ac-color") {
        if (!seq.color) {
            throw ConfigError(seq.id + ": ac-color needs color features");
        }
        return baselines::ac_color(*seq.color, cfg.merge_threshold);
    }
    return baselines::kts(seq.frames, cfg.kts);
}

// ---------------------------------------------------------------------------
// KTS penalty calibration against labeled streams.

struct KtsCalibration {
    double penalty_weight = 0.0;
    double f1 = 0.0;
    std::vector<std::pair<double, double>> scan;  // (C, mean F1) for every grid value
};

/// `count` values spaced geometrically over [lo, hi].
inline std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count < 1) {
        throw ConfigError("geometric_grid: need 0 < lo <= hi and count >= 1");
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < count; ++k) {
        const double f = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        out.push_back(lo * std::pow(hi / lo, f));
    }
    return out;
}

/// Picks the penalty weight with the highest mean F1 over the labeled
/// streams; ties keep the smaller weight.
inline KtsCalibration calibrate_kts(std::span<const Matrix> frames, std::span<const std::vector<std::size_t>> truth,
                                    const baselines::KtsConfig& base, std::span<const double> grid,
                                    std::size_t tolerance = evaluation::kDefaultTolerance) {
    if (frames.empty() || frames.size() != truth.size()) {
        throw ConfigError("calibrate_kts: need one ground truth per stream and at least one stream");
    }
    if (grid.empty()) {
        throw ConfigError("calibrate_kts: empty penalty grid");
    }
    KtsCalibration out;
    out.f1 = -1.0;
    for (double c : grid) {
        baselines::KtsConfig cfg = base;
        cfg.penalty_weight = c;
        double total = 0.0;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            total += evaluation::match(baselines::kts(frames[i], cfg).boundaries, truth[i], tolerance).f1();
        }
        const double mean = total / static_cast<double>(frames.size());
        out.scan.emplace_back(c, mean);
        if (mean > out.f1 || (mean == out.f1 && c < out.penalty_weight)) {
            out.f1 = mean;
            out.penalty_weight = c;
        }
    }
    return out;
}

}  // namespace ces
