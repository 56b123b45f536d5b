#pragma once

// Contextual event segmentation: a per-frame boundary signal built from the
// disagreement between the context predicted from the past and the context
// predicted from the future, reduced to boundaries by local-maximum detection
// and a mean-value filter.

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ces/errors.hpp"
#include "ces/numerics.hpp"
#include "ces/vcp.hpp"

namespace ces::segmentation {

/// Per-frame boundary score. Only [first, last] holds meaningful values;
/// entries outside it are 0 and never become candidates.
struct BoundarySignal {
    Vector pred;
    Eigen::Index first = 0;
    Eigen::Index last = -1;
    bool degenerate = false;  // some cosine distance involved a zero vector

    bool valid(Eigen::Index t) const { return t >= first && t <= last; }
};

/// Sorted, strictly increasing frame indices; a boundary b starts a new event at frame b.
struct Segmentation {
    std::vector<std::size_t> boundaries;
    std::string source;
    std::optional<BoundarySignal> signal;
};

/// pred(t) = d(rf_{t-1}, rp_{t+1}) for t in [1, T-2], where rf are forward
/// contexts, rp backward contexts and d the cosine distance. Frame t itself
/// is seen by neither context.
inline BoundarySignal ces_signal(const vcp::VcpWeights& w, const Matrix& frames) {
    const Eigen::Index T = frames.rows();
    if (T < 3) {
        throw ShapeError("sequence too short");
    }
    const vcp::ContextSequence rf = vcp::encode(w, frames, vcp::Direction::forward);
    const vcp::ContextSequence rp = vcp::encode(w, frames, vcp::Direction::backward);
    BoundarySignal s{Vector::Zero(T), 1, T - 2, false};
    for (Eigen::Index t = 1; t <= T - 2; ++t) {
        const CosineResult d = cosine_distance_checked(rf.r.row(t - 1), rp.r.row(t + 1));
        s.pred[t] = d.value;
        s.degenerate = s.degenerate || d.degenerate;
    }
    return s;
}

/// Predictions of every frame from its past (forward) and from its future
/// (backward). The decoder runs continuously along each context sequence,
/// which is the conditional rollout with a single seed frame.
struct DirectionalPredictions {
    Matrix from_past;    // row t predicted from frames < t; row 0 unused
    Matrix from_future;  // row t predicted from frames > t; row T-1 unused
};

inline DirectionalPredictions directional_predictions(const vcp::VcpWeights& w, const Matrix& frames) {
    const Eigen::Index T = frames.rows();
    const vcp::ContextSequence rf = vcp::encode(w, frames, vcp::Direction::forward);
    const vcp::ContextSequence rp = vcp::encode(w, frames, vcp::Direction::backward);
    DirectionalPredictions out{Matrix::Zero(T, frames.cols()), Matrix::Zero(T, frames.cols())};
    vcp::LstmState dec = vcp::LstmState::zero(w.hidden());
    for (Eigen::Index t = 1; t < T; ++t) {
        vcp::DecodeResult step = vcp::decode_step(w, rf.r.row(t - 1).transpose(), dec);
        out.from_past.row(t) = step.prediction.transpose();
        dec = std::move(step.next);
    }
    dec = vcp::LstmState::zero(w.hidden());
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        vcp::DecodeResult step = vcp::decode_step(w, rp.r.row(t + 1).transpose(), dec);
        out.from_future.row(t) = step.prediction.transpose();
        dec = std::move(step.next);
    }
    return out;
}

/// pred(t) = |mse(x_t, x̂_f(t)) - mse(x_t, x̂_p(t))| for t in [1, T-2].
inline BoundarySignal ces_error_signal(const vcp::VcpWeights& w, const Matrix& frames) {
    const Eigen::Index T = frames.rows();
    if (T < 3) {
        throw ShapeError("sequence too short");
    }
    const DirectionalPredictions p = directional_predictions(w, frames);
    BoundarySignal s{Vector::Zero(T), 1, T - 2, false};
    for (Eigen::Index t = 1; t <= T - 2; ++t) {
        const auto x = frames.row(t);
        s.pred[t] = std::abs(mse(x, p.from_past.row(t)) - mse(x, p.from_future.row(t)));
    }
    return s;
}

enum class WindowMode { mean, pca };

/// Context without a learned model: the past context at t summarizes frames
/// [t-N, t-1] and the future context frames [t+1, t+N], either by their mean
/// or by their dominant direction. Valid for t in [N, T-1-N].
inline BoundarySignal window_context_signal(const Matrix& frames, WindowMode mode, std::size_t context = 10) {
    const Eigen::Index T = frames.rows();
    const auto N = static_cast<Eigen::Index>(context);
    if (N < 1) {
        throw ConfigError("window_context_signal: context length must be at least 1");
    }
    if (T < 2 * N + 1) {
        throw ShapeError("sequence too short: need at least " + std::to_string(2 * N + 1) + " frames");
    }
    const auto summarize = [&](Eigen::Index begin) -> Vector {
        const auto block = frames.middleRows(begin, N).transpose();
        if (mode == WindowMode::mean) {
            return column_mean(block);
        }
        try {
            return pca_first_component(block);
        } catch (const NumericError&) {
            return Vector::Zero(frames.cols());
        }
    };
    BoundarySignal s{Vector::Zero(T), N, T - 1 - N, false};
    for (Eigen::Index t = N; t <= T - 1 - N; ++t) {
        const CosineResult d = cosine_distance_checked(summarize(t - N), summarize(t + 1));
        s.pred[t] = d.value;
        s.degenerate = s.degenerate || d.degenerate;
    }
    return s;
}

/// Indices t in the valid range where pred(t) is the maximum of the window
/// [t - w/2, t + w/2] (clipped to the valid range) and no earlier index in
/// that window attains the same value.
inline std::vector<std::size_t> local_maxima(const BoundarySignal& signal, std::size_t window = 5) {
    if (window < 3 || window % 2 == 0) {
        throw ConfigError("local_maxima: window must be odd and at least 3");
    }
    std::vector<std::size_t> out;
    const Eigen::Index first = std::max<Eigen::Index>(signal.first, 0);
    const Eigen::Index last = std::min<Eigen::Index>(signal.last, signal.pred.size() - 1);
    if (last < first) {
        return out;
    }
    const auto r = static_cast<Eigen::Index>(window / 2);
    const Vector& p = signal.pred;

    // Monotone deques: `centered` tracks max over [t-r, t+r], `left` over [t-r, t-1].
    std::deque<Eigen::Index> centered;
    std::deque<Eigen::Index> left;
    const auto push = [&](std::deque<Eigen::Index>& dq, Eigen::Index k) {
        while (!dq.empty() && p[dq.back()] <= p[k]) {
            dq.pop_back();
        }
        dq.push_back(k);
    };
    Eigen::Index next_in = first;
    for (Eigen::Index t = first; t <= last; ++t) {
        while (next_in <= std::min(last, t + r)) {
            push(centered, next_in++);
        }
        while (centered.front() < t - r) {
            centered.pop_front();
        }
        while (!left.empty() && left.front() < t - r) {
            left.pop_front();
        }
        const bool is_max = p[t] >= p[centered.front()];
        const bool earliest = left.empty() || p[left.front()] < p[t];
        if (is_max && earliest) {
            out.push_back(static_cast<std::size_t>(t));
        }
        push(left, t);
    }
    return out;
}

/// Keeps candidates whose value is at least the mean candidate value.
inline Segmentation filter_candidates(const BoundarySignal& signal, std::span<const std::size_t> candidates,
                                      std::string source = "ces") {
    Segmentation seg;
    seg.source = std::move(source);
    if (candidates.empty()) {
        return seg;
    }
    double sum = 0.0;
    for (std::size_t c : candidates) {
        sum += signal.pred[static_cast<Eigen::Index>(c)];
    }
    const double mean = sum / static_cast<double>(candidates.size());
    // The mean of equal values can round below them; admit that rounding.
    const double threshold = mean - 1e-12 * std::max(1.0, std::abs(mean));
    for (std::size_t c : candidates) {
        if (signal.pred[static_cast<Eigen::Index>(c)] >= threshold) {
            seg.boundaries.push_back(c);
        }
    }
    return seg;
}

enum class SignalMethod { ces, ces_error, ces_mean, ces_pca };

inline const char* to_string(SignalMethod m) {
    switch (m) {
        case SignalMethod::ces: return "ces";
        case SignalMethod::ces_error: return "ces-error";
        case SignalMethod::ces_mean: return "ces-mean";
        case SignalMethod::ces_pca: return "ces-pca";
    }
    return "?";
}

struct SignalConfig {
    SignalMethod method = SignalMethod::ces;
    std::size_t window = 5;   // local-maximum window
    std::size_t context = 10; // N for the mean / pca variants
};

inline BoundarySignal boundary_signal(const Matrix& frames, const SignalConfig& cfg,
                                      const vcp::VcpWeights* weights) {
    switch (cfg.method) {
        case SignalMethod::ces:
        case SignalMethod::ces_error:
            if (weights == nullptr) {
                throw ConfigError(std::string(to_string(cfg.method)) + " requires model weights");
            }
            return cfg.method == SignalMethod::ces ? ces_signal(*weights, frames) : ces_error_signal(*weights, frames);
        case SignalMethod::ces_mean:
            return window_context_signal(frames, WindowMode::mean, cfg.context);
        case SignalMethod::ces_pca:
            return window_context_signal(frames, WindowMode::pca, cfg.context);
    }
    throw ConfigError("unknown signal method");
}

/// signal -> local maxima -> mean filter; the signal is attached for dumping.
inline Segmentation segment(const Matrix& frames, const SignalConfig& cfg, const vcp::VcpWeights* weights = nullptr) {
    const BoundarySignal signal = boundary_signal(frames, cfg, weights);
    const std::vector<std::size_t> candidates = local_maxima(signal, cfg.window);
    Segmentation seg = filter_candidates(signal, candidates, to_string(cfg.method));
    seg.signal = signal;
    return seg;
}

}  // namespace ces::segmentation
