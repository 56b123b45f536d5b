#pragma once

// Training of the Visual Context Predictor: next-frame mean squared error,
// gradients by backpropagation through time, RMSProp with a plateau
// learning-rate schedule, and a grid search over architectures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ces/errors.hpp"
#include "ces/numerics.hpp"
#include "ces/parallel.hpp"
#include "ces/vcp.hpp"

namespace ces::training {

using vcp::LstmCellWeights;
using vcp::LstmState;
using vcp::LstmTrace;
using vcp::VcpWeights;

struct TrainConfig {
    std::size_t seen = 10;     // N, frames consumed before predicting
    std::size_t predict = 10;  // M, frames to predict
    Eigen::Index hidden = 1024;
    std::optional<double> learning_rate;  // drawn from [1e-4, 1e-3] when unset
    std::size_t batch = 32;
    int plateau_epochs = 4;
    double plateau_factor = 0.5;
    double min_relative_improvement = 1e-3;
    int max_epochs = 20;
    std::uint64_t seed = 0;
    bool conditional = true;
    double clip_norm = 5.0;
    bool bidirectional = true;  // also train on time-reversed windows

    void validate() const {
        if (seen < 1 || predict < 1) {
            throw ConfigError("N and M must be at least 1");
        }
        if (hidden < 1) {
            throw ConfigError("hidden size must be at least 1");
        }
        if (learning_rate && !(*learning_rate >= 0.0 && std::isfinite(*learning_rate))) {
            throw ConfigError("learning rate must be finite and non-negative");
        }
        if (batch < 1) {
            throw ConfigError("batch must be at least 1");
        }
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
            throw ConfigError("plateau_factor must lie in (0, 1)");
        }
        if (plateau_epochs < 1) {
            throw ConfigError("plateau_epochs must be at least 1");
        }
        if (max_epochs < 0) {
            throw ConfigError("max_epochs must be non-negative");
        }
        if (!(clip_norm > 0.0)) {
            throw ConfigError("clip_norm must be positive");
        }
    }
};

/// Running mean of squared gradients per parameter.
struct OptimizerState {
    double rho = 0.9;
    double epsilon = 1e-8;
    std::vector<std::vector<double>> mean_square;

    static OptimizerState for_model(const VcpWeights& w) {
        OptimizerState s;
        for (auto block : w.blocks()) {
            s.mean_square.emplace_back(block.size(), 0.0);
        }
        return s;
    }
};

namespace detail {

// Backpropagates one LSTM step. dh and dc are the gradients w.r.t. the step's
// outputs; dW accumulates; d_input receives the gradient w.r.t. [x; h_prev; 1].
inline void lstm_backward(const LstmCellWeights& w, const LstmTrace& tr, const Vector& dh, const Vector& dc_out,
                          Matrix& dW, Vector& d_input, Vector& dc_prev) {
    const Eigen::Index H = w.hidden();
    Vector dz(4 * H);
    dc_prev.resize(H);
    for (Eigen::Index k = 0; k < H; ++k) {
        const double tc = tr.tanh_c[k];
        const double dc = dc_out[k] + dh[k] * tr.o[k] * (1.0 - tc * tc);
        const double d_o = dh[k] * tc;
        dz[vcp::kInput * H + k] = dc * tr.g[k] * tr.i[k] * (1.0 - tr.i[k]);
        dz[vcp::kForget * H + k] = dc * tr.c_prev[k] * tr.f[k] * (1.0 - tr.f[k]);
        dz[vcp::kOutput * H + k] = d_o * tr.o[k] * (1.0 - tr.o[k]);
        dz[vcp::kModulation * H + k] = dc * tr.i[k] * (1.0 - tr.g[k] * tr.g[k]);
        dc_prev[k] = dc * tr.f[k];
    }
    dW.noalias() += tr.input * dz.transpose();
    d_input.noalias() = w.W * dz;
}

// Forward and backward pass over one window; adds scale * dLoss/dtheta to
// grads and returns the window's mean (over steps) prediction error.
inline double window_gradients(const VcpWeights& w, const Matrix& window, std::size_t seen, std::size_t predict,
                               double scale, VcpWeights& grads) {
    const Eigen::Index D = w.feature_dim();
    const Eigen::Index H = w.hidden();
    const std::size_t enc_steps = seen + predict - 1;
    const bool conditional = w.conditional;

    std::vector<LstmTrace> enc(enc_steps);
    std::vector<Vector> enc_h(enc_steps);
    std::vector<LstmTrace> dec(predict);
    std::vector<Vector> dec_h(predict);
    std::vector<Vector> pred(predict);

    LstmState state = LstmState::zero(H);
    for (std::size_t k = 0; k < seen; ++k) {
        state = vcp::lstm_step(w.encoder, window.row(static_cast<Eigen::Index>(k)).transpose(), state, &enc[k]);
        enc_h[k] = state.h;
    }
    LstmState dstate = LstmState::zero(H);
    double loss = 0.0;
    for (std::size_t j = 0; j < predict; ++j) {
        dstate = vcp::lstm_step(w.decoder, enc_h[seen - 1 + j], dstate, &dec[j]);
        dec_h[j] = dstate.h;
        pred[j] = vcp::readout(w, dstate.h);
        loss += mse(pred[j], window.row(static_cast<Eigen::Index>(seen + j)).transpose());
        if (j + 1 < predict) {
            const std::size_t k = seen + j;
            if (conditional) {
                state = vcp::lstm_step(w.encoder, window.row(static_cast<Eigen::Index>(k)).transpose(), state, &enc[k]);
            } else {
                state = vcp::lstm_step(w.encoder, pred[j], state, &enc[k]);
            }
            enc_h[k] = state.h;
        }
    }

    std::vector<Vector> d_enc_h(enc_steps, Vector::Zero(H));
    Vector d_enc_c = Vector::Zero(H);
    Vector d_dec_h = Vector::Zero(H);
    Vector d_dec_c = Vector::Zero(H);
    Vector d_input;
    Vector dc_prev;
    const double step_scale = scale * 2.0 / static_cast<double>(D);

    for (std::size_t jj = predict; jj-- > 0;) {
        Vector d_pred = step_scale * (pred[jj] - window.row(static_cast<Eigen::Index>(seen + jj)).transpose());
        if (jj + 1 < predict) {
            const std::size_t k = seen + jj;
            detail::lstm_backward(w.encoder, enc[k], d_enc_h[k], d_enc_c, grads.encoder.W, d_input, dc_prev);
            d_enc_h[k - 1] += d_input.segment(D, H);
            d_enc_c = dc_prev;
            if (!conditional) {
                d_pred += d_input.head(D);
            }
        }
        grads.readout.noalias() += dec_h[jj] * d_pred.transpose();
        grads.readout_bias += d_pred;
        d_dec_h.noalias() += w.readout * d_pred;
        detail::lstm_backward(w.decoder, dec[jj], d_dec_h, d_dec_c, grads.decoder.W, d_input, dc_prev);
        d_enc_h[seen - 1 + jj] += d_input.head(H);
        d_dec_h = d_input.segment(H, H);
        d_dec_c = dc_prev;
    }
    for (std::size_t k = seen; k-- > 0;) {
        detail::lstm_backward(w.encoder, enc[k], d_enc_h[k], d_enc_c, grads.encoder.W, d_input, dc_prev);
        if (k > 0) {
            d_enc_h[k - 1] += d_input.segment(D, H);
        }
        d_enc_c = dc_prev;
    }
    return loss / static_cast<double>(predict);
}

inline void check_window(const Matrix& window, std::size_t seen, std::size_t predict, Eigen::Index D) {
    if (static_cast<std::size_t>(window.rows()) != seen + predict) {
        throw ShapeError("window length mismatch: expected " + std::to_string(seen + predict) + " frames, got " +
                         std::to_string(window.rows()));
    }
    if (window.cols() != D) {
        throw ShapeError("window feature dimension mismatch");
    }
}

}  // namespace detail

struct LossAndGradients {
    double loss = 0.0;
    VcpWeights gradients;
};

/// Mean over windows and predicted steps of mse(x_t, x̂_t), with its exact
/// gradient. Every window holds seen + predict frames.
inline LossAndGradients loss_and_gradients(const VcpWeights& w, std::span<const Matrix> windows, std::size_t seen,
                                           std::size_t predict) {
    if (windows.empty()) {
        throw ShapeError("loss_and_gradients: empty batch");
    }
    if (seen < 1 || predict < 1) {
        throw ConfigError("N and M must be at least 1");
    }
    LossAndGradients out{0.0, VcpWeights::zeros(w.feature_dim(), w.hidden(), w.conditional)};
    const double scale = 1.0 / (static_cast<double>(windows.size()) * static_cast<double>(predict));
    for (const Matrix& window : windows) {
        detail::check_window(window, seen, predict, w.feature_dim());
        out.loss += detail::window_gradients(w, window, seen, predict, scale, out.gradients);
    }
    out.loss /= static_cast<double>(windows.size());
    return out;
}

/// Forward-only loss; uses the rollout path, not the training path.
inline double evaluate_loss(const VcpWeights& w, std::span<const Matrix> windows, std::size_t seen,
                            std::size_t predict) {
    if (windows.empty()) {
        throw ShapeError("evaluate_loss: empty set");
    }
    double total = 0.0;
    for (const Matrix& window : windows) {
        detail::check_window(window, seen, predict, w.feature_dim());
        const Matrix predicted = vcp::rollout(w, window, seen, predict, w.conditional);
        total += (predicted - window.bottomRows(static_cast<Eigen::Index>(predict))).squaredNorm() /
                 static_cast<double>(predicted.size());
    }
    return total / static_cast<double>(windows.size());
}

/// Loss of the reference predictor x̂(t) = x(t-1) over the same windows.
inline double previous_frame_loss(std::span<const Matrix> windows, std::size_t seen, std::size_t predict) {
    if (windows.empty()) {
        throw ShapeError("previous_frame_loss: empty set");
    }
    double total = 0.0;
    for (const Matrix& window : windows) {
        const auto n = static_cast<Eigen::Index>(predict);
        const auto first = static_cast<Eigen::Index>(seen);
        total += (window.middleRows(first, n) - window.middleRows(first - 1, n)).squaredNorm() /
                 static_cast<double>(n * window.cols());
    }
    return total / static_cast<double>(windows.size());
}

inline double gradient_norm(const VcpWeights& grads) {
    double sq = 0.0;
    for (auto block : grads.blocks()) {
        for (double g : block) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

/// Rescales gradients to at most max_norm (global L2); returns the original norm.
inline double clip_gradients(VcpWeights& grads, double max_norm) {
    const double norm = gradient_norm(grads);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto block : grads.blocks()) {
            for (double& g : block) {
                g *= s;
            }
        }
    }
    return norm;
}

struct GradientCheck {
    std::array<double, 4> max_relative_error{};  // per parameter block
    std::size_t parameters = 0;

    double worst() const { return *std::max_element(max_relative_error.begin(), max_relative_error.end()); }
};

/// Compares BPTT gradients against central differences of the rollout loss
/// for every parameter. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheck gradient_check(const VcpWeights& w, std::span<const Matrix> windows, std::size_t seen,
                                    std::size_t predict, double step = 1e-5, double floor = 1e-6) {
    const LossAndGradients analytic = loss_and_gradients(w, windows, seen, predict);
    VcpWeights probe = w;
    auto params = probe.blocks();
    const auto grads = analytic.gradients.blocks();
    GradientCheck out;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t k = 0; k < params[b].size(); ++k) {
            const double saved = params[b][k];
            params[b][k] = saved + step;
            const double up = evaluate_loss(probe, windows, seen, predict);
            params[b][k] = saved - step;
            const double down = evaluate_loss(probe, windows, seen, predict);
            params[b][k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = grads[b][k];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            out.max_relative_error[b] = std::max(out.max_relative_error[b], err);
            ++out.parameters;
        }
    }
    return out;
}

/// s <- rho s + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(s) + eps).
inline void rmsprop_step(VcpWeights& w, const VcpWeights& grads, OptimizerState& opt, double lr) {
    auto params = w.blocks();
    const auto gblocks = grads.blocks();
    if (opt.mean_square.size() != params.size()) {
        throw ShapeError("rmsprop_step: optimizer state does not match model");
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != gblocks[b].size() || opt.mean_square[b].size() != params[b].size()) {
            throw ShapeError("rmsprop_step: block size mismatch");
        }
        for (double g : gblocks[b]) {
            if (!std::isfinite(g)) {
                throw NumericError("diverged");
            }
        }
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& s = opt.mean_square[b];
        for (std::size_t k = 0; k < params[b].size(); ++k) {
            const double g = gblocks[b][k];
            s[k] = opt.rho * s[k] + (1.0 - opt.rho) * g * g;
            params[b][k] -= lr * g / (std::sqrt(s[k]) + opt.epsilon);
        }
    }
}

/// Slices sequences into windows of seen + predict frames with stride
/// `predict`; with `bidirectional`, the time-reversed sequences contribute
/// windows as well.
inline std::vector<Matrix> make_windows(std::span<const Matrix> sequences, std::size_t seen, std::size_t predict,
                                        bool bidirectional) {
    const std::size_t length = seen + predict;
    std::vector<Matrix> windows;
    for (const Matrix& seq : sequences) {
        const auto T = static_cast<std::size_t>(seq.rows());
        for (int pass = 0; pass < (bidirectional ? 2 : 1); ++pass) {
            const Matrix source = pass == 0 ? seq : Matrix(seq.colwise().reverse());
            for (std::size_t start = 0; start + length <= T; start += predict) {
                windows.emplace_back(source.middleRows(static_cast<Eigen::Index>(start),
                                                       static_cast<Eigen::Index>(length)));
            }
        }
    }
    return windows;
}

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    VcpWeights weights;
    std::vector<EpochRecord> history;
    double initial_val_loss = 0.0;
    double best_val_loss = 0.0;
    double initial_learning_rate = 0.0;
};

struct ResumeState {
    VcpWeights weights;
    double learning_rate = 0.0;
    int last_epoch = 0;
};

/// Trains with minibatch RMSProp. The learning rate is multiplied by
/// plateau_factor after plateau_epochs consecutive epochs whose validation
/// loss failed to improve on the best by more than min_relative_improvement;
/// training stops early once the rate falls below lr0 / 64. Returns the
/// weights with the lowest validation loss seen (including the start).
inline TrainResult train(std::span<const Matrix> train_set, std::span<const Matrix> val_set, const TrainConfig& cfg,
                         const ResumeState* resume = nullptr) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) {
        throw ConfigError("train: training and validation sets must be non-empty");
    }
    const Eigen::Index D = train_set.front().cols();
    for (auto set : {train_set, val_set}) {
        for (const Matrix& seq : set) {
            if (seq.cols() != D) {
                throw ShapeError("train: inconsistent feature dimension");
            }
            if (static_cast<std::size_t>(seq.rows()) < cfg.seen + cfg.predict) {
                throw ShapeError("train: sequence shorter than N + M frames");
            }
        }
    }
    const std::vector<Matrix> train_windows = make_windows(train_set, cfg.seen, cfg.predict, cfg.bidirectional);
    const std::vector<Matrix> val_windows = make_windows(val_set, cfg.seen, cfg.predict, cfg.bidirectional);
    if (train_windows.empty() || val_windows.empty()) {
        throw ConfigError("train: no valid window");
    }

    Rng rng(cfg.seed);
    const double drawn_lr = cfg.learning_rate ? *cfg.learning_rate : rng.uniform(1e-4, 1e-3);
    TrainResult result;
    int first_epoch = 1;
    double lr = drawn_lr;
    if (resume != nullptr) {
        resume->weights.validate();
        if (resume->weights.feature_dim() != D) {
            throw ShapeError("train: resumed model has a different feature dimension");
        }
        result.weights = resume->weights;
        lr = resume->learning_rate > 0.0 ? resume->learning_rate : drawn_lr;
        first_epoch = resume->last_epoch + 1;
    } else {
        result.weights = VcpWeights::initialize(D, cfg.hidden, rng, cfg.conditional);
    }
    result.initial_learning_rate = lr;
    const double lr_floor = lr / 64.0;

    VcpWeights current = result.weights;
    OptimizerState opt = OptimizerState::for_model(current);
    result.initial_val_loss = evaluate_loss(current, val_windows, cfg.seen, cfg.predict);
    result.best_val_loss = result.initial_val_loss;
    double plateau_reference = result.initial_val_loss;
    int stale_epochs = 0;

    std::vector<std::size_t> order(train_windows.size());
    std::vector<Matrix> batch;
    for (int e = 0; e < cfg.max_epochs; ++e) {
        for (std::size_t k = 0; k < order.size(); ++k) {
            order[k] = k;
        }
        rng.shuffle(order);
        double train_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            batch.clear();
            for (std::size_t k = start; k < stop; ++k) {
                batch.push_back(train_windows[order[k]]);
            }
            LossAndGradients lg = loss_and_gradients(current, batch, cfg.seen, cfg.predict);
            train_total += lg.loss * static_cast<double>(batch.size());
            clip_gradients(lg.gradients, cfg.clip_norm);
            rmsprop_step(current, lg.gradients, opt, lr);
        }
        const double val = evaluate_loss(current, val_windows, cfg.seen, cfg.predict);
        result.history.push_back(
            {first_epoch + e, lr, train_total / static_cast<double>(order.size()), val});
        if (val < result.best_val_loss) {
            result.best_val_loss = val;
            result.weights = current;
        }
        if (val < plateau_reference * (1.0 - cfg.min_relative_improvement)) {
            plateau_reference = val;
            stale_epochs = 0;
        } else if (++stale_epochs >= cfg.plateau_epochs) {
            lr *= cfg.plateau_factor;
            stale_epochs = 0;
            if (lr < lr_floor) {
                break;
            }
        }
    }
    return result;
}

inline void write_history_csv(const std::string& path, std::span<const EpochRecord> history, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) {
        throw IoError("cannot write history: " + path);
    }
    if (!append) {
        out << "epoch,lr,train_loss,val_loss\n";
    }
    out.precision(9);
    for (const EpochRecord& r : history) {
        out << r.epoch << ',' << r.learning_rate << ',' << r.train_loss << ',' << r.val_loss << '\n';
    }
}

/// Parses a history CSV written by write_history_csv.
inline std::vector<EpochRecord> read_history_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read history: " + path);
    }
    std::vector<EpochRecord> rows;
    std::string line;
    std::getline(in, line);
    if (line != "epoch,lr,train_loss,val_loss") {
        throw FormatError("history CSV: unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        EpochRecord r;
        char c1 = 0, c2 = 0, c3 = 0;
        std::istringstream fields(line);
        if (!(fields >> r.epoch >> c1 >> r.learning_rate >> c2 >> r.train_loss >> c3 >> r.val_loss) || c1 != ',' ||
            c2 != ',' || c3 != ',') {
            throw FormatError("history CSV: malformed row: " + line);
        }
        rows.push_back(r);
    }
    return rows;
}

struct GridSpace {
    std::vector<Eigen::Index> hidden;
    std::vector<std::size_t> horizon;  // N = M
    std::vector<double> learning_rate;
    std::vector<bool> conditional;
    int max_epochs = 10;

    std::size_t size() const { return hidden.size() * horizon.size() * learning_rate.size() * conditional.size(); }
};

struct GridEntry {
    TrainConfig config;
    double best_val_loss = 0.0;
    int epochs_run = 0;
};

/// Trains every configuration in the space on the same data and seed and
/// ranks them by best validation loss, ascending.
inline std::vector<GridEntry> gridsearch(std::span<const Matrix> train_set, std::span<const Matrix> val_set,
                                         const GridSpace& space, const TrainConfig& base, std::size_t jobs = 1) {
    if (space.size() == 0) {
        throw ConfigError("gridsearch: empty search space");
    }
    std::vector<GridEntry> entries;
    for (Eigen::Index h : space.hidden) {
        for (std::size_t n : space.horizon) {
            for (double lr : space.learning_rate) {
                for (bool cond : space.conditional) {
                    GridEntry e;
                    e.config = base;
                    e.config.hidden = h;
                    e.config.seen = n;
                    e.config.predict = n;
                    e.config.learning_rate = lr;
                    e.config.conditional = cond;
                    e.config.max_epochs = space.max_epochs;
                    e.config.validate();
                    entries.push_back(e);
                }
            }
        }
    }
    parallel_for(entries.size(), jobs, [&](std::size_t i) {
        const TrainResult r = train(train_set, val_set, entries[i].config);
        entries[i].best_val_loss = r.best_val_loss;
        entries[i].epochs_run = static_cast<int>(r.history.size());
    });
    std::stable_sort(entries.begin(), entries.end(),
                     [](const GridEntry& a, const GridEntry& b) { return a.best_val_loss < b.best_val_loss; });
    return entries;
}

}  // namespace ces::training
