#pragma once

// Visual Context Predictor: an LSTM encoder whose hidden state is the visual
// context r_t, and an LSTM decoder plus linear readout that forecasts the next
// frame feature from r_t. The same weights encode a sequence in either time
// direction.

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "ces/binary_io.hpp"
#include "ces/errors.hpp"
#include "ces/numerics.hpp"

namespace ces::vcp {

/// Gate column blocks inside an LSTM weight matrix, in packing order.
enum Gate : int { kInput = 0, kForget = 1, kOutput = 2, kModulation = 3 };

/// Weights of one LSTM layer: (input_dim + hidden + 1) x 4*hidden. Rows hold
/// the input, recurrent and bias terms; column blocks hold gates (i, f, o, g).
struct LstmCellWeights {
    Matrix W;

    LstmCellWeights() = default;
    explicit LstmCellWeights(Matrix w) : W(std::move(w)) {}

    static LstmCellWeights zeros(Eigen::Index input_dim, Eigen::Index hidden) {
        return LstmCellWeights(Matrix::Zero(input_dim + hidden + 1, 4 * hidden));
    }

    Eigen::Index hidden() const { return W.cols() / 4; }
    Eigen::Index input_dim() const { return W.rows() - hidden() - 1; }
    Eigen::Index bias_row() const { return W.rows() - 1; }

    void validate(Eigen::Index input_dim, Eigen::Index hidden) const {
        if (W.rows() != input_dim + hidden + 1 || W.cols() != 4 * hidden) {
            throw ShapeError("LSTM weight shape mismatch");
        }
        if (!W.allFinite()) {
            throw NumericError("LSTM weights not finite");
        }
    }
};

struct LstmState {
    Vector c;
    Vector h;

    static LstmState zero(Eigen::Index hidden) { return {Vector::Zero(hidden), Vector::Zero(hidden)}; }
};

/// Intermediate values of one step, kept for backpropagation.
struct LstmTrace {
    Vector input;  // [x; h_prev; 1]
    Vector i, f, o, g;
    Vector c_prev;
    Vector c;
    Vector tanh_c;
};

/// One LSTM step; fills `trace` when it is non-null.
template <typename Derived>
LstmState lstm_step(const LstmCellWeights& w, const Eigen::MatrixBase<Derived>& x, const LstmState& prev,
                    LstmTrace* trace = nullptr) {
    const Eigen::Index H = w.hidden();
    const Eigen::Index D = w.input_dim();
    if (x.size() != D || prev.h.size() != H || prev.c.size() != H) {
        throw ShapeError("lstm_step: dimension mismatch");
    }
    if (!x.allFinite()) {
        throw NumericError("numeric overflow");
    }
    Vector input(D + H + 1);
    input << x, prev.h, 1.0;
    const Vector z = w.W.transpose() * input;

    LstmState next{Vector(H), Vector(H)};
    Vector i(H), f(H), o(H), g(H), tanh_c(H);
    for (Eigen::Index k = 0; k < H; ++k) {
        i[k] = sigmoid(z[kInput * H + k]);
        f[k] = sigmoid(z[kForget * H + k]);
        o[k] = sigmoid(z[kOutput * H + k]);
        g[k] = std::tanh(z[kModulation * H + k]);
        next.c[k] = f[k] * prev.c[k] + i[k] * g[k];
        tanh_c[k] = std::tanh(next.c[k]);
        next.h[k] = o[k] * tanh_c[k];
    }
    if (!next.c.allFinite()) {
        throw NumericError("numeric overflow");
    }
    if (trace != nullptr) {
        trace->input = std::move(input);
        trace->i = std::move(i);
        trace->f = std::move(f);
        trace->o = std::move(o);
        trace->g = std::move(g);
        trace->c_prev = prev.c;
        trace->c = next.c;
        trace->tanh_c = std::move(tanh_c);
    }
    return next;
}

enum class Direction { forward, backward };

inline const char* to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

/// Encoder (D -> H), decoder (H -> H) and linear readout (H -> D).
struct VcpWeights {
    LstmCellWeights encoder;
    LstmCellWeights decoder;
    Matrix readout;       // H x D
    Vector readout_bias;  // D
    bool conditional = true;

    Eigen::Index feature_dim() const { return readout.cols(); }
    Eigen::Index hidden() const { return readout.rows(); }

    static VcpWeights zeros(Eigen::Index feature_dim, Eigen::Index hidden, bool conditional = true) {
        if (feature_dim < 1 || hidden < 1) {
            throw ShapeError("VcpWeights: dimensions must be positive");
        }
        VcpWeights w;
        w.encoder = LstmCellWeights::zeros(feature_dim, hidden);
        w.decoder = LstmCellWeights::zeros(hidden, hidden);
        w.readout = Matrix::Zero(hidden, feature_dim);
        w.readout_bias = Vector::Zero(feature_dim);
        w.conditional = conditional;
        return w;
    }

    /// Uniform [-0.08, 0.08] everywhere, then forget-gate biases set to +1.
    static VcpWeights initialize(Eigen::Index feature_dim, Eigen::Index hidden, Rng& rng, bool conditional = true) {
        VcpWeights w = zeros(feature_dim, hidden, conditional);
        for (auto block : w.blocks()) {
            for (double& v : block) {
                v = rng.uniform(-0.08, 0.08);
            }
        }
        for (LstmCellWeights* cell : {&w.encoder, &w.decoder}) {
            cell->W.row(cell->bias_row()).segment(kForget * hidden, hidden).setOnes();
        }
        return w;
    }

    void validate() const {
        const Eigen::Index D = feature_dim();
        const Eigen::Index H = hidden();
        if (D < 1 || H < 1) {
            throw ShapeError("VcpWeights: empty model");
        }
        encoder.validate(D, H);
        decoder.validate(H, H);
        if (readout_bias.size() != D) {
            throw ShapeError("VcpWeights: readout bias size mismatch");
        }
        if (!readout.allFinite() || !readout_bias.allFinite()) {
            throw NumericError("VcpWeights: readout not finite");
        }
    }

    /// Every trainable parameter, block by block, as contiguous storage.
    std::array<std::span<double>, 4> blocks() {
        return {std::span<double>(encoder.W.data(), static_cast<std::size_t>(encoder.W.size())),
                std::span<double>(decoder.W.data(), static_cast<std::size_t>(decoder.W.size())),
                std::span<double>(readout.data(), static_cast<std::size_t>(readout.size())),
                std::span<double>(readout_bias.data(), static_cast<std::size_t>(readout_bias.size()))};
    }

    std::array<std::span<const double>, 4> blocks() const {
        return {std::span<const double>(encoder.W.data(), static_cast<std::size_t>(encoder.W.size())),
                std::span<const double>(decoder.W.data(), static_cast<std::size_t>(decoder.W.size())),
                std::span<const double>(readout.data(), static_cast<std::size_t>(readout.size())),
                std::span<const double>(readout_bias.data(), static_cast<std::size_t>(readout_bias.size()))};
    }

    static constexpr std::array<const char*, 4> block_names{"encoder", "decoder", "readout", "readout_bias"};

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto b : blocks()) {
            n += b.size();
        }
        return n;
    }
};

/// Encoder hidden states, one row per frame in original frame order. Row t is
/// the state after consuming frame t in the stated direction.
struct ContextSequence {
    Matrix r;
    Direction direction = Direction::forward;
};

inline ContextSequence encode(const VcpWeights& w, const Matrix& frames, Direction direction) {
    const Eigen::Index T = frames.rows();
    if (T < 1) {
        throw ShapeError("encode: empty sequence");
    }
    if (frames.cols() != w.feature_dim()) {
        throw ShapeError("encode: feature dimension mismatch");
    }
    ContextSequence out{Matrix(T, w.hidden()), direction};
    LstmState state = LstmState::zero(w.hidden());
    for (Eigen::Index step = 0; step < T; ++step) {
        const Eigen::Index t = direction == Direction::forward ? step : T - 1 - step;
        state = lstm_step(w.encoder, frames.row(t).transpose(), state);
        out.r.row(t) = state.h.transpose();
    }
    return out;
}

inline Vector readout(const VcpWeights& w, const Vector& hidden) {
    return w.readout.transpose() * hidden + w.readout_bias;
}

struct DecodeResult {
    Vector prediction;
    LstmState next;
};

/// The decoder consumes a context vector; the readout maps its hidden state
/// to a predicted frame feature.
template <typename Derived>
DecodeResult decode_step(const VcpWeights& w, const Eigen::MatrixBase<Derived>& context, const LstmState& prev) {
    if (context.size() != w.hidden()) {
        throw ShapeError("decode_step: context dimension mismatch");
    }
    LstmState next = lstm_step(w.decoder, context, prev);
    Vector prediction = readout(w, next.h);
    if (!prediction.allFinite()) {
        throw NumericError("numeric overflow");
    }
    return {std::move(prediction), std::move(next)};
}

/// Predicts frames seen+1 .. seen+predict (1-based) after the encoder consumes
/// the first `seen` frames. Conditional mode feeds the observed frame to the
/// encoder after each prediction; otherwise the model's own prediction is fed
/// back. Row j of the result is the prediction for frame index seen + j.
inline Matrix rollout(const VcpWeights& w, const Matrix& frames, std::size_t seen, std::size_t predict,
                      bool conditional) {
    if (seen < 1) {
        throw ConfigError("rollout: at least one frame must be seen");
    }
    const auto T = static_cast<std::size_t>(frames.rows());
    const std::size_t required = conditional ? seen + predict : seen;
    if (T < required) {
        throw ShapeError("rollout: sequence too short, need at least " + std::to_string(required) + " frames");
    }
    if (frames.cols() != w.feature_dim()) {
        throw ShapeError("rollout: feature dimension mismatch");
    }
    Matrix out(static_cast<Eigen::Index>(predict), w.feature_dim());
    LstmState enc = LstmState::zero(w.hidden());
    for (std::size_t k = 0; k < seen; ++k) {
        enc = lstm_step(w.encoder, frames.row(static_cast<Eigen::Index>(k)).transpose(), enc);
    }
    LstmState dec = LstmState::zero(w.hidden());
    for (std::size_t j = 0; j < predict; ++j) {
        DecodeResult step = decode_step(w, enc.h, dec);
        dec = std::move(step.next);
        out.row(static_cast<Eigen::Index>(j)) = step.prediction.transpose();
        if (j + 1 < predict) {
            if (conditional) {
                enc = lstm_step(w.encoder, frames.row(static_cast<Eigen::Index>(seen + j)).transpose(), enc);
            } else {
                enc = lstm_step(w.encoder, step.prediction, enc);
            }
        }
    }
    return out;
}

// Weight file: "VCPW", u32 version, u32 D, u32 H, u8 conditional, then the
// encoder W, decoder W, readout W and readout bias, each as (u32 rows, u32
// cols) + row-major f32. All integers little-endian.
inline constexpr std::uint32_t kWeightFileVersion = 1;

inline std::vector<char> serialize(const VcpWeights& w) {
    w.validate();
    io::Writer out;
    out.bytes("VCPW");
    out.u32(kWeightFileVersion);
    out.u32(static_cast<std::uint32_t>(w.feature_dim()));
    out.u32(static_cast<std::uint32_t>(w.hidden()));
    out.u8(w.conditional ? 1 : 0);
    out.matrix(w.encoder.W);
    out.matrix(w.decoder.W);
    out.matrix(w.readout);
    out.matrix(w.readout_bias.transpose());
    return out.data();
}

inline VcpWeights deserialize(std::vector<char> bytes) {
    io::Reader in(std::move(bytes));
    in.expect_magic("VCPW");
    const std::uint32_t version = in.u32();
    if (version != kWeightFileVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const std::uint32_t D = in.u32();
    const std::uint32_t H = in.u32();
    const std::uint8_t flag = in.u8();
    if (flag > 1) {
        throw FormatError("bad conditional flag");
    }
    if (D == 0 || H == 0) {
        throw FormatError("zero model dimension");
    }
    VcpWeights w;
    w.conditional = flag == 1;
    w.encoder.W = in.matrix();
    w.decoder.W = in.matrix();
    w.readout = in.matrix();
    const Matrix bias = in.matrix();
    in.expect_end();
    if (bias.rows() != 1) {
        throw FormatError("readout bias must be a single row");
    }
    w.readout_bias = bias.row(0).transpose();
    if (w.readout.rows() != H || w.readout.cols() != D) {
        throw FormatError("readout shape does not match header");
    }
    try {
        w.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("inconsistent weight file: ") + e.what());
    }
    return w;
}

inline void save_weights(const VcpWeights& w, const std::string& path) {
    io::Writer out;
    const auto bytes = serialize(w);
    out.bytes(std::string_view(bytes.data(), bytes.size()));
    out.save(path);
}

inline VcpWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open weights: " + path);
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(std::move(bytes));
}

}  // namespace ces::vcp
