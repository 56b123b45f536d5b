#pragma once

// File formats (features, boundary annotations, manifests, scenarios) and the
// synthetic lifelog generator.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ces/binary_io.hpp"
#include "ces/errors.hpp"
#include "ces/numerics.hpp"

namespace ces::dataio {

namespace fs = std::filesystem;
using nlohmann::json;

struct FeatureSequence {
    std::string id;
    Matrix frames;
    std::optional<Matrix> color;

    Eigen::Index length() const { return frames.rows(); }
};

// ---------------------------------------------------------------------------
// Feature files: "FSEQ", u32 version, u32 T, u32 D, T*D f32 row-major.

inline constexpr std::uint32_t kFeatureVersion = 1;

inline std::vector<char> serialize_features(const Matrix& frames) {
    if (frames.rows() < 1 || frames.cols() < 1) {
        throw ShapeError("feature matrix must be non-empty");
    }
    io::Writer w;
    w.bytes("FSEQ");
    w.u32(kFeatureVersion);
    w.matrix(frames);
    return w.data();
}

inline Matrix deserialize_features(std::vector<char> bytes) {
    io::Reader r(std::move(bytes));
    r.expect_magic("FSEQ");
    const std::uint32_t version = r.u32();
    if (version != kFeatureVersion) {
        throw FormatError("unsupported feature file version " + std::to_string(version));
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) {
        throw FormatError("empty feature matrix");
    }
    Matrix m = r.payload(rows, cols);
    r.expect_end();
    return m;
}

inline void write_features(const std::string& path, const Matrix& frames) {
    const std::vector<char> bytes = serialize_features(frames);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

inline Matrix read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path);
    }
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_features(std::move(data));
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Boundary annotations: one 0-based index per line, '#' comments, blanks ignored.

inline std::string format_boundaries(const std::vector<std::size_t>& boundaries) {
    std::string out;
    for (std::size_t i = 0; i < boundaries.size(); ++i) {
        if (i > 0 && boundaries[i] <= boundaries[i - 1]) {
            throw ShapeError("boundaries not strictly increasing");
        }
        out += std::to_string(boundaries[i]);
        out += '\n';
    }
    return out;
}

inline std::vector<std::size_t> parse_boundaries(const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const auto last = line.find_last_not_of(" \t");
        const std::string token = line.substr(first, last - first + 1);
        if (token.find_first_not_of("0123456789") != std::string::npos || token.size() > 18) {
            throw FormatError("line " + std::to_string(line_no) + ": not a frame index: " + token);
        }
        const std::size_t v = std::stoull(token);
        if (!out.empty() && v <= out.back()) {
            throw FormatError("line " + std::to_string(line_no) + ": not strictly increasing");
        }
        out.push_back(v);
    }
    return out;
}

inline void write_boundaries(const std::string& path, const std::vector<std::size_t>& boundaries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << format_boundaries(boundaries);
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

inline std::vector<std::size_t> read_boundaries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_boundaries(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Manifest: {"lifelogs": [{"id", "features", "color"?, "ground_truth"?, "split"}]}
// Relative paths are resolved against the manifest's directory.

struct ManifestEntry {
    std::string id;
    std::string features;
    std::optional<std::string> color;
    std::optional<std::string> ground_truth;
    std::string split;
};

struct Manifest {
    std::vector<ManifestEntry> lifelogs;

    std::vector<const ManifestEntry*> with_split(const std::string& split) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : lifelogs) {
            if (e.split == split) {
                out.push_back(&e);
            }
        }
        return out;
    }
};

/// Throws ConfigError naming the first key of `obj` not in `allowed`.
inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError(where + ": unknown key \"" + key + "\"");
        }
    }
}

inline json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline Manifest manifest_from_json(const json& doc, const fs::path& base_dir) {
    reject_unknown_keys(doc, {"lifelogs"}, "manifest");
    if (!doc.contains("lifelogs") || !doc["lifelogs"].is_array()) {
        throw ConfigError("manifest: \"lifelogs\" must be an array");
    }
    Manifest m;
    std::set<std::string> ids;
    const auto resolve = [&](const std::string& p) {
        fs::path path(p);
        if (path.is_relative()) {
            path = base_dir / path;
        }
        if (!fs::exists(path)) {
            throw IoError("manifest: file not found: " + path.string());
        }
        return path.string();
    };
    for (const json& item : doc["lifelogs"]) {
        reject_unknown_keys(item, {"id", "features", "color", "ground_truth", "split"}, "manifest entry");
        ManifestEntry e;
        try {
            e.id = item.at("id").get<std::string>();
            e.features = resolve(item.at("features").get<std::string>());
            if (item.contains("color")) {
                e.color = resolve(item["color"].get<std::string>());
            }
            if (item.contains("ground_truth")) {
                e.ground_truth = resolve(item["ground_truth"].get<std::string>());
            }
            e.split = item.value("split", std::string("test"));
        } catch (const json::exception& ex) {
            throw ConfigError(std::string("manifest entry: ") + ex.what());
        }
        if (!ids.insert(e.id).second) {
            throw ConfigError("manifest: duplicate id " + e.id);
        }
        m.lifelogs.push_back(std::move(e));
    }
    return m;
}

inline Manifest load_manifest(const std::string& path) {
    return manifest_from_json(parse_json_file(path), fs::absolute(fs::path(path)).parent_path());
}

/// Paths are written as given; callers pass them relative to the manifest.
inline json manifest_to_json(const Manifest& m) {
    json list = json::array();
    for (const ManifestEntry& e : m.lifelogs) {
        json item{{"id", e.id}, {"features", e.features}, {"split", e.split}};
        if (e.color) {
            item["color"] = *e.color;
        }
        if (e.ground_truth) {
            item["ground_truth"] = *e.ground_truth;
        }
        list.push_back(std::move(item));
    }
    return json{{"lifelogs", std::move(list)}};
}

inline void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << manifest_to_json(m).dump(2) << '\n';
}

inline FeatureSequence load_sequence(const ManifestEntry& e) {
    FeatureSequence s{e.id, read_features(e.features), std::nullopt};
    if (e.color) {
        s.color = read_features(*e.color);
        if (s.color->rows() != s.frames.rows()) {
            throw ShapeError(e.id + ": color features have " + std::to_string(s.color->rows()) +
                             " frames, expected " + std::to_string(s.frames.rows()));
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic lifelogs.

struct SynthScenario {
    std::size_t n_events = 12;
    std::size_t event_length_min = 15;
    std::size_t event_length_max = 40;
    std::size_t scene_count = 0;       // 0: fresh context per event; else drawn from a shared vocabulary
    std::uint64_t vocabulary_seed = 1; // vocabulary is shared by every lifelog with the same value
    double context_overlap = 0.0;      // squared cosine shared by any two event contexts
    double drift_rate = 0.1;
    double view_sigma = 0.0;       // expected norm of the per-frame view component
    std::size_t view_rank = 0;     // dimension of the view subspace (0: no view component)
    double view_persistence = 0.0; // AR(1) coefficient of the view component across frames
    double noise_sigma = 0.06;
    double occlusion_prob = 0.5;  // per event
    std::size_t occlusion_length_min = 1;
    std::size_t occlusion_length_max = 3;
    std::size_t feature_dim = 64;
    std::size_t color_dim = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_events < 1) {
            throw ConfigError("scenario: n_events must be at least 1");
        }
        if (event_length_min < 1 || event_length_min > event_length_max) {
            throw ConfigError("scenario: event length range is empty");
        }
        if (!(drift_rate >= 0.0) || !(noise_sigma >= 0.0) || !(view_sigma >= 0.0)) {
            throw ConfigError("scenario: drift_rate, noise_sigma and view_sigma must be non-negative");
        }
        if (!(view_persistence >= 0.0 && view_persistence < 1.0)) {
            throw ConfigError("scenario: view_persistence must lie in [0, 1)");
        }
        if (view_rank >= feature_dim && view_rank > 0) {
            throw ConfigError("scenario: view_rank must be smaller than feature_dim");
        }
        if (scene_count == 1) {
            throw ConfigError("scenario: scene_count must be 0 or at least 2");
        }
        if (!(context_overlap >= 0.0 && context_overlap < 1.0)) {
            throw ConfigError("scenario: context_overlap must lie in [0, 1)");
        }
        if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) {
            throw ConfigError("scenario: occlusion_prob must lie in [0, 1]");
        }
        if (occlusion_length_min < 1 || occlusion_length_min > occlusion_length_max) {
            throw ConfigError("scenario: occlusion length range is empty");
        }
        if (feature_dim < 1 || color_dim < 1) {
            throw ConfigError("scenario: dimensions must be positive");
        }
    }
};

inline json scenario_to_json(const SynthScenario& s) {
    return json{{"n_events", s.n_events},
                {"event_length_min", s.event_length_min},
                {"event_length_max", s.event_length_max},
                {"scene_count", s.scene_count},
                {"vocabulary_seed", s.vocabulary_seed},
                {"context_overlap", s.context_overlap},
                {"drift_rate", s.drift_rate},
                {"view_sigma", s.view_sigma},
                {"view_rank", s.view_rank},
                {"view_persistence", s.view_persistence},
                {"noise_sigma", s.noise_sigma},
                {"occlusion_prob", s.occlusion_prob},
                {"occlusion_length_min", s.occlusion_length_min},
                {"occlusion_length_max", s.occlusion_length_max},
                {"feature_dim", s.feature_dim},
                {"color_dim", s.color_dim},
                {"seed", s.seed}};
}

/// Missing keys keep `base` values; unknown keys are rejected.
inline SynthScenario scenario_from_json(const json& doc, SynthScenario base = {}) {
    reject_unknown_keys(doc,
                        {"n_events", "event_length_min", "event_length_max", "scene_count", "vocabulary_seed", "context_overlap", "drift_rate", "view_sigma", "view_rank", "view_persistence", "noise_sigma",
                         "occlusion_prob", "occlusion_length_min", "occlusion_length_max", "feature_dim", "color_dim",
                         "seed"},
                        "scenario");
    try {
        const auto get = [&](const char* key, auto& field) {
            if (doc.contains(key)) {
                field = doc[key].get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("n_events", base.n_events);
        get("event_length_min", base.event_length_min);
        get("event_length_max", base.event_length_max);
        get("scene_count", base.scene_count);
        get("vocabulary_seed", base.vocabulary_seed);
        get("context_overlap", base.context_overlap);
        get("drift_rate", base.drift_rate);
        get("view_sigma", base.view_sigma);
        get("view_rank", base.view_rank);
        get("view_persistence", base.view_persistence);
        get("noise_sigma", base.noise_sigma);
        get("occlusion_prob", base.occlusion_prob);
        get("occlusion_length_min", base.occlusion_length_min);
        get("occlusion_length_max", base.occlusion_length_max);
        get("feature_dim", base.feature_dim);
        get("color_dim", base.color_dim);
        get("seed", base.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    base.validate();
    return base;
}

struct SynthLifelog {
    FeatureSequence sequence;  // color is always present
    std::vector<std::size_t> boundaries;
    std::vector<std::pair<std::size_t, std::size_t>> occlusions;  // [begin, end)
};

inline constexpr double kDriftPersistence = 0.95;
inline constexpr std::uint64_t kColorProjectionSeed = 0xC0102;

/// Fixed D -> Dc projection shared by every lifelog of the same dimensions.
inline Matrix color_projection(std::size_t dim, std::size_t color_dim) {
    Rng rng(derive_seed(kColorProjectionSeed, dim * 1000003ULL + color_dim));
    Matrix p(static_cast<Eigen::Index>(color_dim), static_cast<Eigen::Index>(dim));
    const double scale = 1.0 / std::sqrt(static_cast<double>(color_dim));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            p(r, c) = scale * rng.normal();
        }
    }
    return p;
}

/// Orthonormal basis (D x view_rank) of the subspace holding within-event
/// view changes; fixed by vocabulary_seed.
inline Matrix view_basis(const SynthScenario& s) {
    const auto D = static_cast<Eigen::Index>(s.feature_dim);
    const auto r = static_cast<Eigen::Index>(s.view_rank);
    if (r == 0) {
        return Matrix(D, 0);
    }
    Rng rng(derive_seed(s.vocabulary_seed, 0x51E3ULL + s.feature_dim));
    Eigen::MatrixXd g(D, r);
    for (Eigen::Index c = 0; c < r; ++c) {
        for (Eigen::Index k = 0; k < D; ++k) {
            g(k, c) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return Matrix(qr.householderQ() * Eigen::MatrixXd::Identity(D, r));
}

/// Event contexts: sqrt(overlap) * shared + sqrt(1 - overlap) * own, with
/// independent random unit directions orthogonal to the view subspace. With
/// scene_count > 0 they come from a vocabulary fixed by vocabulary_seed, so
/// lifelogs revisit the same scenes.
inline std::vector<Vector> scene_vocabulary(const SynthScenario& s, const Matrix& views, Rng& rng, std::size_t count) {
    const auto D = static_cast<Eigen::Index>(s.feature_dim);
    const auto draw = [&] {
        Vector v = rng.unit_vector(D);
        v -= views * (views.transpose() * v);
        return Vector(v / v.norm());
    };
    const Vector shared = draw();
    std::vector<Vector> out;
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(std::sqrt(s.context_overlap) * shared + std::sqrt(1.0 - s.context_overlap) * draw());
    }
    return out;
}

/// Frames are the event context + AR(1) drift + isotropic noise + an AR(1)
/// view component living in a fixed low-rank subspace. An event may carry one occlusion run placed at least two
/// frames from its edges, during which the context is replaced by a shared
/// outlier direction. Color features project the context (or occluder) plus
/// drift and add noise. Consecutive events never share a scene.
inline SynthLifelog synth(const SynthScenario& s, std::string id = "synth") {
    s.validate();
    Rng rng(s.seed);
    const auto D = static_cast<Eigen::Index>(s.feature_dim);
    std::vector<std::size_t> lengths(s.n_events);
    std::size_t T = 0;
    for (std::size_t& len : lengths) {
        len = s.event_length_min + rng.index(s.event_length_max - s.event_length_min + 1);
        T += len;
    }

    const Matrix views = view_basis(s);
    std::vector<Vector> contexts;
    if (s.scene_count > 0) {
        Rng vocab_rng(derive_seed(s.vocabulary_seed, s.feature_dim));
        const std::vector<Vector> vocabulary = scene_vocabulary(s, views, vocab_rng, s.scene_count);
        std::size_t previous = s.scene_count;
        for (std::size_t e = 0; e < s.n_events; ++e) {
            std::size_t pick = rng.index(previous < s.scene_count ? s.scene_count - 1 : s.scene_count);
            if (previous < s.scene_count && pick >= previous) {
                ++pick;
            }
            contexts.push_back(vocabulary[pick]);
            previous = pick;
        }
    } else {
        contexts = scene_vocabulary(s, views, rng, s.n_events);
    }

    SynthLifelog out;
    Matrix clean(static_cast<Eigen::Index>(T), D);
    Matrix frames(static_cast<Eigen::Index>(T), D);
    const double drift_step = s.drift_rate / std::sqrt(static_cast<double>(D));
    const double noise_step = s.noise_sigma;
    const double view_scale = s.view_rank > 0 ? s.view_sigma / std::sqrt(static_cast<double>(s.view_rank)) : 0.0;
    const double view_innovation = std::sqrt(1.0 - s.view_persistence * s.view_persistence);
    Vector view = Vector::Zero(views.cols());
    std::size_t start = 0;
    for (std::size_t e = 0; e < s.n_events; ++e) {
        const std::size_t len = lengths[e];
        if (e > 0) {
            out.boundaries.push_back(start);
        }
        const Vector& context = contexts[e];
        Vector drift = Vector::Zero(D);
        std::size_t occ_begin = start;
        std::size_t occ_end = start;
        if (rng.uniform() < s.occlusion_prob) {
            const std::size_t occ_len = s.occlusion_length_min + rng.index(s.occlusion_length_max - s.occlusion_length_min + 1);
            if (len >= occ_len + 4) {
                occ_begin = start + 2 + rng.index(len - occ_len - 3);
                occ_end = occ_begin + occ_len;
                out.occlusions.emplace_back(occ_begin, occ_end);
            }
        }
        const Vector occluder = occ_end > occ_begin ? rng.unit_vector(D) : Vector::Zero(D);
        for (std::size_t t = start; t < start + len; ++t) {
            if (t > start) {
                drift = kDriftPersistence * drift + rng.normal_vector(D, drift_step);
            }
            const auto row = static_cast<Eigen::Index>(t);
            const bool occluded = t >= occ_begin && t < occ_end;
            clean.row(row) = (occluded ? occluder : Vector(context + drift)).transpose();
            frames.row(row) = clean.row(row) + rng.normal_vector(D, noise_step).transpose();
            if (s.view_rank > 0) {
                // Stationary AR(1): the first frame draws from the marginal directly.
                const Vector fresh = rng.normal_vector(views.cols(), view_scale);
                view = t == 0 ? fresh : Vector(s.view_persistence * view + view_innovation * fresh);
                frames.row(row) += (views * view).transpose();
            }
        }
        start += len;
    }

    const Matrix projection = color_projection(s.feature_dim, s.color_dim);
    Matrix color = clean * projection.transpose();
    for (Eigen::Index r = 0; r < color.rows(); ++r) {
        color.row(r) += rng.normal_vector(color.cols(), noise_step).transpose();
    }
    out.sequence = FeatureSequence{std::move(id), std::move(frames), std::move(color)};
    return out;
}

}  // namespace ces::dataio
