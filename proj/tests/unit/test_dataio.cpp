#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "ces/dataio.hpp"

using namespace ces;
using namespace ces::dataio;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = 3.0 * rng.normal();
        }
    }
    return m;
}

Matrix quantized(const Matrix& m) {
    return m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

SynthScenario small_scenario(std::uint64_t seed) {
    SynthScenario s;
    s.n_events = 5;
    s.event_length_min = 8;
    s.event_length_max = 14;
    s.feature_dim = 12;
    s.color_dim = 4;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(FeatureFile, SingleValueLayout) {
    const Matrix one = Matrix::Constant(1, 1, 0.5);
    const std::vector<char> bytes = serialize_features(one);
    ASSERT_EQ(bytes.size(), 20u);
    EXPECT_EQ(std::string(bytes.data(), 4), "FSEQ");
    const unsigned char header[12] = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
    EXPECT_EQ(std::memcmp(bytes.data() + 4, header, 12), 0);
    float payload = 0.0f;
    std::memcpy(&payload, bytes.data() + 16, 4);
    EXPECT_EQ(payload, 0.5f);
    EXPECT_EQ(deserialize_features(bytes), one);
}

TEST(FeatureFile, RoundTripIsF32Exact) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix m = random_matrix(rng, 1 + static_cast<Eigen::Index>(rng.index(9)),
                                       1 + static_cast<Eigen::Index>(rng.index(6)));
        const Matrix back = deserialize_features(serialize_features(m));
        ASSERT_EQ(back, quantized(m));
        ASSERT_EQ(deserialize_features(serialize_features(back)), back);
    }
    TempDir dir("ces_dataio_features");
    const Matrix m = random_matrix(rng, 7, 3);
    write_features(dir.file("x.fseq"), m);
    EXPECT_EQ(read_features(dir.file("x.fseq")), quantized(m));
    EXPECT_THROW(read_features(dir.file("missing.fseq")), IoError);
    EXPECT_THROW(serialize_features(Matrix(0, 3)), ShapeError);
}

TEST(FeatureFile, CorruptionRaisesTypedErrors) {
    Rng rng(12);
    const std::vector<char> good = serialize_features(random_matrix(rng, 3, 2));
    try {
        deserialize_features(std::vector<char>(good.begin(), good.end() - 1));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_STREQ(e.what(), "truncated payload");
    }
    for (std::size_t len = 0; len < good.size(); ++len) {
        EXPECT_THROW(deserialize_features(std::vector<char>(good.begin(), good.begin() + static_cast<long>(len))),
                     FormatError);
    }
    std::vector<char> longer = good;
    longer.push_back(0);
    EXPECT_THROW(deserialize_features(longer), FormatError);
    std::vector<char> magic = good;
    magic[0] = 'X';
    EXPECT_THROW(deserialize_features(magic), FormatError);
    std::vector<char> version = good;
    version[4] = 2;
    EXPECT_THROW(deserialize_features(version), FormatError);
    std::vector<char> empty = good;
    std::memset(empty.data() + 8, 0, 4);
    EXPECT_THROW(deserialize_features(empty), FormatError);
    std::vector<char> nan = good;
    const float bad = std::nanf("");
    std::memcpy(nan.data() + 16, &bad, 4);
    EXPECT_THROW(deserialize_features(nan), FormatError);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<char> flipped = good;
        flipped[rng.index(flipped.size())] ^= static_cast<char>(1 + rng.index(255));
        try {
            const Matrix m = deserialize_features(flipped);
            ASSERT_TRUE(m.allFinite());
        } catch (const Error&) {
        }
    }
}

TEST(Annotations, FormatAndParse) {
    EXPECT_EQ(format_boundaries({3, 10}), "3\n10\n");
    EXPECT_EQ(format_boundaries({}), "");
    EXPECT_THROW(format_boundaries({4, 4}), ShapeError);
    EXPECT_EQ(parse_boundaries("# header\n\n3\n  # indented comment\n 10 \r\n\n"), (std::vector<std::size_t>{3, 10}));
    EXPECT_TRUE(parse_boundaries("").empty());
    try {
        parse_boundaries("10\n3\n");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_STREQ(e.what(), "line 2: not strictly increasing");
    }
    EXPECT_THROW(parse_boundaries("3\n3\n"), FormatError);
    EXPECT_THROW(parse_boundaries("-1\n"), FormatError);
    EXPECT_THROW(parse_boundaries("4.5\n"), FormatError);
    EXPECT_THROW(parse_boundaries("1 2\n"), FormatError);
}

TEST(Annotations, RoundTripProperty) {
    Rng rng(13);
    TempDir dir("ces_dataio_annotations");
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> b;
        std::size_t v = 0;
        for (std::size_t k = rng.index(12); k > 0; --k) {
            v += 1 + rng.index(1000);
            b.push_back(v);
        }
        ASSERT_EQ(parse_boundaries(format_boundaries(b)), b);
        write_boundaries(dir.file("b.txt"), b);
        ASSERT_EQ(read_boundaries(dir.file("b.txt")), b);
    }
    EXPECT_THROW(read_boundaries(dir.file("missing.txt")), IoError);
}

TEST(Manifest, LoadsAndResolvesRelativePaths) {
    TempDir dir("ces_dataio_manifest");
    fs::create_directories(dir.path() / "data");
    write_features(dir.file("data/a.fseq"), Matrix::Ones(4, 2));
    write_features(dir.file("data/a.color.fseq"), Matrix::Ones(4, 1));
    write_boundaries(dir.file("data/a.gt.txt"), {2});
    write_features(dir.file("data/b.fseq"), Matrix::Ones(3, 2));
    write_file(dir.file("m.json"), R"({"lifelogs": [
        {"id": "a", "features": "data/a.fseq", "color": "data/a.color.fseq",
         "ground_truth": "data/a.gt.txt", "split": "train"},
        {"id": "b", "features": "data/b.fseq"}]})");
    const Manifest m = load_manifest(dir.file("m.json"));
    ASSERT_EQ(m.lifelogs.size(), 2u);
    EXPECT_EQ(fs::path(m.lifelogs[0].features), dir.path() / "data/a.fseq");
    EXPECT_EQ(m.lifelogs[1].split, "test");
    EXPECT_FALSE(m.lifelogs[1].ground_truth);
    EXPECT_EQ(m.with_split("train").size(), 1u);

    const FeatureSequence a = load_sequence(m.lifelogs[0]);
    EXPECT_EQ(a.length(), 4);
    ASSERT_TRUE(a.color);
    EXPECT_EQ(a.color->cols(), 1);

    // Saving with relative paths and reloading yields the same resolution.
    Manifest rel = m;
    rel.lifelogs[0].features = "data/a.fseq";
    rel.lifelogs[0].color = "data/a.color.fseq";
    rel.lifelogs[0].ground_truth = "data/a.gt.txt";
    rel.lifelogs[1].features = "data/b.fseq";
    save_manifest(dir.file("copy.json"), rel);
    const Manifest again = load_manifest(dir.file("copy.json"));
    EXPECT_EQ(again.lifelogs[0].features, m.lifelogs[0].features);
    EXPECT_EQ(again.lifelogs[0].ground_truth, m.lifelogs[0].ground_truth);
}

TEST(Manifest, Errors) {
    TempDir dir("ces_dataio_manifest_errors");
    write_features(dir.file("a.fseq"), Matrix::Ones(4, 2));
    write_features(dir.file("short.fseq"), Matrix::Ones(3, 1));
    const auto load = [&](const std::string& text) {
        write_file(dir.file("m.json"), text);
        return load_manifest(dir.file("m.json"));
    };
    EXPECT_THROW(load(R"({"lifelogs": [{"id": "a", "features": "nope.fseq"}]})"), IoError);
    EXPECT_THROW(load(R"({"lifelogs": [{"id": "a", "features": "a.fseq"}, {"id": "a", "features": "a.fseq"}]})"),
                 ConfigError);
    EXPECT_THROW(load(R"({"lifelogs": [{"id": "a", "features": "a.fseq", "colour": "a.fseq"}]})"), ConfigError);
    EXPECT_THROW(load(R"({"lifelogs": [], "extra": 1})"), ConfigError);
    EXPECT_THROW(load(R"({"lifelogs": {}})"), ConfigError);
    EXPECT_THROW(load(R"({"lifelogs": [{"features": "a.fseq"}]})"), ConfigError);
    EXPECT_THROW(load("{not json"), ConfigError);
    EXPECT_THROW(load_manifest(dir.file("absent.json")), IoError);
    const Manifest mismatch = load(R"({"lifelogs": [{"id": "a", "features": "a.fseq", "color": "short.fseq"}]})");
    EXPECT_THROW(load_sequence(mismatch.lifelogs[0]), ShapeError);
}

TEST(Scenario, JsonRoundTripAndValidation) {
    SynthScenario s;
    s.n_events = 7;
    s.view_rank = 5;
    s.view_sigma = 0.7;
    s.view_persistence = 0.25;
    s.scene_count = 9;
    s.seed = 1234567890123ULL;
    const SynthScenario back = scenario_from_json(scenario_to_json(s));
    EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));

    const SynthScenario partial = scenario_from_json(json{{"n_events", 3}});
    EXPECT_EQ(partial.n_events, 3u);
    EXPECT_EQ(partial.feature_dim, SynthScenario{}.feature_dim);

    EXPECT_THROW(scenario_from_json(json{{"n_event", 3}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"n_events", "three"}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"n_events", 0}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"event_length_min", 50}, {"event_length_max", 40}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"occlusion_prob", 1.5}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"occlusion_length_min", 4}, {"occlusion_length_max", 3}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"view_persistence", 1.0}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"view_rank", 64}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"scene_count", 1}}), ConfigError);
    EXPECT_THROW(scenario_from_json(json{{"noise_sigma", -0.1}}), ConfigError);
}

TEST(Synth, SameSeedSameOutput) {
    SynthScenario s = small_scenario(5);
    s.view_rank = 3;
    s.view_sigma = 0.5;
    s.view_persistence = 0.4;
    s.scene_count = 4;
    const SynthLifelog a = synth(s);
    const SynthLifelog b = synth(s);
    EXPECT_EQ(a.sequence.frames, b.sequence.frames);
    EXPECT_EQ(*a.sequence.color, *b.sequence.color);
    EXPECT_EQ(a.boundaries, b.boundaries);
    EXPECT_EQ(a.occlusions, b.occlusions);
    s.seed = 6;
    EXPECT_NE(synth(s).sequence.frames, a.sequence.frames);
}

TEST(Synth, NoiselessTwoEventsAreTwoConstantBlocks) {
    SynthScenario s = small_scenario(3);
    s.n_events = 2;
    s.noise_sigma = 0.0;
    s.drift_rate = 0.0;
    s.occlusion_prob = 0.0;
    const SynthLifelog life = synth(s);
    ASSERT_EQ(life.boundaries.size(), 1u);
    const auto b = static_cast<Eigen::Index>(life.boundaries[0]);
    const Matrix& f = life.sequence.frames;
    for (Eigen::Index t = 1; t < f.rows(); ++t) {
        if (t == b) {
            EXPECT_GT((f.row(t) - f.row(t - 1)).norm(), 0.1);
        } else {
            EXPECT_EQ(f.row(t), f.row(t - 1));
        }
    }
    EXPECT_NEAR(f.row(0).norm(), 1.0, 1e-12);
}

TEST(Synth, BoundariesMatchEventsAndStayInside) {
    Rng rng(14);
    for (int trial = 0; trial < 1000; ++trial) {
        SynthScenario s = small_scenario(rng.next_u64());
        s.n_events = 1 + rng.index(8);
        s.event_length_min = 1 + rng.index(10);
        s.event_length_max = s.event_length_min + rng.index(10);
        s.feature_dim = 4;
        s.color_dim = 2;
        s.scene_count = rng.index(2) == 0 ? 0 : 2 + rng.index(4);
        const SynthLifelog life = synth(s);
        const auto T = static_cast<std::size_t>(life.sequence.frames.rows());
        ASSERT_EQ(life.boundaries.size(), s.n_events - 1);
        ASSERT_EQ(life.sequence.color->rows(), life.sequence.frames.rows());
        ASSERT_EQ(life.sequence.color->cols(), 2);
        ASSERT_TRUE(life.sequence.frames.allFinite());
        std::size_t prev = 0;
        for (std::size_t b : life.boundaries) {
            ASSERT_GE(b, prev + s.event_length_min);
            ASSERT_LE(b, prev + s.event_length_max);
            ASSERT_GE(b, 1u);
            ASSERT_LE(b, T - 1);
            prev = b;
        }
        ASSERT_GE(T - prev, s.event_length_min);
        for (const auto& [begin, end] : life.occlusions) {
            ASSERT_LT(begin, end);
            ASSERT_LE(end - begin, s.occlusion_length_max);
            // Every occlusion lies inside one event, at least two frames from its start.
            std::size_t event_start = 0;
            std::size_t event_end = T;
            for (std::size_t b : life.boundaries) {
                if (b <= begin) {
                    event_start = b;
                } else {
                    event_end = std::min(event_end, b);
                }
            }
            ASSERT_GE(begin, event_start + 2);
            ASSERT_LE(end + 1, event_end);
        }
    }
}

TEST(Synth, OcclusionFramesShareOneOutlierDirection) {
    SynthScenario s = small_scenario(21);
    s.n_events = 20;
    s.event_length_min = 12;
    s.occlusion_prob = 1.0;
    s.occlusion_length_min = 2;
    s.noise_sigma = 0.0;
    const SynthLifelog life = synth(s);
    ASSERT_EQ(life.occlusions.size(), 20u);
    for (const auto& [begin, end] : life.occlusions) {
        for (std::size_t t = begin + 1; t < end; ++t) {
            EXPECT_EQ(life.sequence.frames.row(static_cast<Eigen::Index>(t)),
                      life.sequence.frames.row(static_cast<Eigen::Index>(begin)));
        }
    }
}

TEST(Synth, ColorIgnoresTheViewComponent) {
    SynthScenario s = small_scenario(8);
    s.noise_sigma = 0.0;
    s.drift_rate = 0.0;
    s.occlusion_prob = 0.0;
    s.view_rank = 3;
    s.view_sigma = 2.0;
    const SynthLifelog life = synth(s);
    const Matrix& color = *life.sequence.color;
    const Matrix& frames = life.sequence.frames;
    std::size_t start = 0;
    for (std::size_t end : life.boundaries) {
        for (std::size_t t = start + 1; t < end; ++t) {
            const auto r = static_cast<Eigen::Index>(t);
            EXPECT_EQ(color.row(r), color.row(r - 1));
            EXPECT_GT((frames.row(r) - frames.row(r - 1)).norm(), 0.0);
        }
        start = end;
    }
}

TEST(Synth, ViewBasisIsOrthonormal) {
    SynthScenario s;
    s.feature_dim = 20;
    s.view_rank = 6;
    const Matrix v = view_basis(s);
    ASSERT_EQ(v.rows(), 20);
    ASSERT_EQ(v.cols(), 6);
    EXPECT_LT((v.transpose() * v - Matrix::Identity(6, 6)).norm(), 1e-12);
    s.view_rank = 0;
    EXPECT_EQ(view_basis(s).cols(), 0);
}
