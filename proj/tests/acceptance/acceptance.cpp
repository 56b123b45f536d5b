// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance --cli <path to ces binary> --configs <configs dir> [--work <dir>]

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ces/baselines.hpp"
#include "ces/dataio.hpp"
#include "ces/evaluation.hpp"
#include "ces/pruning.hpp"
#include "ces/segmentation.hpp"
#include "ces/training.hpp"
#include "ces/vcp.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ces;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

struct Verdict {
    int number;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Verdict> verdicts;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    verdicts.push_back({number, name, pass, detail});
    std::cout << (pass ? "PASS" : "FAIL") << "  " << number << " " << name << ": " << detail << std::endl;
}

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---------------------------------------------------------------------------
// Pipeline driven through the command-line binary. Every command runs inside
// `root` with relative paths, so two roots can be compared byte for byte.

const std::vector<std::string> kMethods{"ces", "ces-error", "ces-mean", "ces-pca", "kmeans", "ac-color", "kts"};
constexpr std::size_t kInjectedPerLifelog = 3;

struct Pipeline {
    std::string cli;
    fs::path configs;
    fs::path root;
    double train_seconds = 0.0;
    double segment_seconds = 0.0;
    std::string failure;

    bool run(const std::string& args, const std::string& log) {
        const std::string cmd = "cd " + quote(root.string()) + " && " + quote(cli) + " " + args + " >> " +
                                quote(log) + " 2>&1";
        const int status = std::system(cmd.c_str());
        if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            failure = "command failed: ces " + args + " (see " + (root / log).string() + ")";
            return false;
        }
        return true;
    }

    std::string config(const std::string& name) const { return quote((configs / name).string()); }

    bool execute() {
        fs::remove_all(root);
        fs::create_directories(root);
        if (!run("synth --scenario " + config("scenario.json") + " --out-dir data --splits train=20,val=5,test=20",
                 "synth.log")) {
            return false;
        }
        auto start = Clock::now();
        if (!run("train --manifest data/manifest.json --config " + config("train.json") + " --out model.vcpw",
                 "train.log")) {
            return false;
        }
        train_seconds = seconds_since(start);

        // The KTS penalty weight is chosen on the training split.
        start = Clock::now();
        if (!run("kts-calibrate --manifest data/manifest.json --split train --config " + config("segment.json") +
                     " --out kts.json",
                 "calibrate.log")) {
            return false;
        }
        for (const std::string& m : kMethods) {
            const std::string weights = m == "ces" || m == "ces-error" ? " --weights model.vcpw" : "";
            const std::string cfg = m == "kts" ? "kts.json" : config("segment.json");
            if (!run("segment --method " + m + weights + " --config " + cfg +
                         " --manifest data/manifest.json --split test --out-dir pred/" + m,
                     "segment.log") ||
                !run("evaluate --pred-dir pred/" + m + " --manifest data/manifest.json --split test", "evaluate.log")) {
                return false;
            }
        }
        segment_seconds = seconds_since(start);

        // Pruning: CES candidates with injected false positives on both the
        // training and the test split.
        if (!run("segment --method ces --weights model.vcpw --config " + config("segment.json") +
                     " --manifest data/manifest.json --split train --out-dir pred/ces-train",
                 "segment.log")) {
            return false;
        }
        inject("pred/ces-train", "prune/train", "train");
        inject("pred/ces", "prune/test", "test");
        return run("evaluate --pred-dir prune/test --manifest data/manifest.json --split test --out prune/before.csv",
                   "evaluate.log") &&
               run("prune-train --manifest data/manifest.json --pred-dir prune/train --split train --out prune.csvm",
                   "prune.log") &&
               run("prune-apply --model prune.csvm --manifest data/manifest.json --pred-dir prune/test --split test "
                   "--out-dir prune/pruned",
                   "prune.log") &&
               run("evaluate --pred-dir prune/pruned --manifest data/manifest.json --split test --out prune/after.csv",
                   "evaluate.log");
    }

    // Adds kInjectedPerLifelog detections that lie more than the tolerance
    // away from every true boundary and every existing detection, and far
    // enough from the stream edges for the pruning indicators.
    void inject(const std::string& from, const std::string& to, const std::string& split) const {
        const dataio::Manifest manifest = dataio::load_manifest((root / "data/manifest.json").string());
        fs::create_directories(root / to);
        std::uint64_t index = 0;
        for (const auto* e : manifest.with_split(split)) {
            Rng rng(derive_seed(0xFA15E, index++));
            const auto T = static_cast<std::size_t>(dataio::read_features(e->features).rows());
            const auto truth = dataio::read_boundaries(*e->ground_truth);
            auto detected = dataio::read_boundaries((root / from / (e->id + ".txt")).string());
            const auto clear = [&](std::size_t t, const std::vector<std::size_t>& set) {
                return std::all_of(set.begin(), set.end(), [&](std::size_t b) {
                    return (t > b ? t - b : b - t) > evaluation::kDefaultTolerance;
                });
            };
            std::size_t added = 0;
            for (int attempt = 0; attempt < 1000 && added < kInjectedPerLifelog; ++attempt) {
                const std::size_t t = 16 + rng.index(T - 32);
                if (clear(t, truth) && clear(t, detected)) {
                    detected.insert(std::upper_bound(detected.begin(), detected.end(), t), t);
                    ++added;
                }
            }
            dataio::write_boundaries((root / to / (e->id + ".txt")).string(), detected);
        }
    }
};

struct CsvSummary {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t false_positives = 0;
};

CsvSummary read_evaluation(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("missing evaluation file " + path.string());
    }
    CsvSummary s;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.empty()) {
            continue;
        }
        if (cells[0] == "average") {
            s.precision = std::stod(cells[1]);
            s.recall = std::stod(cells[2]);
            s.f1 = std::stod(cells[3]);
        } else if (cells.size() >= 6) {
            s.false_positives += std::stoul(cells[5]);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

void criterion_gradients() {
    const auto start = Clock::now();
    double worst = 0.0;
    std::size_t parameters = 0;
    Rng rng(1);
    for (bool conditional : {true, false}) {
        for (int trial = 0; trial < 3; ++trial) {
            const vcp::VcpWeights w = vcp::VcpWeights::initialize(3, 4, rng, conditional);
            std::vector<Matrix> windows;
            for (int k = 0; k < 3; ++k) {
                Matrix m(4, 3);
                for (Eigen::Index t = 0; t < 4; ++t) {
                    m.row(t) = rng.normal_vector(3).transpose();
                }
                windows.push_back(m);
            }
            const training::GradientCheck check = training::gradient_check(w, windows, 2, 2);
            worst = std::max(worst, check.worst());
            parameters += check.parameters;
        }
    }
    const double secs = seconds_since(start);
    report(1, "gradient check", worst < 1e-4 && secs < 10.0,
           fmt("max relative error %.2e over %.0f parameter probes in %.2f s", worst, static_cast<double>(parameters),
               secs));
}

// ---------------------------------------------------------------------------
// 2. Learning efficacy

void criterion_learning(const Pipeline& p) {
    const nlohmann::json cfg_json = dataio::parse_json_file((p.configs / "train.json").string());
    const std::size_t seen = cfg_json.at("seen").get<std::size_t>();
    const std::size_t predict = cfg_json.at("predict").get<std::size_t>();
    const dataio::Manifest manifest = dataio::load_manifest((p.root / "data/manifest.json").string());
    std::vector<Matrix> val;
    for (const auto* e : manifest.with_split("val")) {
        val.push_back(dataio::read_features(e->features));
    }
    const auto windows = training::make_windows(val, seen, predict, cfg_json.value("bidirectional", true));
    const vcp::VcpWeights trained = vcp::load_weights((p.root / "model.vcpw").string());
    Rng init_rng(cfg_json.at("seed").get<std::uint64_t>());
    const vcp::VcpWeights untrained =
        vcp::VcpWeights::initialize(trained.feature_dim(), trained.hidden(), init_rng, trained.conditional);

    const double trained_loss = training::evaluate_loss(trained, windows, seen, predict);
    const double previous = training::previous_frame_loss(windows, seen, predict);
    const double untrained_loss = training::evaluate_loss(untrained, windows, seen, predict);
    const std::size_t lifelogs = manifest.with_split("train").size();
    const bool pass = trained_loss < previous && previous < untrained_loss && lifelogs >= 20 &&
                      trained.feature_dim() == 64 && trained.hidden() == 64 && p.train_seconds < 600.0;
    report(2, "learning efficacy", pass,
           fmt("val mse trained %.5f < previous-frame %.5f < untrained %.5f; training %.1f s", trained_loss, previous,
               untrained_loss, p.train_seconds));
}

// ---------------------------------------------------------------------------
// 3, 4, 6. Method comparison on the test split

void criterion_methods(const Pipeline& p) {
    std::map<std::string, CsvSummary> s;
    for (const std::string& m : kMethods) {
        s[m] = read_evaluation(p.root / "pred" / m / "evaluation.csv");
    }
    const double ces = s["ces"].f1;
    const double best_baseline = std::max({s["kmeans"].f1, s["ac-color"].f1, s["kts"].f1});
    report(3, "method ordering", ces >= 0.80 && ces - best_baseline >= 0.05 && p.segment_seconds < 300.0,
           fmt("F1 ces %.3f, k-means %.3f, ac-color %.3f, kts %.3f", ces, s["kmeans"].f1, s["ac-color"].f1,
               s["kts"].f1) +
               fmt("; segmentation of all methods %.1f s", p.segment_seconds));

    const double tie = 0.02;
    const bool ordered = s["ces"].f1 >= s["ces-pca"].f1 - tie && s["ces-pca"].f1 >= s["ces-mean"].f1 - tie &&
                         s["ces-mean"].f1 >= s["ces-error"].f1 - tie;
    report(4, "variant ordering", ordered,
           fmt("F1 ces %.3f, ces-pca %.3f, ces-mean %.3f, ces-error %.3f", s["ces"].f1, s["ces-pca"].f1,
               s["ces-mean"].f1, s["ces-error"].f1));

}

// ---------------------------------------------------------------------------
// 5. Pruning

void criterion_pruning(const Pipeline& p) {
    const CsvSummary before = read_evaluation(p.root / "prune/before.csv");
    const CsvSummary after = read_evaluation(p.root / "prune/after.csv");
    const double precision_gain = (after.precision - before.precision) / before.precision;
    const double recall_loss = (before.recall - after.recall) / before.recall;
    report(5, "pruning direction", after.precision > before.precision && recall_loss < precision_gain,
           fmt("precision %.3f -> %.3f (%+.1f%%), ", before.precision, after.precision, 100.0 * precision_gain) +
               fmt("recall %.3f -> %.3f (%+.1f%%)", before.recall, after.recall, -100.0 * recall_loss));
}

// ---------------------------------------------------------------------------
// 6. Occlusion robustness

void criterion_occlusion(const Pipeline& p) {
    const auto ces_fp = static_cast<double>(read_evaluation(p.root / "pred/ces/evaluation.csv").false_positives);
    const auto km_fp = static_cast<double>(read_evaluation(p.root / "pred/kmeans/evaluation.csv").false_positives);
    report(6, "occlusion robustness", ces_fp <= 0.7 * km_fp,
           fmt("false positives ces %.0f vs k-means %.0f (ratio %.2f)", ces_fp, km_fp, km_fp > 0 ? ces_fp / km_fp : 0.0));
}

// ---------------------------------------------------------------------------
// 7. Oracle equivalences

void criterion_oracles() {
    Rng rng(7);
    std::size_t kts_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index T = 2 + static_cast<Eigen::Index>(rng.index(11));
        const Eigen::Index D = 1 + static_cast<Eigen::Index>(rng.index(3));
        Matrix frames(T, D);
        for (Eigen::Index t = 0; t < T; ++t) {
            frames.row(t) = rng.normal_vector(D).transpose();
        }
        baselines::KtsConfig cfg;
        cfg.kernel = rng.index(2) == 0 ? baselines::Kernel::linear : baselines::Kernel::rbf;
        cfg.max_segments = 1 + rng.index(static_cast<std::size_t>(T - 1));
        cfg.penalty_weight = rng.uniform(0.0, 2.0);
        const baselines::KtsResult r = baselines::kts_solve(frames, cfg);
        const Eigen::MatrixXd K = baselines::gram_matrix(frames, cfg);
        const std::vector<double> want = oracles::exhaustive_scatter(K, cfg.max_segments);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < want.size(); ++m) {
            best = std::min(best, want[m] + *cfg.penalty_weight * baselines::kts_penalty(m, static_cast<std::size_t>(T)));
        }
        const double got = oracles::total_scatter(K, r.boundaries) +
                           *cfg.penalty_weight * baselines::kts_penalty(r.boundaries.size(), static_cast<std::size_t>(T));
        bool ok = r.scatter.size() == want.size() && std::abs(got - best) <= 1e-9;
        for (std::size_t m = 0; ok && m < want.size(); ++m) {
            ok = std::abs(r.scatter[m] - want[m]) <= 1e-9;
        }
        kts_bad += ok ? 0 : 1;
    }

    std::size_t maxima_bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index T = 1 + static_cast<Eigen::Index>(rng.index(60));
        segmentation::BoundarySignal s;
        s.pred.resize(T);
        const std::size_t levels = 1 + rng.index(6);
        for (Eigen::Index t = 0; t < T; ++t) {
            s.pred[t] = static_cast<double>(rng.index(levels));
        }
        s.first = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(T)));
        s.last = s.first + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(T - s.first)));
        const std::size_t window = 3 + 2 * rng.index(4);
        maxima_bad += segmentation::local_maxima(s, window) == oracles::brute_force_maxima(s, window) ? 0 : 1;
    }

    std::size_t matcher_bad = 0;
    std::size_t worst_gap = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = oracles::random_indices(rng, 8, 88);
        const auto g = oracles::random_indices(rng, 8, 88);
        const std::size_t greedy = evaluation::match(d, g).true_positives();
        const std::size_t optimal = oracles::optimal_matches(d, g, evaluation::kDefaultTolerance);
        const std::size_t gap = optimal >= greedy ? optimal - greedy : 99;
        worst_gap = std::max(worst_gap, gap);
        matcher_bad += gap <= 1 ? 0 : 1;
    }
    report(7, "oracle equivalences", kts_bad == 0 && maxima_bad == 0 && matcher_bad == 0,
           fmt("mismatches: kts %.0f/1000, local maxima %.0f/1000, matcher beyond 1 of optimal %.0f/1000",
               static_cast<double>(kts_bad), static_cast<double>(maxima_bad), static_cast<double>(matcher_bad)) +
               fmt(" (largest gap %.0f)", static_cast<double>(worst_gap)));
}

// ---------------------------------------------------------------------------
// 8. Determinism

void criterion_determinism(const Pipeline& a, const Pipeline& b) {
    std::size_t files = 0;
    std::vector<std::string> differing;
    for (const auto& entry : fs::recursive_directory_iterator(a.root)) {
        if (!entry.is_regular_file() || entry.path().extension() == ".log") {
            continue;
        }
        const fs::path rel = fs::relative(entry.path(), a.root);
        ++files;
        if (!fs::exists(b.root / rel) || slurp(entry.path()) != slurp(b.root / rel)) {
            differing.push_back(rel.string());
        }
    }
    std::size_t files_b = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b.root)) {
        files_b += entry.is_regular_file() && entry.path().extension() != ".log" ? 1 : 0;
    }
    std::string detail = std::to_string(files) + " output files compared";
    if (!differing.empty()) {
        detail += "; first difference: " + differing.front();
    }
    if (files != files_b) {
        detail += "; file counts differ";
    }
    report(8, "determinism", differing.empty() && files == files_b && files > 0, detail);
}

// ---------------------------------------------------------------------------
// 9. Format round trips and corruption

// Runs `parse` on every truncation and on random byte flips. Typed errors are
// fine, anything else is a failure.
template <typename Parse>
std::size_t untyped_failures(const std::vector<char>& good, Parse parse, Rng& rng, std::size_t& typed) {
    std::size_t bad = 0;
    const auto attempt = [&](const std::vector<char>& bytes, bool must_throw) {
        try {
            parse(bytes);
            bad += must_throw ? 1 : 0;
        } catch (const Error&) {
            ++typed;
        } catch (...) {
            ++bad;
        }
    };
    for (std::size_t len = 0; len < good.size(); ++len) {
        attempt(std::vector<char>(good.begin(), good.begin() + static_cast<long>(len)), true);
    }
    std::vector<char> longer = good;
    longer.push_back('\0');
    attempt(longer, true);
    for (int k = 0; k < 300; ++k) {
        std::vector<char> flipped = good;
        flipped[rng.index(flipped.size())] ^= static_cast<char>(1 + rng.index(255));
        attempt(flipped, false);
    }
    return bad;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        m.row(r) = rng.normal_vector(cols, 2.0).transpose();
    }
    return m;
}

Matrix as_f32(const Matrix& m) {
    return m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

void criterion_formats(const fs::path& work) {
    Rng rng(9);
    fs::create_directories(work);
    std::size_t round_trip_bad = 0;
    std::size_t corruption_bad = 0;
    std::size_t typed = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix frames = random_matrix(rng, 1 + rng.index(30), 1 + rng.index(10));
        const std::string fpath = (work / "f.fseq").string();
        dataio::write_features(fpath, frames);
        round_trip_bad += dataio::read_features(fpath) == as_f32(frames) ? 0 : 1;
        corruption_bad += untyped_failures(
            dataio::serialize_features(frames), [](const std::vector<char>& b) { dataio::deserialize_features(b); },
            rng, typed);

        const vcp::VcpWeights w = vcp::deserialize(vcp::serialize(vcp::VcpWeights::initialize(
            1 + static_cast<Eigen::Index>(rng.index(5)), 1 + static_cast<Eigen::Index>(rng.index(5)), rng,
            rng.index(2) == 0)));
        const std::string wpath = (work / "w.vcpw").string();
        vcp::save_weights(w, wpath);
        const vcp::VcpWeights back = vcp::load_weights(wpath);
        round_trip_bad += back.encoder.W == w.encoder.W && back.decoder.W == w.decoder.W &&
                                  back.readout == w.readout && back.readout_bias == w.readout_bias &&
                                  back.conditional == w.conditional
                              ? 0
                              : 1;
        corruption_bad +=
            untyped_failures(vcp::serialize(w), [](const std::vector<char>& b) { vcp::deserialize(b); }, rng, typed);

        std::vector<std::size_t> boundaries;
        std::size_t v = 0;
        for (std::size_t k = rng.index(15); k > 0; --k) {
            v += 1 + rng.index(200);
            boundaries.push_back(v);
        }
        const std::string bpath = (work / "b.txt").string();
        dataio::write_boundaries(bpath, boundaries);
        round_trip_bad += dataio::read_boundaries(bpath) == boundaries ? 0 : 1;
        std::string text = dataio::format_boundaries(boundaries);
        std::vector<char> text_bytes(text.begin(), text.end());
        if (!text_bytes.empty()) {
            // Corrupted annotation text may still parse, so only untyped
            // failures count here.
            for (int k = 0; k < 100; ++k) {
                std::vector<char> flipped = text_bytes;
                flipped[rng.index(flipped.size())] ^= static_cast<char>(1 + rng.index(255));
                try {
                    dataio::parse_boundaries(std::string(flipped.begin(), flipped.end()));
                } catch (const Error&) {
                    ++typed;
                } catch (...) {
                    ++corruption_bad;
                }
            }
        }

        pruning::LinearSvm svm;
        for (std::size_t k = 0; k < pruning::kIndicatorCount; ++k) {
            svm.mean[k] = static_cast<float>(rng.normal());
            svm.stddev[k] = static_cast<float>(0.1 + rng.uniform());
            svm.weights[k] = static_cast<float>(rng.normal());
        }
        svm.bias = static_cast<float>(rng.normal());
        const std::string spath = (work / "m.csvm").string();
        pruning::save_svm(svm, spath);
        const pruning::LinearSvm sback = pruning::load_svm(spath);
        round_trip_bad += sback.mean == svm.mean && sback.stddev == svm.stddev && sback.weights == svm.weights &&
                                  sback.bias == svm.bias
                              ? 0
                              : 1;
        corruption_bad += untyped_failures(
            pruning::serialize(svm), [](const std::vector<char>& b) { pruning::deserialize_svm(b); }, rng, typed);
    }
    report(9, "format round trips", round_trip_bad == 0 && corruption_bad == 0,
           fmt("%.0f round-trip mismatches, %.0f untyped or silent corruption outcomes, %.0f typed errors raised",
               static_cast<double>(round_trip_bad), static_cast<double>(corruption_bad), static_cast<double>(typed)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance run"};
    std::string cli;
    std::string configs;
    std::string work = (fs::temp_directory_path() / "ces_acceptance").string();
    app.add_option("--cli", cli, "Path to the ces binary")->required();
    app.add_option("--configs", configs, "Directory holding scenario.json, train.json, segment.json")->required();
    app.add_option("--work", work, "Scratch directory");
    CLI11_PARSE(app, argc, argv);

    const fs::path work_dir = fs::absolute(work);
    const auto start = Clock::now();
    try {
        criterion_gradients();

        Pipeline first;
        first.cli = fs::absolute(cli).string();
        first.configs = fs::absolute(configs);
        first.root = work_dir / "run1";
        Pipeline second = first;
        second.root = work_dir / "run2";
        const bool ran_first = first.execute();
        if (ran_first) {
            criterion_learning(first);
            criterion_methods(first);
            criterion_pruning(first);
            criterion_occlusion(first);
        } else {
            for (auto [n, name] : std::vector<std::pair<int, std::string>>{
                     {2, "learning efficacy"}, {3, "method ordering"}, {4, "variant ordering"},
                     {5, "pruning direction"}, {6, "occlusion robustness"}}) {
                report(n, name, false, first.failure);
            }
        }
        criterion_oracles();
        if (ran_first && second.execute()) {
            criterion_determinism(first, second);
        } else {
            report(8, "determinism", false, ran_first ? second.failure : first.failure);
        }
        criterion_formats(work_dir / "formats");
    } catch (const std::exception& e) {
        std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
        return 1;
    }

    std::size_t passed = 0;
    for (const Verdict& v : verdicts) {
        passed += v.pass ? 1 : 0;
    }
    std::cout << passed << "/" << verdicts.size() << " criteria passed in " << fmt("%.0f s", seconds_since(start))
              << std::endl;
    return passed == verdicts.size() && verdicts.size() == 9 ? 0 : 1;
}
