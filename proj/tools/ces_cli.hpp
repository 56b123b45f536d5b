#pragma once

// Command-line front end. run() is the whole program minus process exit so
// that tests can drive it in-process.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ces/dataio.hpp"
#include "ces/errors.hpp"
#include "ces/evaluation.hpp"
#include "ces/methods.hpp"
#include "ces/parallel.hpp"
#include "ces/pruning.hpp"
#include "ces/training.hpp"
#include "ces/vcp.hpp"

namespace ces::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// --seed, else CES_SEED, else `fallback`.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) {
        return *flag;
    }
    if (const char* env = std::getenv("CES_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::string(env).size()) {
                return v;
            }
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("CES_SEED is not an unsigned integer: ") + env);
    }
    return fallback;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

/// Prints the resolved configuration and stores it next to the outputs.
inline void echo_config(std::ostream& out, const json& config, const fs::path& path) {
    const std::string text = config.dump(2) + "\n";
    out << "resolved config:\n" << text;
    write_text(path, text);
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create directory: " + dir.string());
    }
}

// ---------------------------------------------------------------------------
// Training configuration <-> JSON

inline json to_json(const training::TrainConfig& c) {
    json j{{"seen", c.seen},
           {"predict", c.predict},
           {"hidden", c.hidden},
           {"batch", c.batch},
           {"plateau_epochs", c.plateau_epochs},
           {"plateau_factor", c.plateau_factor},
           {"min_relative_improvement", c.min_relative_improvement},
           {"max_epochs", c.max_epochs},
           {"seed", c.seed},
           {"conditional", c.conditional},
           {"clip_norm", c.clip_norm},
           {"bidirectional", c.bidirectional}};
    j["learning_rate"] = c.learning_rate ? json(*c.learning_rate) : json(nullptr);
    return j;
}

inline training::TrainConfig train_config_from_json(const json& j, training::TrainConfig c = {}) {
    dataio::reject_unknown_keys(j,
                                {"seen", "predict", "hidden", "learning_rate", "batch", "plateau_epochs",
                                 "plateau_factor", "min_relative_improvement", "max_epochs", "seed", "conditional",
                                 "clip_norm", "bidirectional"},
                                "train config");
    try {
        const auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                field = j[key].get<std::remove_reference_t<decltype(field)>>();
            }
        };
        get("seen", c.seen);
        get("predict", c.predict);
        get("hidden", c.hidden);
        get("batch", c.batch);
        get("plateau_epochs", c.plateau_epochs);
        get("plateau_factor", c.plateau_factor);
        get("min_relative_improvement", c.min_relative_improvement);
        get("max_epochs", c.max_epochs);
        get("seed", c.seed);
        get("conditional", c.conditional);
        get("clip_norm", c.clip_norm);
        get("bidirectional", c.bidirectional);
        if (j.contains("learning_rate")) {
            if (j["learning_rate"].is_null()) {
                c.learning_rate.reset();
            } else {
                c.learning_rate = j["learning_rate"].get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json to_json(const MethodConfig& m) {
    json j{{"method", m.method},     {"window", m.window}, {"context", m.context},
           {"clusters", m.clusters}, {"seed", m.seed}};
    j["merge_threshold"] = m.merge_threshold ? json(*m.merge_threshold) : json(nullptr);
    j["kts"] = json{{"kernel", m.kts.kernel == baselines::Kernel::linear ? "linear" : "rbf"},
                    {"gamma", m.kts.gamma},
                    {"max_segments", m.kts.max_segments}};
    j["kts"]["penalty_weight"] = m.kts.penalty_weight ? json(*m.kts.penalty_weight) : json(nullptr);
    return j;
}

inline MethodConfig method_config_from_json(const json& j, MethodConfig m = {}) {
    dataio::reject_unknown_keys(j, {"method", "window", "context", "clusters", "seed", "merge_threshold", "kts"},
                                "segment config");
    try {
        if (j.contains("method")) {
            m.method = j["method"].get<std::string>();
        }
        if (j.contains("window")) {
            m.window = j["window"].get<std::size_t>();
        }
        if (j.contains("context")) {
            m.context = j["context"].get<std::size_t>();
        }
        if (j.contains("clusters")) {
            m.clusters = j["clusters"].get<std::size_t>();
        }
        if (j.contains("seed")) {
            m.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("merge_threshold") && !j["merge_threshold"].is_null()) {
            m.merge_threshold = j["merge_threshold"].get<double>();
        }
        if (j.contains("kts")) {
            const json& k = j["kts"];
            dataio::reject_unknown_keys(k, {"kernel", "gamma", "max_segments", "penalty_weight"}, "kts config");
            if (k.contains("kernel")) {
                const auto kernel = k["kernel"].get<std::string>();
                if (kernel != "linear" && kernel != "rbf") {
                    throw ConfigError("kts config: kernel must be linear or rbf");
                }
                m.kts.kernel = kernel == "linear" ? baselines::Kernel::linear : baselines::Kernel::rbf;
            }
            if (k.contains("gamma")) {
                m.kts.gamma = k["gamma"].get<double>();
            }
            if (k.contains("max_segments")) {
                m.kts.max_segments = k["max_segments"].get<std::size_t>();
            }
            if (k.contains("penalty_weight") && !k["penalty_weight"].is_null()) {
                m.kts.penalty_weight = k["penalty_weight"].get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("segment config: ") + e.what());
    }
    m.kts.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Helpers over manifests

inline std::vector<const dataio::ManifestEntry*> select(const dataio::Manifest& m, const std::string& split) {
    if (split.empty()) {
        std::vector<const dataio::ManifestEntry*> all;
        for (const auto& e : m.lifelogs) {
            all.push_back(&e);
        }
        return all;
    }
    return m.with_split(split);
}

inline std::vector<Matrix> load_frames(const std::vector<const dataio::ManifestEntry*>& entries) {
    std::vector<Matrix> out;
    for (const auto* e : entries) {
        out.push_back(dataio::read_features(e->features));
    }
    return out;
}

inline fs::path prediction_path(const fs::path& dir, const std::string& id) { return dir / (id + ".txt"); }

/// "train=16,val=4,test=20" -> ordered (tag, count) pairs.
inline std::vector<std::pair<std::string, std::size_t>> parse_splits(const std::string& spec) {
    std::vector<std::pair<std::string, std::size_t>> out;
    std::stringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("--splits: expected tag=count, got \"" + item + "\"");
        }
        const std::string count = item.substr(eq + 1);
        if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos) {
            throw ConfigError("--splits: bad count in \"" + item + "\"");
        }
        out.emplace_back(item.substr(0, eq), std::stoull(count));
    }
    if (out.empty()) {
        throw ConfigError("--splits: empty specification");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

struct SynthArgs {
    std::string scenario;
    std::string out_dir;
    std::size_t count = 1;
    std::string split = "test";
    std::string splits;
    std::optional<std::uint64_t> seed;
    std::string prefix = "lifelog";
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
    dataio::SynthScenario scenario;
    if (!a.scenario.empty()) {
        scenario = dataio::scenario_from_json(dataio::parse_json_file(a.scenario));
    }
    scenario.seed = resolve_seed(a.seed, scenario.seed);
    std::vector<std::pair<std::string, std::size_t>> plan =
        a.splits.empty() ? std::vector<std::pair<std::string, std::size_t>>{{a.split, a.count}} : parse_splits(a.splits);

    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    json resolved{{"scenario", dataio::scenario_to_json(scenario)}, {"splits", json::array()}};
    dataio::Manifest manifest;
    std::uint64_t index = 0;
    for (const auto& [tag, count] : plan) {
        resolved["splits"].push_back(json{{"split", tag}, {"count", count}});
        for (std::size_t k = 0; k < count; ++k, ++index) {
            std::ostringstream id;
            id << a.prefix << '_' << std::setw(3) << std::setfill('0') << index;
            dataio::SynthScenario s = scenario;
            s.seed = derive_seed(scenario.seed, index);
            const dataio::SynthLifelog life = dataio::synth(s, id.str());
            const std::string features = id.str() + ".fseq";
            const std::string color = id.str() + ".color.fseq";
            const std::string truth = id.str() + ".gt.txt";
            dataio::write_features((dir / features).string(), life.sequence.frames);
            dataio::write_features((dir / color).string(), *life.sequence.color);
            dataio::write_boundaries((dir / truth).string(), life.boundaries);
            manifest.lifelogs.push_back({id.str(), features, color, truth, tag});
        }
    }
    dataio::save_manifest((dir / "manifest.json").string(), manifest);
    echo_config(out, resolved, dir / "synth.config.json");
    out << "wrote " << manifest.lifelogs.size() << " lifelogs to " << (dir / "manifest.json").string() << '\n';
    return kExitOk;
}

struct TrainArgs {
    std::string manifest;
    std::string config;
    std::string out;
    bool resume = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<Eigen::Index> hidden;
    std::optional<double> learning_rate;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
    training::TrainConfig cfg;
    if (!a.config.empty()) {
        cfg = train_config_from_json(dataio::parse_json_file(a.config));
    }
    cfg.seed = resolve_seed(a.seed, cfg.seed);
    if (a.epochs) {
        cfg.max_epochs = *a.epochs;
    }
    if (a.hidden) {
        cfg.hidden = *a.hidden;
    }
    if (a.learning_rate) {
        cfg.learning_rate = *a.learning_rate;
    }
    cfg.validate();

    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    const auto train_entries = manifest.with_split("train");
    const auto val_entries = manifest.with_split("val");
    if (train_entries.empty()) {
        throw ConfigError("manifest has no lifelogs tagged \"train\"");
    }
    if (val_entries.empty()) {
        throw ConfigError("manifest has no lifelogs tagged \"val\"");
    }
    const std::vector<Matrix> train_set = load_frames(train_entries);
    const std::vector<Matrix> val_set = load_frames(val_entries);

    const std::string history_path = a.out + ".history.csv";
    std::optional<training::ResumeState> resume;
    if (a.resume) {
        if (!fs::exists(a.out)) {
            throw IoError("--resume: no weights at " + a.out);
        }
        training::ResumeState r;
        r.weights = vcp::load_weights(a.out);
        if (fs::exists(history_path)) {
            const auto history = training::read_history_csv(history_path);
            if (!history.empty()) {
                r.learning_rate = history.back().learning_rate;
                r.last_epoch = history.back().epoch;
            }
        }
        cfg.hidden = r.weights.hidden();
        cfg.conditional = r.weights.conditional;
        resume = std::move(r);
    }

    json resolved = to_json(cfg);
    resolved["manifest"] = a.manifest;
    resolved["resume"] = a.resume;
    echo_config(out, resolved, a.out + ".config.json");

    const training::TrainResult result = training::train(train_set, val_set, cfg, resume ? &*resume : nullptr);
    vcp::save_weights(result.weights, a.out);
    training::write_history_csv(history_path, result.history, a.resume && fs::exists(history_path));
    out << std::setprecision(6) << "initial val loss " << result.initial_val_loss << ", best val loss "
        << result.best_val_loss << " after " << result.history.size() << " epochs\n";
    return kExitOk;
}

struct SegmentArgs {
    std::string method;
    std::string weights;
    std::string manifest;
    std::string out_dir;
    std::string config;
    std::string split;
    bool dump_signal = false;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
};

inline int cmd_segment(const SegmentArgs& a, std::ostream& out) {
    MethodConfig mc;
    if (!a.config.empty()) {
        mc = method_config_from_json(dataio::parse_json_file(a.config));
    }
    if (!a.method.empty()) {
        mc.method = a.method;
    }
    validate_method(mc.method);
    mc.seed = resolve_seed(a.seed, mc.seed);
    std::optional<vcp::VcpWeights> weights;
    if (mc.needs_weights()) {
        if (a.weights.empty()) {
            throw ConfigError("method " + mc.method + " requires --weights");
        }
        weights = vcp::load_weights(a.weights);
    }
    if (a.dump_signal && !(mc.method.rfind("ces", 0) == 0)) {
        throw ConfigError("--dump-signal is only available for the ces methods");
    }

    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    const auto entries = select(manifest, a.split);
    if (entries.empty()) {
        throw ConfigError("no lifelogs selected from the manifest");
    }
    const fs::path dir(a.out_dir);
    ensure_dir(dir);
    json resolved = to_json(mc);
    resolved["weights"] = a.weights;
    resolved["manifest"] = a.manifest;
    resolved["split"] = a.split;
    echo_config(out, resolved, dir / "segment.config.json");

    std::vector<segmentation::Segmentation> results(entries.size());
    parallel_for(entries.size(), a.jobs, [&](std::size_t i) {
        const dataio::FeatureSequence seq = dataio::load_sequence(*entries[i]);
        results[i] = run_method(seq, mc, weights ? &*weights : nullptr);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        dataio::write_boundaries(prediction_path(dir, entries[i]->id).string(), results[i].boundaries);
        if (a.dump_signal && results[i].signal) {
            const segmentation::BoundarySignal& s = *results[i].signal;
            std::ostringstream csv;
            csv << "t,pred\n" << std::setprecision(9);
            for (Eigen::Index t = s.first; t <= s.last; ++t) {
                csv << t << ',' << s.pred[t] << '\n';
            }
            write_text(dir / (entries[i]->id + ".signal.csv"), csv.str());
        }
        out << entries[i]->id << ": " << results[i].boundaries.size() << " boundaries\n";
    }
    return kExitOk;
}

struct EvaluateArgs {
    std::string pred_dir;
    std::string manifest;
    std::size_t tolerance = evaluation::kDefaultTolerance;
    std::string out;
    std::string split;
};

inline evaluation::EvalReport evaluate_predictions(const dataio::Manifest& manifest, const fs::path& pred_dir,
                                                   std::size_t tolerance, const std::string& split = "") {
    std::vector<std::pair<std::string, evaluation::MatchResult>> results;
    std::vector<std::string> missing;
    for (const auto* e : select(manifest, split)) {
        if (!e->ground_truth) {
            continue;
        }
        const fs::path pred = prediction_path(pred_dir, e->id);
        if (!fs::exists(pred)) {
            missing.push_back(e->id);
            continue;
        }
        const auto detected = dataio::read_boundaries(pred.string());
        const auto truth = dataio::read_boundaries(*e->ground_truth);
        results.emplace_back(e->id, evaluation::match(detected, truth, tolerance));
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) {
            ids += (ids.empty() ? "" : ", ") + id;
        }
        throw IoError("missing predictions for: " + ids);
    }
    if (results.empty()) {
        throw ConfigError("no manifest entry has ground truth to evaluate against");
    }
    return evaluation::report(results);
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    const evaluation::EvalReport rep = evaluate_predictions(manifest, a.pred_dir, a.tolerance, a.split);
    const fs::path csv_path = a.out.empty() ? fs::path(a.pred_dir) / "evaluation.csv" : fs::path(a.out);
    std::ostringstream csv;
    evaluation::write_csv(csv, rep);
    write_text(csv_path, csv.str());
    out << "tolerance " << a.tolerance << " frames\n" << evaluation::format_table(rep);
    return kExitOk;
}

struct PruneTrainArgs {
    std::string manifest;
    std::string pred_dir;
    std::string out;
    std::string split = "train";
    std::size_t tolerance = evaluation::kDefaultTolerance;
    double lambda = 1e-3;
    int epochs = 200;
    std::optional<std::uint64_t> seed;
};

/// Candidates from `pred_dir` labeled by tolerance matching against ground truth.
inline std::vector<pruning::LabeledIndicators> labeled_candidates(const dataio::Manifest& manifest,
                                                                  const fs::path& pred_dir, const std::string& split,
                                                                  std::size_t tolerance) {
    std::vector<pruning::LabeledIndicators> samples;
    for (const auto* e : select(manifest, split)) {
        if (!e->ground_truth) {
            throw ConfigError(e->id + ": labeled candidates need ground truth");
        }
        const Matrix frames = dataio::read_features(e->features);
        const auto detected = dataio::read_boundaries(prediction_path(pred_dir, e->id).string());
        const auto truth = dataio::read_boundaries(*e->ground_truth);
        const evaluation::MatchResult m = evaluation::match(detected, truth, tolerance);
        std::vector<bool> positive(detected.size(), false);
        for (const auto& [d, g] : m.pairs) {
            positive[static_cast<std::size_t>(std::lower_bound(detected.begin(), detected.end(), d) - detected.begin())] = true;
        }
        for (std::size_t i = 0; i < detected.size(); ++i) {
            try {
                samples.push_back({pruning::indicators(frames, detected[i]), positive[i]});
            } catch (const ShapeError&) {
                // too close to an edge for indicators
            }
        }
    }
    return samples;
}

inline int cmd_prune_train(const PruneTrainArgs& a, std::ostream& out) {
    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    pruning::SvmTrainConfig cfg{a.lambda, a.epochs, resolve_seed(a.seed, 0), true};
    json resolved{{"manifest", a.manifest}, {"pred_dir", a.pred_dir}, {"split", a.split}, {"tolerance", a.tolerance},
                  {"lambda", cfg.lambda},   {"epochs", cfg.epochs},   {"seed", cfg.seed}};
    const auto samples = labeled_candidates(manifest, a.pred_dir, a.split, a.tolerance);
    const pruning::SvmTrainResult r = pruning::svm_train(samples, cfg);
    echo_config(out, resolved, a.out + ".config.json");
    pruning::save_svm(r.model, a.out);
    out << "trained on " << samples.size() << " candidates, training accuracy " << std::fixed
        << std::setprecision(6) << r.training_accuracy << '\n';
    return kExitOk;
}

struct PruneApplyArgs {
    std::string model;
    std::string manifest;
    std::string pred_dir;
    std::string out_dir;
    std::string split;
};

inline int cmd_prune_apply(const PruneApplyArgs& a, std::ostream& out) {
    const pruning::LinearSvm model = pruning::load_svm(a.model);
    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    const fs::path dest = a.out_dir.empty() ? fs::path(a.pred_dir) : fs::path(a.out_dir);
    ensure_dir(dest);
    for (const auto* e : select(manifest, a.split)) {
        const Matrix frames = dataio::read_features(e->features);
        segmentation::Segmentation seg;
        seg.boundaries = dataio::read_boundaries(prediction_path(a.pred_dir, e->id).string());
        const segmentation::Segmentation pruned = pruning::prune(seg, frames, model);
        dataio::write_boundaries(prediction_path(dest, e->id).string(), pruned.boundaries);
        out << e->id << ": kept " << pruned.boundaries.size() << " of " << seg.boundaries.size() << '\n';
    }
    return kExitOk;
}

struct GridArgs {
    std::string manifest;
    std::string space;
    std::string config;
    std::string out;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
};

inline training::GridSpace grid_space_from_json(const json& j) {
    dataio::reject_unknown_keys(j, {"hidden", "horizon", "learning_rate", "conditional", "max_epochs"}, "grid space");
    training::GridSpace s;
    try {
        s.hidden = j.value("hidden", std::vector<Eigen::Index>{});
        s.horizon = j.value("horizon", std::vector<std::size_t>{});
        s.learning_rate = j.value("learning_rate", std::vector<double>{});
        s.conditional = j.value("conditional", std::vector<bool>{true});
        s.max_epochs = j.value("max_epochs", s.max_epochs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grid space: ") + e.what());
    }
    if (s.size() == 0) {
        throw ConfigError("grid space: empty search space");
    }
    return s;
}

inline void write_grid_csv(std::ostream& out, const std::vector<training::GridEntry>& entries) {
    out << "rank,hidden,horizon,learning_rate,conditional,epochs_run,best_val_loss\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        out << i + 1 << ',' << e.config.hidden << ',' << e.config.seen << ',' << std::setprecision(9)
            << *e.config.learning_rate << ',' << (e.config.conditional ? 1 : 0) << ',' << e.epochs_run << ','
            << e.best_val_loss << '\n';
    }
}

inline int cmd_gridsearch(const GridArgs& a, std::ostream& out) {
    training::TrainConfig base;
    if (!a.config.empty()) {
        base = train_config_from_json(dataio::parse_json_file(a.config));
    }
    base.seed = resolve_seed(a.seed, base.seed);
    const training::GridSpace space = grid_space_from_json(dataio::parse_json_file(a.space));
    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    const auto train_entries = manifest.with_split("train");
    const auto val_entries = manifest.with_split("val");
    if (train_entries.empty() || val_entries.empty()) {
        throw ConfigError("manifest needs lifelogs tagged \"train\" and \"val\"");
    }
    const auto entries =
        training::gridsearch(load_frames(train_entries), load_frames(val_entries), space, base, a.jobs);
    std::ostringstream csv;
    write_grid_csv(csv, entries);
    if (a.out.empty()) {
        out << csv.str();
    } else {
        write_text(a.out, csv.str());
        out << "ranked " << entries.size() << " configurations into " << a.out << '\n';
    }
    return kExitOk;
}

struct KtsCalibrateArgs {
    std::string manifest;
    std::string config;
    std::string out;
    std::string split = "train";
    std::size_t tolerance = evaluation::kDefaultTolerance;
    double lo = 0.01;
    double hi = 100.0;
    std::size_t steps = 97;
};

/// Writes a segment config whose KTS penalty weight maximizes mean F1 on the
/// labeled lifelogs of one split.
inline int cmd_kts_calibrate(const KtsCalibrateArgs& a, std::ostream& out) {
    MethodConfig mc;
    if (!a.config.empty()) {
        mc = method_config_from_json(dataio::parse_json_file(a.config));
    }
    mc.method = "kts";
    const std::vector<double> grid = geometric_grid(a.lo, a.hi, a.steps);
    const dataio::Manifest manifest = dataio::load_manifest(a.manifest);
    std::vector<Matrix> frames;
    std::vector<std::vector<std::size_t>> truth;
    for (const auto* e : select(manifest, a.split)) {
        if (!e->ground_truth) {
            throw ConfigError(e->id + ": calibration needs ground truth");
        }
        frames.push_back(dataio::read_features(e->features));
        truth.push_back(dataio::read_boundaries(*e->ground_truth));
    }
    if (frames.empty()) {
        throw ConfigError("no lifelogs selected from the manifest");
    }
    const KtsCalibration cal = calibrate_kts(frames, truth, mc.kts, grid, a.tolerance);
    mc.kts.penalty_weight = cal.penalty_weight;
    write_text(a.out, to_json(mc).dump(2) + "\n");
    out << "C,mean_f1\n" << std::setprecision(9);
    for (const auto& [c, f1] : cal.scan) {
        out << c << ',' << f1 << '\n';
    }
    out << "chose C = " << cal.penalty_weight << " (mean F1 " << cal.f1 << " on " << frames.size()
        << " lifelogs), wrote " << a.out << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Event segmentation of lifelog feature sequences"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate synthetic lifelogs and a manifest");
    s->add_option("--scenario", synth.scenario, "Scenario JSON file");
    s->add_option("--out-dir", synth.out_dir, "Output directory")->required();
    s->add_option("--count", synth.count, "Number of lifelogs");
    s->add_option("--split", synth.split, "Split tag for --count lifelogs");
    s->add_option("--splits", synth.splits, "Per-split counts, e.g. train=16,val=4,test=20");
    s->add_option("--seed", synth.seed, "Base seed (default: CES_SEED, then the scenario seed)");
    s->add_option("--prefix", synth.prefix, "Lifelog id prefix");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the context predictor");
    t->add_option("--manifest", train.manifest)->required();
    t->add_option("--config", train.config, "Training config JSON");
    t->add_option("--out", train.out, "Weight file to write")->required();
    t->add_flag("--resume", train.resume, "Continue from the weights at --out");
    t->add_option("--seed", train.seed);
    t->add_option("--epochs", train.epochs);
    t->add_option("--hidden", train.hidden);
    t->add_option("--lr", train.learning_rate);

    SegmentArgs seg;
    auto* g = app.add_subcommand("segment", "Detect event boundaries");
    g->add_option("--method", seg.method)->check(CLI::IsMember(std::vector<std::string>(kMethodNames.begin(), kMethodNames.end())));
    g->add_option("--weights", seg.weights, "Weight file (ces, ces-error)");
    g->add_option("--manifest", seg.manifest)->required();
    g->add_option("--out-dir", seg.out_dir)->required();
    g->add_option("--config", seg.config, "Method config JSON");
    g->add_option("--split", seg.split, "Only lifelogs with this split tag");
    g->add_flag("--dump-signal", seg.dump_signal, "Write <id>.signal.csv");
    g->add_option("--jobs", seg.jobs)->check(CLI::PositiveNumber);
    g->add_option("--seed", seg.seed);

    EvaluateArgs ev;
    auto* e = app.add_subcommand("evaluate", "Score predictions against ground truth");
    e->add_option("--pred-dir", ev.pred_dir)->required();
    e->add_option("--manifest", ev.manifest)->required();
    e->add_option("--tolerance", ev.tolerance);
    e->add_option("--out", ev.out, "CSV path (default <pred-dir>/evaluation.csv)");
    e->add_option("--split", ev.split);

    PruneTrainArgs pt;
    auto* p = app.add_subcommand("prune-train", "Train the boundary pruning classifier");
    p->add_option("--manifest", pt.manifest)->required();
    p->add_option("--pred-dir", pt.pred_dir, "Candidate boundaries")->required();
    p->add_option("--out", pt.out)->required();
    p->add_option("--split", pt.split);
    p->add_option("--tolerance", pt.tolerance);
    p->add_option("--lambda", pt.lambda);
    p->add_option("--epochs", pt.epochs);
    p->add_option("--seed", pt.seed);

    PruneApplyArgs pa;
    auto* q = app.add_subcommand("prune-apply", "Drop boundaries rejected by the classifier");
    q->add_option("--model", pa.model)->required();
    q->add_option("--manifest", pa.manifest)->required();
    q->add_option("--pred-dir", pa.pred_dir)->required();
    q->add_option("--out-dir", pa.out_dir, "Default: rewrite files in --pred-dir");
    q->add_option("--split", pa.split);

    GridArgs grid;
    auto* r = app.add_subcommand("gridsearch", "Rank training configurations by validation loss");
    r->add_option("--manifest", grid.manifest)->required();
    r->add_option("--space", grid.space)->required();
    r->add_option("--config", grid.config, "Base training config JSON");
    r->add_option("--out", grid.out, "CSV path (default stdout)");
    r->add_option("--jobs", grid.jobs)->check(CLI::PositiveNumber);
    r->add_option("--seed", grid.seed);

    KtsCalibrateArgs kc;
    auto* k = app.add_subcommand("kts-calibrate", "Choose the KTS penalty weight on labeled lifelogs");
    k->add_option("--manifest", kc.manifest)->required();
    k->add_option("--config", kc.config, "Base segment config JSON");
    k->add_option("--out", kc.out, "Segment config to write")->required();
    k->add_option("--split", kc.split);
    k->add_option("--tolerance", kc.tolerance);
    k->add_option("--min", kc.lo, "Smallest penalty weight tried");
    k->add_option("--max", kc.hi, "Largest penalty weight tried");
    k->add_option("--steps", kc.steps, "Number of geometrically spaced weights");

    std::vector<const char*> argv{"ces"};
    for (const auto& arg : args) {
        argv.push_back(arg.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& ex) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    }

    try {
        if (s->parsed()) {
            return cmd_synth(synth, out);
        }
        if (t->parsed()) {
            return cmd_train(train, out);
        }
        if (g->parsed()) {
            return cmd_segment(seg, out);
        }
        if (e->parsed()) {
            return cmd_evaluate(ev, out);
        }
        if (p->parsed()) {
            return cmd_prune_train(pt, out);
        }
        if (q->parsed()) {
            return cmd_prune_apply(pa, out);
        }
        if (k->parsed()) {
            return cmd_kts_calibrate(kc, out);
        }
        return cmd_gridsearch(grid, out);
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace ces::cli
