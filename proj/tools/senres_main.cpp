#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "senres/augment.hpp"
#include "senres/checkpoint.hpp"
#include "senres/contrastive.hpp"
#include "senres/dataset.hpp"
#include "senres/eval.hpp"
#include "senres/manifest.hpp"
#include "senres/stats.hpp"

namespace {

using nlohmann::json;
using namespace senres;

json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    return j;
}

void print_window_summary(const WindowSet& ws) {
    std::cout << "windows: " << ws.size() << "\n";
    std::vector<size_t> counts = ws.per_class_counts();
    size_t unlabeled = 0;
    for (const auto& w : ws.windows)
        if (w.label == kNoLabel) ++unlabeled;
    for (size_t c = 0; c < counts.size(); ++c)
        std::cout << "  " << ws.class_names[c] << ": " << counts[c] << "\n";
    if (unlabeled > 0) std::cout << "  (unlabeled): " << unlabeled << "\n";
}

std::string fraction_label(double f) {
    std::ostringstream os;
    os << f * 100.0 << "%";
    return os.str();
}

// --- ingest -----------------------------------------------------------------

struct IngestArgs {
    std::string dataset;
    std::string in_dir;
    std::string out_file;
    std::string schema_file;
    int64_t window_len = 128;
    double overlap = 0.5;
    int classes = 3;
    int per_class = 600;
    int64_t timesteps = 128;
    int64_t channels = 6;
    double noise = 0.1;
    uint64_t seed = 0;
};

int cmd_ingest(const IngestArgs& a) {
    WindowSet ws;
    if (a.dataset == "ucihar") {
        if (a.in_dir.empty()) throw ConfigError("ingest: --in is required for --dataset ucihar");
        ws = load_ucihar(a.in_dir);
    } else if (a.dataset == "csv") {
        if (a.in_dir.empty()) throw ConfigError("ingest: --in is required for --dataset csv");
        if (a.schema_file.empty())
            throw ConfigError("ingest: --schema is required for --dataset csv");
        CsvSchema schema = CsvSchema::from_json(load_json_file(a.schema_file));
        std::vector<Recording> recs = load_csv_recordings(a.in_dir, schema);
        ws = segment_all(recs, a.window_len, a.overlap, schema.class_names, "csv");
    } else {  // synthetic
        SyntheticConfig sc;
        sc.num_classes = a.classes;
        sc.per_class = a.per_class;
        sc.timesteps = a.timesteps;
        sc.channels = a.channels;
        sc.noise_amplitude = a.noise;
        sc.seed = a.seed;
        ws = make_synthetic(sc);
    }
    write_swnd(ws, a.out_file);
    print_window_summary(ws);
    std::cout << "wrote " << a.out_file << "\n";
    return 0;
}

// --- augment ----------------------------------------------------------------

struct AugmentArgs {
    std::string in_file, out_file, config_file, kind;
    double amplitude = 0.1;
    double lo = 0.0, hi = 0.0;
    int M = 1, N = 0;
    std::string interpolation = "linear", mode = "A", draw_policy = "fixed";
    int times = 0;
    uint64_t seed = 0;
    int workers = 0;
    bool has_amplitude = false, has_lo = false, has_hi = false;
};

AugmentSpec spec_from_args(const AugmentArgs& a) {
    if (!a.config_file.empty()) return AugmentSpec::from_json(load_json_file(a.config_file));
    if (a.kind.empty()) throw ConfigError("augment: give either --config or --kind");
    AugmentSpec s = AugmentSpec::make(aug_kind_from_string(a.kind));
    if (a.has_amplitude) s.noise_amplitude = a.amplitude;
    if (a.has_lo) s.range_lo = a.lo;
    if (a.has_hi) s.range_hi = a.hi;
    s.resample.M = a.M;
    s.resample.N = a.N;
    s.resample.interpolation = interp_from_string(a.interpolation);
    s.resample.mode = block_mode_from_string(a.mode);
    s.resample.draw_policy = draw_policy_from_string(a.draw_policy);
    s.validate();
    return s;
}

int cmd_augment(const AugmentArgs& a) {
    AugmentSpec spec = spec_from_args(a);
    WindowSet ws = read_swnd(a.in_file);
    if (a.times == 0) {
        // in-place transform, one window out per window in
        int w = a.workers > 0 ? a.workers : default_workers();
        std::vector<Window> out(ws.windows.size());
        parallel_for(static_cast<int64_t>(ws.windows.size()), w, [&](int64_t i) {
            Rng rng = Rng::stream(a.seed, (1ull << 40) ^ static_cast<uint64_t>(i));
            out[static_cast<size_t>(i)] = apply(spec, ws.windows[static_cast<size_t>(i)], rng);
        });
        ws.windows = std::move(out);
    } else {
        ws = expand_with_augment(ws, spec, a.times, a.seed, a.workers);
    }
    write_swnd(ws, a.out_file);
    std::cout << "windows: " << ws.size() << "\n";
    std::cout << "wrote " << a.out_file << "\n";
    return 0;
}

// --- pretrain ---------------------------------------------------------------

struct PretrainArgs {
    std::string in_file, out_file, manifest_file, config_file;
    std::string framework, profile = "desk";
    std::string branch1_file, branch2_file;
    int64_t epochs = -1, batch = -1, queue = -1;
    double tau = -1.0, lr = -1.0, momentum = -1.0;
    uint64_t seed = 0;
    int workers = 0;
    bool standardize = false;
};

PretrainConfig merge_pretrain_json(PretrainConfig base, const json& j) {
    for (const auto& [key, val] : j.items()) {
        if (key == "framework") base.framework = framework_from_string(val.get<std::string>());
        else if (key == "tau") base.tau = val.get<double>();
        else if (key == "batch") base.batch = val.get<int64_t>();
        else if (key == "epochs") base.epochs = val.get<int64_t>();
        else if (key == "lr") base.lr = val.get<double>();
        else if (key == "queue_capacity") base.queue_capacity = val.get<int64_t>();
        else if (key == "momentum") base.momentum = val.get<double>();
        else if (key == "seed") base.seed = val.get<uint64_t>();
        else if (key == "branch1") base.branch1 = AugmentSpec::from_json(val);
        else if (key == "branch2") base.branch2 = AugmentSpec::from_json(val);
        else if (key == "encoder") base.encoder = EncoderConfig::from_json(val);
        else if (key == "projection") base.projection = ProjectionConfig::from_json(val);
        else if (key == "standardize") base.standardize = val.get<bool>();
        else throw ConfigError("pretrain config: unknown key '" + key + "'");
    }
    return base;
}

PretrainConfig resolve_pretrain_config(const PretrainArgs& a) {
    json cfg_json = a.config_file.empty() ? json::object() : load_json_file(a.config_file);
    Framework fw = Framework::simclr;
    if (cfg_json.contains("framework"))
        fw = framework_from_string(cfg_json["framework"].get<std::string>());
    if (!a.framework.empty()) fw = framework_from_string(a.framework);

    PretrainConfig base;
    if (a.profile == "desk")
        base = fw == Framework::simclr ? PretrainConfig::simclr_desk()
                                       : PretrainConfig::moco_desk();
    else if (a.profile == "paper")
        base = fw == Framework::simclr ? PretrainConfig::simclr_paper()
                                       : PretrainConfig::moco_paper();
    else
        throw ConfigError("pretrain: unknown profile '" + a.profile + "'");

    base = merge_pretrain_json(base, cfg_json);
    base.framework = fw;
    if (!a.branch1_file.empty()) base.branch1 = AugmentSpec::from_json(load_json_file(a.branch1_file));
    if (!a.branch2_file.empty()) base.branch2 = AugmentSpec::from_json(load_json_file(a.branch2_file));
    if (a.epochs >= 0) base.epochs = a.epochs;
    if (a.batch >= 0) base.batch = a.batch;
    if (a.queue >= 0) base.queue_capacity = a.queue;
    if (a.tau >= 0.0) base.tau = a.tau;
    if (a.lr >= 0.0) base.lr = a.lr;
    if (a.momentum >= 0.0) base.momentum = a.momentum;
    base.seed = a.seed;
    base.workers = a.workers;
    if (a.standardize) base.standardize = true;
    return base;
}

int cmd_pretrain(const PretrainArgs& a) {
    PretrainConfig cfg = resolve_pretrain_config(a);
    WindowSet ws = read_swnd(a.in_file);
    PretrainResult<float> res = pretrain<float>(ws, cfg);
    write_sprm(res.encoder_params, a.out_file);
    res.manifest.artifact_hashes["input"] = hash_file(a.in_file);
    res.manifest.artifact_hashes["checkpoint"] = hash_file(a.out_file);
    std::string man_path =
        a.manifest_file.empty() ? a.out_file + ".manifest.json" : a.manifest_file;
    res.manifest.save(man_path);
    std::cout << "framework: " << to_string(cfg.framework) << "\n";
    std::cout << "epochs: " << res.manifest.epoch_losses.size() << "\n";
    if (!res.manifest.epoch_losses.empty())
        std::cout << "final loss: " << res.manifest.epoch_losses.back() << "\n";
    std::cout << "wall seconds: " << res.manifest.wall_seconds << "\n";
    std::cout << "wrote " << a.out_file << "\n";
    std::cout << "wrote " << man_path << "\n";
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string in_file, checkpoint_file, manifest_file, config_file;
    std::string protocol = "supervised", profile = "desk", method;
    std::string augment_file;
    double label_fraction = 0.6;
    int repeats = 10;
    int64_t epochs = -1, batch = -1;
    double lr = -1.0;
    int times = 0;
    uint64_t seed = 0;
    int workers = 0;
    bool no_stratify = false;
    bool standardize = false;
};

EvalConfig merge_eval_json(EvalConfig base, const json& j) {
    for (const auto& [key, val] : j.items()) {
        if (key == "protocol") base.protocol = protocol_from_string(val.get<std::string>());
        else if (key == "label_fraction") base.label_fraction = val.get<double>();
        else if (key == "batch") base.batch = val.get<int64_t>();
        else if (key == "epochs") base.epochs = val.get<int64_t>();
        else if (key == "lr") base.lr = val.get<double>();
        else if (key == "augment_times") base.augment_times = val.get<int>();
        else if (key == "repetitions") base.repetitions = val.get<int>();
        else if (key == "seed") base.seed = val.get<uint64_t>();
        else if (key == "stratified") base.stratified = val.get<bool>();
        else if (key == "standardize") base.standardize = val.get<bool>();
        else if (key == "encoder") base.encoder = EncoderConfig::from_json(val);
        else throw ConfigError("eval config: unknown key '" + key + "'");
    }
    return base;
}

// A checkpoint trained under a different encoder shape would silently
// misbehave; require exact name/shape agreement with the selected profile.
template <typename T>
void require_checkpoint_match(const ParamMap<T>& cp, const EncoderConfig& cfg,
                              int64_t channels) {
    Rng rng(0);
    ParamMap<T> ref = init_encoder_params<T>(cfg, channels, rng);
    if (cp.size() != ref.size())
        throw FormatError("checkpoint does not match the encoder profile: expected " +
                          std::to_string(ref.size()) + " parameters, found " +
                          std::to_string(cp.size()));
    for (const auto& [name, t] : ref) {
        auto it = cp.find(name);
        if (it == cp.end())
            throw FormatError("checkpoint does not match the encoder profile: missing '" +
                              name + "'");
        if (it->second.shape != t.shape)
            throw FormatError("checkpoint does not match the encoder profile: shape of '" +
                              name + "' is " + shape_str(it->second.shape) + ", expected " +
                              shape_str(t.shape));
    }
}

int cmd_eval(const EvalArgs& a) {
    EvalConfig cfg;
    if (a.profile == "desk") {
        cfg.encoder = EncoderConfig::desk();
        cfg.epochs = 50;
    } else if (a.profile == "paper") {
        cfg.encoder = EncoderConfig{};
        cfg.epochs = 200;
    } else {
        throw ConfigError("eval: unknown profile '" + a.profile + "'");
    }
    if (!a.config_file.empty()) cfg = merge_eval_json(cfg, load_json_file(a.config_file));
    cfg.protocol = protocol_from_string(a.protocol);
    cfg.label_fraction = a.label_fraction;
    cfg.repetitions = a.repeats;
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.batch >= 0) cfg.batch = a.batch;
    if (a.lr >= 0.0) cfg.lr = a.lr;
    cfg.augment_times = a.times;
    cfg.seed = a.seed;
    cfg.workers = a.workers;
    if (a.no_stratify) cfg.stratified = false;
    if (a.standardize) cfg.standardize = true;

    WindowSet ws = read_swnd(a.in_file);

    ParamMap<float> encoder_params;
    const ParamMap<float>* encoder_ptr = nullptr;
    if (cfg.protocol != Protocol::supervised) {
        if (a.checkpoint_file.empty())
            throw ConfigError("eval: --checkpoint is required for protocol '" + a.protocol +
                              "'");
        encoder_params = read_sprm<float>(a.checkpoint_file);
        require_checkpoint_match(encoder_params, cfg.encoder, ws.windows[0].channels);
        encoder_ptr = &encoder_params;
    }

    AugmentSpec aug;
    const AugmentSpec* aug_ptr = nullptr;
    if (!a.augment_file.empty()) {
        aug = AugmentSpec::from_json(load_json_file(a.augment_file));
        aug_ptr = &aug;
    }

    RunManifest man = run_repetitions<float>(ws, cfg, encoder_ptr, aug_ptr);
    man.config["method"] = a.method.empty() ? a.protocol : a.method;
    man.artifact_hashes["input"] = hash_file(a.in_file);
    if (!a.checkpoint_file.empty())
        man.artifact_hashes["checkpoint"] = hash_file(a.checkpoint_file);
    man.seed = cfg.seed;

    std::cout << "protocol: " << a.protocol << "  label fraction: "
              << fraction_label(cfg.label_fraction) << "\n";
    std::cout << "repetition scores:";
    for (double s : man.repetition_scores) std::printf(" %.4f", s);
    std::cout << "\n";
    double mean = 0.0;
    for (double s : man.repetition_scores) mean += s;
    mean /= static_cast<double>(man.repetition_scores.size());
    std::printf("mean macro-F1: %.4f\n", mean);
    if (man.repetition_scores.size() >= 2) {
        auto [lo, hi] = confidence_limits_95(man.repetition_scores);
        std::printf("95%% limits: [%.4f, %.4f]\n", lo, hi);
    }
    if (!a.manifest_file.empty()) {
        man.save(a.manifest_file);
        std::cout << "wrote " << a.manifest_file << "\n";
    }
    return 0;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> manifest_files;
    std::string baseline;
    std::string out_file;
    double alpha = 0.05;
};

struct ReportCell {
    std::vector<double> scores;
};

int cmd_report(const ReportArgs& a) {
    if (a.manifest_files.empty()) throw ConfigError("report: no manifests given");
    std::map<std::string, std::map<double, ReportCell>> table;  // method -> fraction -> cell
    for (const std::string& path : a.manifest_files) {
        RunManifest man = RunManifest::load(path);
        if (!man.config.contains("method"))
            throw ConfigError("report: manifest '" + path + "' has no method name");
        if (!man.config.contains("label_fraction"))
            throw ConfigError("report: manifest '" + path + "' has no label fraction");
        if (man.repetition_scores.empty())
            throw ConfigError("report: manifest '" + path + "' has no repetition scores");
        std::string method = man.config["method"].get<std::string>();
        double fraction = man.config["label_fraction"].get<double>();
        auto& cell = table[method][fraction];
        if (!cell.scores.empty())
            throw ConfigError("report: duplicate entry for method '" + method +
                              "' at fraction " + fraction_label(fraction));
        cell.scores = man.repetition_scores;
    }
    auto base_it = table.find(a.baseline);
    if (base_it == table.end())
        throw ConfigError("report: baseline method '" + a.baseline + "' not found");

    std::vector<double> fractions;
    for (const auto& [method, row] : table)
        for (const auto& [f, cell] : row)
            if (std::find(fractions.begin(), fractions.end(), f) == fractions.end())
                fractions.push_back(f);
    std::sort(fractions.begin(), fractions.end());

    std::vector<std::string> methods;
    methods.push_back(a.baseline);
    for (const auto& [method, row] : table)
        if (method != a.baseline) methods.push_back(method);

    std::ostringstream out;
    out << std::left << std::setw(18) << "method";
    for (double f : fractions) out << std::setw(22) << fraction_label(f);
    out << "\n";
    for (const std::string& method : methods) {
        out << std::left << std::setw(18) << method;
        for (double f : fractions) {
            auto& row = table[method];
            auto it = row.find(f);
            if (it == row.end()) {
                out << std::setw(22) << "-";
                continue;
            }
            const std::vector<double>& scores = it->second.scores;
            double mean = 0.0;
            for (double s : scores) mean += s;
            mean /= static_cast<double>(scores.size());
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3) << mean;
            if (scores.size() >= 2) {
                auto [lo, hi] = confidence_limits_95(scores);
                cell << " +-" << std::fixed << std::setprecision(3) << (hi - lo) / 2.0;
            }
            if (method != a.baseline) {
                auto bit = base_it->second.find(f);
                if (bit == base_it->second.end())
                    throw ConfigError("report: baseline has no scores at fraction " +
                                      fraction_label(f));
                const std::vector<double>& base_scores = bit->second.scores;
                if (base_scores.size() != scores.size())
                    throw ConfigError("report: repetition count mismatch for '" + method +
                                      "' vs baseline at " + fraction_label(f) + " (" +
                                      std::to_string(scores.size()) + " vs " +
                                      std::to_string(base_scores.size()) + ")");
                std::string verdict;
                try {
                    verdict = wilcoxon_signed_rank(scores, base_scores, a.alpha).verdict;
                } catch (const InsufficientData&) {
                    double d = 0.0;
                    for (size_t i = 0; i < scores.size(); ++i) d += scores[i] - base_scores[i];
                    verdict = d >= 0.0 ? "+" : "-";
                }
                cell << " " << verdict;
            }
            out << std::setw(22) << cell.str();
        }
        out << "\n";
    }
    std::cout << out.str();
    if (!a.out_file.empty()) {
        std::ofstream os(a.out_file);
        if (!os) throw ConfigError("report: cannot open '" + a.out_file + "' for writing");
        os << out.str();
        std::cout << "wrote " << a.out_file << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensor time-series self-supervised learning toolkit"};
    app.require_subcommand(1);

    IngestArgs ia;
    CLI::App* ing = app.add_subcommand("ingest", "read a dataset and write canonical SWND");
    ing->add_option("--dataset", ia.dataset, "ucihar | csv | synthetic")
        ->required()
        ->check(CLI::IsMember({"ucihar", "csv", "synthetic"}));
    ing->add_option("--in", ia.in_dir, "dataset directory");
    ing->add_option("--out", ia.out_file, "output SWND path")->required();
    ing->add_option("--schema", ia.schema_file, "CSV schema JSON");
    ing->add_option("--window-len", ia.window_len, "segmentation window length (csv)");
    ing->add_option("--overlap", ia.overlap, "segmentation overlap fraction (csv)");
    ing->add_option("--classes", ia.classes, "synthetic class count");
    ing->add_option("--per-class", ia.per_class, "synthetic windows per class");
    ing->add_option("--timesteps", ia.timesteps, "synthetic window length");
    ing->add_option("--channels", ia.channels, "synthetic channel count");
    ing->add_option("--noise", ia.noise, "synthetic noise amplitude");
    ing->add_option("--seed", ia.seed, "synthetic generator seed");

    AugmentArgs aa;
    CLI::App* aug = app.add_subcommand("augment", "transform windows in an SWND file");
    aug->add_option("--in", aa.in_file, "input SWND")->required();
    aug->add_option("--out", aa.out_file, "output SWND")->required();
    aug->add_option("--config", aa.config_file, "AugmentSpec JSON file");
    aug->add_option("--kind", aa.kind,
                    "noise | rotate | scale | magnify | invert | reverse | resample");
    auto* amp = aug->add_option("--amplitude", aa.amplitude, "noise amplitude");
    auto* lo = aug->add_option("--lo", aa.lo, "multiplier range low");
    auto* hi = aug->add_option("--hi", aa.hi, "multiplier range high");
    aug->add_option("--M", aa.M, "resampling insertion count");
    aug->add_option("--N", aa.N, "resampling skip count");
    aug->add_option("--interpolation", aa.interpolation, "linear | lagrange | cubic_spline");
    aug->add_option("--mode", aa.mode, "nonlinear block mode A | B");
    aug->add_option("--draw-policy", aa.draw_policy, "fixed | random_per_call");
    aug->add_option("--times", aa.times, "emit original plus this many augmented copies");
    aug->add_option("--seed", aa.seed, "augmentation seed");
    aug->add_option("--workers", aa.workers, "worker cap (0: SENRES_WORKERS or 1)");

    PretrainArgs pa;
    CLI::App* pre = app.add_subcommand("pretrain", "contrastive pretraining on an SWND file");
    pre->add_option("--in", pa.in_file, "input SWND")->required();
    pre->add_option("--out", pa.out_file, "output SPRM checkpoint")->required();
    pre->add_option("--manifest", pa.manifest_file, "manifest path (default: OUT.manifest.json)");
    pre->add_option("--config", pa.config_file, "pretraining config JSON");
    pre->add_option("--framework", pa.framework, "simclr | moco")
        ->check(CLI::IsMember({"simclr", "moco"}));
    pre->add_option("--profile", pa.profile, "desk | paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    pre->add_option("--epochs", pa.epochs, "training epochs");
    pre->add_option("--batch", pa.batch, "batch size");
    pre->add_option("--tau", pa.tau, "temperature");
    pre->add_option("--lr", pa.lr, "learning rate");
    pre->add_option("--queue", pa.queue, "negative queue capacity (moco)");
    pre->add_option("--momentum", pa.momentum, "momentum coefficient (moco)");
    pre->add_option("--branch1", pa.branch1_file, "view 1 AugmentSpec JSON");
    pre->add_option("--branch2", pa.branch2_file, "view 2 AugmentSpec JSON");
    pre->add_option("--seed", pa.seed, "run seed");
    pre->add_option("--workers", pa.workers, "worker cap (0: SENRES_WORKERS or 1)");
    pre->add_flag("--standardize", pa.standardize, "z-score each channel before training");

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "evaluate on labeled windows");
    ev->add_option("--in", ea.in_file, "input SWND")->required();
    ev->add_option("--protocol", ea.protocol, "supervised | linear | finetune")
        ->check(CLI::IsMember({"supervised", "linear", "finetune"}));
    ev->add_option("--checkpoint", ea.checkpoint_file, "SPRM encoder checkpoint");
    ev->add_option("--label-fraction", ea.label_fraction, "labeled training fraction");
    ev->add_option("--repeats", ea.repeats, "repetitions, each with a rederived split");
    ev->add_option("--epochs", ea.epochs, "training epochs");
    ev->add_option("--batch", ea.batch, "batch size (0: pick by fraction rule)");
    ev->add_option("--lr", ea.lr, "learning rate");
    ev->add_option("--profile", ea.profile, "desk | paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    ev->add_option("--config", ea.config_file, "evaluation config JSON");
    ev->add_option("--augment", ea.augment_file, "AugmentSpec JSON for training expansion");
    ev->add_option("--times", ea.times, "augmented copies per training window");
    ev->add_option("--method", ea.method, "method name recorded for report");
    ev->add_option("--manifest", ea.manifest_file, "write manifest here");
    ev->add_option("--seed", ea.seed, "run seed");
    ev->add_option("--workers", ea.workers, "worker cap (0: SENRES_WORKERS or 1)");
    ev->add_flag("--no-stratify", ea.no_stratify, "disable stratified splitting");
    ev->add_flag("--standardize", ea.standardize, "z-score channels with train-split statistics");

    ReportArgs ra;
    CLI::App* rep = app.add_subcommand("report", "join eval manifests into a comparison table");
    rep->add_option("--manifests", ra.manifest_files, "eval manifest JSON files")->required();
    rep->add_option("--baseline", ra.baseline, "baseline method name")->required();
    rep->add_option("--alpha", ra.alpha, "significance level");
    rep->add_option("--out", ra.out_file, "also write the table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        aa.has_amplitude = amp->count() > 0;
        aa.has_lo = lo->count() > 0;
        aa.has_hi = hi->count() > 0;
        if (ing->parsed()) return cmd_ingest(ia);
        if (aug->parsed()) return cmd_augment(aa);
        if (pre->parsed()) return cmd_pretrain(pa);
        if (ev->parsed()) return cmd_eval(ea);
        if (rep->parsed()) return cmd_report(ra);
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
