#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senres/common.hpp"
#include "senres/rng.hpp"
#include "senres/window.hpp"

namespace senres {

// One continuous multichannel stream with constant subject/activity metadata.
struct Recording {
    int subject = -1;
    int activity = kNoLabel;
    std::vector<std::vector<double>> channels;
    double sample_rate_hz = 0.0;

    int64_t length() const { return channels.empty() ? 0 : static_cast<int64_t>(channels[0].size()); }

    void validate() const {
        if (channels.empty()) throw InvalidParams("Recording: no channels");
        for (const auto& ch : channels)
            if (ch.size() != channels[0].size())
                throw InvalidParams("Recording: channel streams differ in length");
    }
};

struct WindowSet {
    std::vector<Window> windows;
    std::vector<std::string> class_names;
    // provenance
    std::string dataset;
    int64_t window_len = 0;
    double overlap = 0.0;
    uint64_t seed = 0;

    size_t size() const { return windows.size(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }

    void validate() const {
        if (windows.empty()) return;
        int64_t t = windows[0].timesteps, c = windows[0].channels;
        for (const auto& w : windows) {
            if (w.timesteps != t || w.channels != c)
                throw ShapeError("WindowSet: windows disagree on shape");
            if (w.label != kNoLabel &&
                (w.label < 0 || w.label >= static_cast<int>(class_names.size())))
                throw InvalidParams("WindowSet: label " + std::to_string(w.label) +
                                    " outside class table");
        }
    }

    std::vector<size_t> per_class_counts() const {
        std::vector<size_t> counts(class_names.size(), 0);
        for (const auto& w : windows)
            if (w.label != kNoLabel) counts[static_cast<size_t>(w.label)]++;
        return counts;
    }
};

inline int64_t round_half_up(double x) { return static_cast<int64_t>(std::floor(x + 0.5)); }

// Slice one recording into overlapping windows. Step is
// round(window_len * (1 - overlap_fraction)), at least 1. A stream shorter
// than one window yields zero windows.
inline WindowSet segment(const Recording& rec, int64_t window_len, double overlap_fraction) {
    if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
        throw InvalidParams("segment: overlap fraction must be in [0,1), got " +
                            std::to_string(overlap_fraction));
    if (window_len < 2) throw InvalidParams("segment: window length must be >= 2");
    rec.validate();
    WindowSet out;
    out.window_len = window_len;
    out.overlap = overlap_fraction;
    int64_t step = std::max<int64_t>(1, round_half_up(window_len * (1.0 - overlap_fraction)));
    int64_t len = rec.length();
    int64_t c = static_cast<int64_t>(rec.channels.size());
    for (int64_t start = 0; start + window_len <= len; start += step) {
        Window w(window_len, c);
        w.sample_rate_hz = rec.sample_rate_hz;
        w.label = rec.activity;
        for (int64_t t = 0; t < window_len; ++t)
            for (int64_t ch = 0; ch < c; ++ch)
                w.at(t, ch) = rec.channels[static_cast<size_t>(ch)][static_cast<size_t>(start + t)];
        out.windows.push_back(std::move(w));
    }
    return out;
}

// --- UCI-HAR ingestion ------------------------------------------------------

namespace detail {

inline constexpr int kUciharWindowLen = 128;

inline std::vector<std::vector<double>> parse_signal_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open '" + path.string() + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::vector<double> row;
        row.reserve(kUciharWindowLen);
        const char* p = line.c_str();
        char* end = nullptr;
        while (true) {
            while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
            if (*p == '\0') break;
            double v = std::strtod(p, &end);
            if (end == p)
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": non-numeric token");
            row.push_back(v);
            p = end;
        }
        if (row.empty()) continue;  // blank line
        if (static_cast<int>(row.size()) != kUciharWindowLen)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(kUciharWindowLen) + " values, got " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<int> parse_label_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open '" + path.string() + "'");
    std::vector<int> labels;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ss(line);
        int v;
        if (!(ss >> v)) {
            bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
            if (blank) continue;
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad label");
        }
        if (v < 1 || v > 6)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": label " +
                             std::to_string(v) + " outside 1..6");
        labels.push_back(v - 1);
    }
    return labels;
}

}  // namespace detail

// Load the pre-segmented smartphone inertial-signal text layout: for each
// partition (train, test), six per-axis signal files holding one 128-sample
// window per line, plus the label file. Channels 0-2 are total acceleration
// xyz, 3-5 gyroscope xyz. Both partitions are concatenated; splitting is a
// separate step.
inline WindowSet load_ucihar(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path base(dir);
    if (!fs::exists(base / "train") && !fs::exists(base / "test") &&
        fs::exists(base / "UCI HAR Dataset"))
        base /= "UCI HAR Dataset";

    WindowSet out;
    out.dataset = "ucihar";
    out.window_len = detail::kUciharWindowLen;
    out.overlap = 0.5;
    out.class_names = {"WALKING",  "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS",
                       "SITTING",  "STANDING",         "LAYING"};
    fs::path label_map = base / "activity_labels.txt";
    if (fs::exists(label_map)) {
        std::ifstream is(label_map);
        std::string line;
        std::vector<std::string> names(6);
        while (std::getline(is, line)) {
            std::istringstream ss(line);
            int id;
            std::string name;
            if (ss >> id >> name && id >= 1 && id <= 6) names[static_cast<size_t>(id - 1)] = name;
        }
        bool complete = std::all_of(names.begin(), names.end(),
                                    [](const std::string& s) { return !s.empty(); });
        if (complete) out.class_names = names;
    }

    static const char* kAxes[6][2] = {{"total_acc", "x"}, {"total_acc", "y"}, {"total_acc", "z"},
                                      {"body_gyro", "x"}, {"body_gyro", "y"}, {"body_gyro", "z"}};
    bool any_partition = false;
    for (const char* part : {"train", "test"}) {
        fs::path pdir = base / part;
        if (!fs::exists(pdir)) continue;
        any_partition = true;
        fs::path sigs = pdir / "Inertial Signals";
        std::array<std::vector<std::vector<double>>, 6> chans;
        for (int c = 0; c < 6; ++c) {
            fs::path f = sigs / (std::string(kAxes[c][0]) + "_" + kAxes[c][1] + "_" + part +
                                 ".txt");
            if (!fs::exists(f)) throw ParseError("missing signal file '" + f.string() + "'");
            chans[static_cast<size_t>(c)] = detail::parse_signal_file(f);
        }
        fs::path lf = pdir / ("y_" + std::string(part) + ".txt");
        if (!fs::exists(lf)) throw ParseError("missing label file '" + lf.string() + "'");
        std::vector<int> labels = detail::parse_label_file(lf);
        size_t n = chans[0].size();
        for (int c = 1; c < 6; ++c)
            if (chans[static_cast<size_t>(c)].size() != n)
                throw ParseError("signal files in '" + sigs.string() +
                                 "' disagree on window count");
        if (labels.size() != n)
            throw ParseError("label count " + std::to_string(labels.size()) +
                             " does not match window count " + std::to_string(n) + " in '" +
                             pdir.string() + "'");
        for (size_t i = 0; i < n; ++i) {
            Window w(detail::kUciharWindowLen, 6);
            w.sample_rate_hz = 50.0;
            w.label = labels[i];
            for (int64_t t = 0; t < w.timesteps; ++t)
                for (int64_t c = 0; c < 6; ++c)
                    w.at(t, c) = chans[static_cast<size_t>(c)][i][static_cast<size_t>(t)];
            out.windows.push_back(std::move(w));
        }
    }
    if (!any_partition)
        throw ParseError("'" + base.string() + "' has neither train/ nor test/ partition");
    out.validate();
    return out;
}

// --- CSV ingestion ----------------------------------------------------------

// Maps CSV columns onto the 6 canonical channels plus optional metadata.
// Activity cells may be integers (used directly as class ids) or strings
// (resolved against class_names).
struct CsvSchema {
    std::array<std::string, 6> channel_columns;
    std::string subject_column;
    std::string activity_column;
    double sample_rate_hz = 0.0;
    std::vector<std::string> class_names;

    static CsvSchema from_json(const nlohmann::json& j) {
        CsvSchema s;
        if (!j.contains("channel_columns") || !j["channel_columns"].is_array() ||
            j["channel_columns"].size() != 6)
            throw SchemaError("schema: 'channel_columns' must list exactly 6 column names");
        for (size_t i = 0; i < 6; ++i) s.channel_columns[i] = j["channel_columns"][i].get<std::string>();
        if (j.contains("subject_column")) s.subject_column = j["subject_column"].get<std::string>();
        if (j.contains("activity_column"))
            s.activity_column = j["activity_column"].get<std::string>();
        if (j.contains("sample_rate_hz")) s.sample_rate_hz = j["sample_rate_hz"].get<double>();
        if (j.contains("class_names"))
            for (const auto& n : j["class_names"]) s.class_names.push_back(n.get<std::string>());
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["channel_columns"] = channel_columns;
        if (!subject_column.empty()) j["subject_column"] = subject_column;
        if (!activity_column.empty()) j["activity_column"] = activity_column;
        if (sample_rate_hz > 0) j["sample_rate_hz"] = sample_rate_hz;
        if (!class_names.empty()) j["class_names"] = class_names;
        return j;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        size_t a = s.find_first_not_of(" \t");
        size_t b = s.find_last_not_of(" \t");
        s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    return out;
}

}  // namespace detail

// One Recording per CSV file (rows in file order); files discovered
// recursively and processed in sorted path order for determinism.
inline std::vector<Recording> load_csv_recordings(const std::string& dir, const CsvSchema& schema) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ParseError("no .csv files under '" + dir + "'");

    std::vector<Recording> recs;
    for (const auto& f : files) {
        std::ifstream is(f);
        if (!is) throw ParseError("cannot open '" + f.string() + "'");
        std::string line;
        if (!std::getline(is, line)) throw ParseError(f.string() + ": empty file");
        std::vector<std::string> header = detail::split_csv_line(line);
        std::map<std::string, size_t> col;
        for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
        std::array<size_t, 6> chan_idx{};
        for (size_t c = 0; c < 6; ++c) {
            auto it = col.find(schema.channel_columns[c]);
            if (it == col.end())
                throw SchemaError(f.string() + ": missing channel column '" +
                                  schema.channel_columns[c] + "'");
            chan_idx[c] = it->second;
        }
        int64_t subj_idx = -1, act_idx = -1;
        if (!schema.subject_column.empty()) {
            auto it = col.find(schema.subject_column);
            if (it == col.end())
                throw SchemaError(f.string() + ": missing subject column '" +
                                  schema.subject_column + "'");
            subj_idx = static_cast<int64_t>(it->second);
        }
        if (!schema.activity_column.empty()) {
            auto it = col.find(schema.activity_column);
            if (it == col.end())
                throw SchemaError(f.string() + ": missing activity column '" +
                                  schema.activity_column + "'");
            act_idx = static_cast<int64_t>(it->second);
        }

        Recording rec;
        rec.sample_rate_hz = schema.sample_rate_hz;
        rec.channels.assign(6, {});
        int64_t lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::vector<std::string> cells = detail::split_csv_line(line);
            if (cells.size() < header.size())
                throw ParseError(f.string() + ":" + std::to_string(lineno) +
                                 ": row has fewer cells than header");
            for (size_t c = 0; c < 6; ++c) {
                const std::string& cell = cells[chan_idx[c]];
                char* end = nullptr;
                double v = std::strtod(cell.c_str(), &end);
                if (end == cell.c_str() || *end != '\0')
                    throw ParseError(f.string() + ":" + std::to_string(lineno) + ": column '" +
                                     schema.channel_columns[c] + "': non-numeric cell '" + cell +
                                     "'");
                rec.channels[c].push_back(v);
            }
            if (subj_idx >= 0) {
                int subj = std::atoi(cells[static_cast<size_t>(subj_idx)].c_str());
                if (rec.subject == -1)
                    rec.subject = subj;
                else if (rec.subject != subj)
                    throw ParseError(f.string() + ":" + std::to_string(lineno) +
                                     ": subject changes mid-file");
            }
            if (act_idx >= 0) {
                const std::string& cell = cells[static_cast<size_t>(act_idx)];
                int id;
                char* end = nullptr;
                long asint = std::strtol(cell.c_str(), &end, 10);
                if (end != cell.c_str() && *end == '\0') {
                    id = static_cast<int>(asint);
                    if (id < 0 ||
                        (!schema.class_names.empty() &&
                         id >= static_cast<int>(schema.class_names.size())))
                        throw ParseError(f.string() + ":" + std::to_string(lineno) +
                                         ": activity id " + cell + " outside class table");
                } else {
                    auto it = std::find(schema.class_names.begin(), schema.class_names.end(), cell);
                    if (it == schema.class_names.end())
                        throw ParseError(f.string() + ":" + std::to_string(lineno) +
                                         ": unknown activity '" + cell + "'");
                    id = static_cast<int>(it - schema.class_names.begin());
                }
                if (rec.activity == kNoLabel)
                    rec.activity = id;
                else if (rec.activity != id)
                    throw ParseError(f.string() + ":" + std::to_string(lineno) +
                                     ": activity changes mid-file");
            }
        }
        if (rec.length() == 0) throw ParseError(f.string() + ": no data rows");
        recs.push_back(std::move(rec));
    }
    return recs;
}

// Segment every recording and merge into one set.
inline WindowSet segment_all(const std::vector<Recording>& recs, int64_t window_len,
                             double overlap, std::vector<std::string> class_names,
                             const std::string& dataset_name = "") {
    WindowSet out;
    out.dataset = dataset_name;
    out.window_len = window_len;
    out.overlap = overlap;
    out.class_names = std::move(class_names);
    for (const auto& r : recs) {
        WindowSet part = segment(r, window_len, overlap);
        for (auto& w : part.windows) out.windows.push_back(std::move(w));
    }
    out.validate();
    return out;
}

// --- splitting --------------------------------------------------------------

struct SplitSpec {
    double train_fraction = 0.6;
    uint64_t seed = 0;
    bool stratified = true;
};

struct SplitResult {
    WindowSet train;
    WindowSet test;
    bool stratified_applied = false;
    std::string warning;
};

// Seeded shuffle then partition. Stratified draws round(fraction * n_k) per
// class; if any class would land entirely on one side, falls back to an
// unstratified global split and records a warning.
inline SplitResult split(const WindowSet& ws, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw InvalidParams("split: train fraction must be in (0,1)");
    ws.validate();
    SplitResult res;
    res.train.class_names = res.test.class_names = ws.class_names;
    res.train.dataset = res.test.dataset = ws.dataset;
    res.train.window_len = res.test.window_len = ws.window_len;
    res.train.overlap = res.test.overlap = ws.overlap;
    res.train.seed = res.test.seed = spec.seed;

    std::vector<size_t> train_idx, test_idx;
    bool try_stratified = spec.stratified;
    if (try_stratified) {
        std::map<int, std::vector<size_t>> by_class;
        for (size_t i = 0; i < ws.windows.size(); ++i) by_class[ws.windows[i].label].push_back(i);
        bool feasible = true;
        for (const auto& [label, idx] : by_class) {
            int64_t take = round_half_up(spec.train_fraction * static_cast<double>(idx.size()));
            if (take < 1 || take >= static_cast<int64_t>(idx.size())) {
                feasible = false;
                res.warning = "class " + std::to_string(label) + " has too few windows (" +
                              std::to_string(idx.size()) +
                              ") for a stratified split; fell back to unstratified";
                break;
            }
        }
        if (feasible) {
            for (auto& [label, idx] : by_class) {
                Rng rng = Rng::stream(spec.seed, static_cast<uint64_t>(label + 1));
                rng.shuffle(idx);
                int64_t take = round_half_up(spec.train_fraction * static_cast<double>(idx.size()));
                for (size_t j = 0; j < idx.size(); ++j)
                    (static_cast<int64_t>(j) < take ? train_idx : test_idx).push_back(idx[j]);
            }
            res.stratified_applied = true;
        } else {
            try_stratified = false;
        }
    }
    if (!try_stratified) {
        std::vector<size_t> idx(ws.windows.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng = Rng::stream(spec.seed, 0);
        rng.shuffle(idx);
        int64_t take = round_half_up(spec.train_fraction * static_cast<double>(idx.size()));
        take = std::clamp<int64_t>(take, 1, static_cast<int64_t>(idx.size()) - 1);
        for (size_t j = 0; j < idx.size(); ++j)
            (static_cast<int64_t>(j) < take ? train_idx : test_idx).push_back(idx[j]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    for (size_t i : train_idx) res.train.windows.push_back(ws.windows[i]);
    for (size_t i : test_idx) res.test.windows.push_back(ws.windows[i]);
    return res;
}

// --- SWND container ---------------------------------------------------------

inline constexpr uint16_t kSwndVersion = 1;
inline constexpr uint16_t kSwndNoLabel = 0xffff;
inline constexpr uint64_t kSwndMaxElements = 1ull << 30;
// Caps the per-window allocation a hostile header can request before the
// payload itself has to back it up.
inline constexpr uint64_t kSwndMaxWindowElements = 1ull << 24;

// Layout: magic "SWND", version u16, flags u16 (zero), window count u32,
// T u32, C u32, class count u16, class names (u16 length + UTF-8 bytes each),
// then per window: label u16 (0xffff when unlabeled) and T*C float32
// little-endian values, time-major. Sampling rate is manifest metadata, not
// container payload; read sets it to zero.
inline void write_swnd(const WindowSet& ws, std::ostream& os) {
    ws.validate();
    int64_t t = ws.windows.empty() ? 0 : ws.windows[0].timesteps;
    int64_t c = ws.windows.empty() ? 0 : ws.windows[0].channels;
    os.write("SWND", 4);
    write_u16(os, kSwndVersion);
    write_u16(os, 0);
    write_u32(os, static_cast<uint32_t>(ws.windows.size()));
    write_u32(os, static_cast<uint32_t>(t));
    write_u32(os, static_cast<uint32_t>(c));
    if (ws.class_names.size() >= kSwndNoLabel)
        throw InvalidParams("write_swnd: too many classes");
    write_u16(os, static_cast<uint16_t>(ws.class_names.size()));
    for (const auto& name : ws.class_names) {
        if (name.size() > 0xffff) throw InvalidParams("write_swnd: class name too long");
        write_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    for (const auto& w : ws.windows) {
        write_u16(os, w.label == kNoLabel ? kSwndNoLabel : static_cast<uint16_t>(w.label));
        for (double v : w.data) write_f32(os, static_cast<float>(v));
    }
    if (!os) throw FormatError("write_swnd: stream write failed");
}

inline void write_swnd(const WindowSet& ws, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("write_swnd: cannot open '" + path + "' for writing");
    write_swnd(ws, os);
}

inline WindowSet read_swnd(std::istream& is) {
    char magic[4];
    detail::get_bytes(is, magic, 4, "magic");
    if (std::string(magic, 4) != "SWND") throw FormatError("read_swnd: bad magic");
    uint16_t version = read_u16(is, "version");
    if (version != kSwndVersion)
        throw FormatError("read_swnd: unsupported version " + std::to_string(version));
    uint16_t flags = read_u16(is, "flags");
    if (flags != 0) throw FormatError("read_swnd: unknown flags");
    uint32_t count = read_u32(is, "window count");
    uint32_t t = read_u32(is, "timesteps");
    uint32_t c = read_u32(is, "channels");
    if (count > 0 && (t < 2 || c < 1))
        throw FormatError("read_swnd: implausible window shape " + std::to_string(t) + "x" +
                          std::to_string(c));
    if (count == 0 && (t != 0 || c != 0))
        throw FormatError("read_swnd: nonzero window shape with zero windows");
    if (static_cast<uint64_t>(t) * c > kSwndMaxWindowElements)
        throw FormatError("read_swnd: window size " + std::to_string(t) + "x" +
                          std::to_string(c) + " exceeds limit");
    uint64_t total = static_cast<uint64_t>(count) * t * c;
    if (total > kSwndMaxElements) throw FormatError("read_swnd: element count exceeds limit");
    uint16_t nclasses = read_u16(is, "class count");
    if (nclasses == kSwndNoLabel) throw FormatError("read_swnd: invalid class count");
    WindowSet out;
    for (uint16_t i = 0; i < nclasses; ++i) {
        uint16_t len = read_u16(is, "class name length");
        std::string name(len, '\0');
        detail::get_bytes(is, name.data(), len, "class name");
        out.class_names.push_back(std::move(name));
    }
    out.window_len = t;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t label = read_u16(is, "window label");
        if (label != kSwndNoLabel && label >= nclasses)
            throw FormatError("read_swnd: label " + std::to_string(label) +
                              " outside class table");
        Window w(static_cast<int64_t>(t), static_cast<int64_t>(c));
        w.label = label == kSwndNoLabel ? kNoLabel : static_cast<int>(label);
        for (size_t e = 0; e < w.data.size(); ++e) {
            float v = read_f32(is, "window value");
            if (!std::isfinite(v)) throw FormatError("read_swnd: non-finite value in window " +
                                                     std::to_string(i));
            w.data[e] = static_cast<double>(v);
        }
        out.windows.push_back(std::move(w));
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("read_swnd: trailing bytes after final window");
    out.validate();
    return out;
}

inline WindowSet read_swnd(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("read_swnd: cannot open '" + path + "'");
    return read_swnd(is);
}

// --- per-channel standardization --------------------------------------------

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stdev;  // population; values below 1e-12 are treated as 1
};

inline ChannelStats channel_stats(const WindowSet& ws) {
    if (ws.windows.empty()) throw InvalidParams("channel_stats: empty window set");
    int64_t channels = ws.windows[0].channels;
    ChannelStats st;
    st.mean.assign(static_cast<size_t>(channels), 0.0);
    st.stdev.assign(static_cast<size_t>(channels), 0.0);
    size_t n = 0;
    for (const auto& w : ws.windows) {
        if (w.channels != channels)
            throw ShapeError("channel_stats: inconsistent channel counts");
        for (int64_t t = 0; t < w.timesteps; ++t)
            for (int64_t c = 0; c < channels; ++c)
                st.mean[static_cast<size_t>(c)] += w.at(t, c);
        n += static_cast<size_t>(w.timesteps);
    }
    for (auto& m : st.mean) m /= static_cast<double>(n);
    for (const auto& w : ws.windows)
        for (int64_t t = 0; t < w.timesteps; ++t)
            for (int64_t c = 0; c < channels; ++c) {
                double d = w.at(t, c) - st.mean[static_cast<size_t>(c)];
                st.stdev[static_cast<size_t>(c)] += d * d;
            }
    for (auto& s : st.stdev) s = std::sqrt(s / static_cast<double>(n));
    return st;
}

// (x - mean) / stdev per channel. Stats normally come from a training split
// so held-out data sees no leakage.
inline WindowSet standardize(const WindowSet& ws, const ChannelStats& stats) {
    WindowSet out = ws;
    for (auto& w : out.windows) {
        if (static_cast<size_t>(w.channels) != stats.mean.size())
            throw ShapeError("standardize: channel count does not match stats");
        for (int64_t t = 0; t < w.timesteps; ++t)
            for (int64_t c = 0; c < w.channels; ++c) {
                double s = stats.stdev[static_cast<size_t>(c)];
                if (s < 1e-12) s = 1.0;
                w.at(t, c) = (w.at(t, c) - stats.mean[static_cast<size_t>(c)]) / s;
            }
    }
    return out;
}

// --- synthetic data ---------------------------------------------------------

struct SyntheticConfig {
    int num_classes = 3;
    int per_class = 600;
    int64_t timesteps = 128;
    int64_t channels = 6;
    std::vector<double> frequencies = {3.0, 8.0, 20.0};  // cycles per window
    // Unit amplitude by default: a per-window amplitude is preserved exactly
    // by resampling, so any spread here hands contrastive training a
    // class-free shortcut for matching views.
    double amp_lo = 1.0, amp_hi = 1.0;
    double noise_amplitude = 0.1;
    uint64_t seed = 0;
};

// Class identity is carried by a per-class sinusoid frequency. Each window
// gets one shared random phase and one shared amplitude; channels differ only
// by a fixed phase offset, and every sample gets uniform noise. Keeping the
// per-window degrees of freedom this small matters: anything richer (say,
// independent per-channel amplitudes) survives resampling unchanged and lets
// contrastive pretraining match views by that fingerprint alone, learning
// nothing about frequency. Frequencies are spaced so that halving (the fixed
// M=1, N=0 resampling view) never lands inside another class's range.
inline WindowSet make_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_classes < 2 || static_cast<size_t>(cfg.num_classes) > cfg.frequencies.size())
        throw InvalidParams("make_synthetic: need a frequency per class");
    WindowSet out;
    out.dataset = "synthetic";
    out.window_len = cfg.timesteps;
    out.seed = cfg.seed;
    for (int k = 0; k < cfg.num_classes; ++k)
        out.class_names.push_back("tone" + std::to_string(static_cast<int>(cfg.frequencies[static_cast<size_t>(k)])));
    Rng rng = Rng::stream(cfg.seed, 0x5e5);
    for (int k = 0; k < cfg.num_classes; ++k) {
        double f = cfg.frequencies[static_cast<size_t>(k)];
        for (int i = 0; i < cfg.per_class; ++i) {
            Window w(cfg.timesteps, cfg.channels);
            w.label = k;
            double amp = rng.uniform(cfg.amp_lo, cfg.amp_hi);
            double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (int64_t c = 0; c < cfg.channels; ++c) {
                double chan_phase = phase + 0.7 * static_cast<double>(c);
                for (int64_t t = 0; t < cfg.timesteps; ++t)
                    w.at(t, c) = amp * std::sin(2.0 * std::numbers::pi * f * t /
                                                    static_cast<double>(cfg.timesteps) +
                                                chan_phase) +
                                 rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude);
            }
            out.windows.push_back(std::move(w));
        }
    }
    out.validate();
    return out;
}

}  // namespace senres
