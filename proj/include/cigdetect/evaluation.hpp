// SPDX-License-Identifier: Apache-2.0
// Dataset manifests, stratified train/test split, confusion matrix and
// classification metrics, plus the detector gating-cost summary.

#pragma once

#include "cigdetect/error.hpp"
#include "cigdetect/pipeline.hpp"
#include "cigdetect/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace cigdetect {

struct ManifestEntry {
    std::filesystem::path image_path;
    ClassLabel ground_truth;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/** Accepts 0/1, smoker/nonsmoker and the dataset folder names
 *  smoking/notsmoking, case-insensitively. */
inline ClassLabel parse_label(std::string_view text)
{
    std::string t;
    for (const char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) {
            t.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (t == "1" || t == "smoker" || t == "smoking") {
        return ClassLabel::Smoker;
    }
    if (t == "0" || t == "nonsmoker" || t == "non-smoker" || t == "notsmoking") {
        return ClassLabel::NonSmoker;
    }
    throw UnknownLabel("unknown label '" + std::string(text) + "'");
}

namespace detail {

inline bool is_image_file(const std::filesystem::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::optional<ClassLabel> try_label(std::string_view text)
{
    try {
        return parse_label(text);
    } catch (const UnknownLabel&) {
        return std::nullopt;
    }
}

inline std::vector<ManifestEntry> load_manifest_tree(const std::filesystem::path& root)
{
    std::vector<ManifestEntry> entries;
    for (const auto& item : std::filesystem::recursive_directory_iterator(root)) {
        if (!item.is_regular_file() || !is_image_file(item.path())) {
            continue;
        }
        const auto& p = item.path();
        auto label = try_label(p.parent_path().filename().string());
        if (!label) {
            // Flat layout: class encoded as a file name prefix, e.g. smoking_0001.jpg.
            const auto stem = p.stem().string();
            label = try_label(stem.substr(0, stem.find('_')));
        }
        if (!label) {
            throw UnknownLabel("cannot infer class of '" + p.string() + "'");
        }
        entries.push_back({p, *label});
    }
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.image_path < b.image_path; });
    return entries;
}

inline std::vector<ManifestEntry> load_manifest_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError(0, "cannot open manifest '" + path.string() + "'");
    }
    const auto base = path.parent_path();
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw ParseError(number, "expected 'path,label'");
        }
        const auto field = line.substr(0, comma);
        const auto label = line.substr(comma + 1);
        if (number == 1 && field == "path" && label == "label") {
            continue;
        }
        if (field.empty()) {
            throw ParseError(number, "empty path");
        }
        std::filesystem::path p(field);
        if (p.is_relative()) {
            p = base / p;
        }
        const auto parsed = try_label(label);
        if (!parsed) {
            throw UnknownLabel("line " + std::to_string(number) + ": unknown label '" + label + "'");
        }
        entries.push_back({p.lexically_normal(), *parsed});
    }
    return entries;
}

} // namespace detail

/** Reads a CSV manifest (`path,label`, paths relative to the file) or scans a
 *  dataset directory with one folder per class. */
inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path)
{
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
        return detail::load_manifest_tree(path);
    }
    return detail::load_manifest_csv(path);
}

/** Writes `path,label` with paths relative to the CSV's directory. */
inline void write_manifest_csv(std::span<const ManifestEntry> entries, const std::filesystem::path& path)
{
    const auto base = std::filesystem::absolute(path).parent_path();
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write manifest '" + path.string() + "'");
    }
    out << "path,label\n";
    for (const auto& e : entries) {
        const auto rel = std::filesystem::absolute(e.image_path).lexically_normal().lexically_relative(base);
        out << rel.generic_string() << ',' << to_int(e.ground_truth) << '\n';
    }
}

// Split ----------------------------------------------------------------------

struct SplitResult {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;
    std::vector<std::string> warnings;
};

namespace detail {

/** Uniform integer in [0, bound) from raw 64-bit draws. Written out so the
 *  sequence is identical across standard libraries. */
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) {
            return r % bound;
        }
    }
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = std::size_t(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace detail

/** Deterministic stratified split. |train| = round(ratio * N); per-class
 *  train counts are apportioned by largest remainder so each stays within one
 *  of ratio * class size. Both halves keep the manifest order. */
inline SplitResult split_train_test(std::span<const ManifestEntry> entries, double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("split ratio must lie strictly between 0 and 1");
    }
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        by_class[std::size_t(to_int(entries[i].ground_truth))].push_back(i);
    }

    const auto target = std::size_t(std::llround(ratio * double(entries.size())));
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double exact = ratio * double(by_class[c].size());
        quota[c] = std::size_t(std::floor(exact));
        remainder[c] = exact - double(quota[c]);
        assigned += quota[c];
    }
    // Hand the leftover slots to the classes with the largest remainders
    // (NonSmoker first on ties).
    std::array<std::size_t, 2> order{0, 1};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
        if (quota[order[k]] < by_class[order[k]].size()) {
            ++quota[order[k]];
            ++assigned;
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<bool> in_train(entries.size(), false);
    for (std::size_t c = 0; c < 2; ++c) {
        auto members = by_class[c];
        detail::shuffle(members, rng);
        for (std::size_t k = 0; k < quota[c]; ++k) {
            in_train[members[k]] = true;
        }
    }

    SplitResult out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        (in_train[i] ? out.train : out.test).push_back(entries[i]);
    }
    if (!entries.empty() && out.test.empty()) {
        out.warnings.push_back("test split is empty (" + std::to_string(entries.size()) + " entries)");
    }
    if (!entries.empty() && out.train.empty()) {
        out.warnings.push_back("train split is empty (" + std::to_string(entries.size()) + " entries)");
    }
    return out;
}

// Metrics --------------------------------------------------------------------

/** Binary confusion counts, Smoker being the positive class. */
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const noexcept { return tp + tn + fp + fn; }

    void add(ClassLabel truth, ClassLabel predicted) noexcept
    {
        if (predicted == ClassLabel::Smoker) {
            ++(truth == ClassLabel::Smoker ? tp : fp);
        } else {
            ++(truth == ClassLabel::Smoker ? fn : tn);
        }
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept
    {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/** A metric with a zero denominator is absent rather than zero. */
struct Metrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> accuracy;
};

inline Metrics compute_metrics(const ConfusionMatrix& m)
{
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) {
            return std::nullopt;
        }
        return double(num) / double(den);
    };
    return {ratio(m.tp, m.tp + m.fp), ratio(m.tp, m.tp + m.fn), ratio(m.tp + m.tn, m.total())};
}

namespace detail {

inline std::unordered_map<std::string, ClassLabel> truth_by_id(std::span<const ManifestEntry> truth)
{
    std::unordered_map<std::string, ClassLabel> by_id;
    for (const auto& e : truth) {
        const auto id = e.image_path.stem().string();
        const auto [it, inserted] = by_id.emplace(id, e.ground_truth);
        if (!inserted && it->second != e.ground_truth) {
            throw ValidationError("image id '" + id + "' appears with conflicting labels");
        }
    }
    return by_id;
}

} // namespace detail

/** Matches results to ground truth by image id (the file stem). */
inline ConfusionMatrix accumulate(std::span<const PipelineResult> results, std::span<const ManifestEntry> truth)
{
    const auto by_id = detail::truth_by_id(truth);
    ConfusionMatrix m;
    for (const auto& r : results) {
        const auto it = by_id.find(r.image_id);
        if (it == by_id.end()) {
            throw MissingTruth(r.image_id);
        }
        m.add(it->second, r.verdict);
    }
    return m;
}

/** Detector cost versus an always-on detector that runs once per image. */
struct GatingReport {
    std::uint64_t images = 0;
    std::uint64_t smoker_verdicts = 0;
    std::uint64_t detect_calls = 0;
    std::uint64_t saved_vs_always_on = 0;

    friend bool operator==(const GatingReport&, const GatingReport&) = default;
};

inline GatingReport gating_report(std::span<const PipelineResult> results)
{
    GatingReport g;
    for (const auto& r : results) {
        ++g.images;
        g.detect_calls += r.counters.detect_calls;
        if (r.verdict == ClassLabel::Smoker) {
            ++g.smoker_verdicts;
        }
    }
    g.saved_vs_always_on = g.images - g.smoker_verdicts;
    return g;
}

struct EvalReport {
    ConfusionMatrix matrix;
    Metrics metrics;
    GatingReport gating;
    std::uint64_t empty_proposal_count = 0;
    std::uint64_t failed_images = 0; ///< images that could not be processed at all
};

inline EvalReport make_report(std::span<const PipelineResult> results, std::span<const ManifestEntry> truth,
                              std::uint64_t failed_images = 0)
{
    EvalReport report;
    report.matrix = accumulate(results, truth);
    report.metrics = compute_metrics(report.matrix);
    report.gating = gating_report(results);
    report.empty_proposal_count = std::uint64_t(
        std::count_if(results.begin(), results.end(), [](const PipelineResult& r) { return r.empty_proposals; }));
    report.failed_images = failed_images;
    return report;
}

/** Percentage text with `decimals` digits, rounding the exact binary value
 *  half-to-even the way printf does: 0.985 -> "98" at zero decimals. */
inline std::string format_percent(double fraction, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, fraction * 100.0);
    return buf;
}

inline nlohmann::ordered_json to_json(const EvalReport& r)
{
    using nlohmann::ordered_json;
    auto metric = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json j;
    j["matrix"] = ordered_json{{"tp", r.matrix.tp}, {"tn", r.matrix.tn}, {"fp", r.matrix.fp}, {"fn", r.matrix.fn}};
    j["total"] = r.matrix.total();
    j["precision"] = metric(r.metrics.precision);
    j["recall"] = metric(r.metrics.recall);
    j["accuracy"] = metric(r.metrics.accuracy);
    j["images"] = r.gating.images;
    j["smoker_verdicts"] = r.gating.smoker_verdicts;
    j["total_detect_calls"] = r.gating.detect_calls;
    j["detect_calls_saved_vs_always_on"] = r.gating.saved_vs_always_on;
    j["empty_proposal_count"] = r.empty_proposal_count;
    j["failed_images"] = r.failed_images;
    return j;
}

/** Human-readable summary table. */
inline std::string format_report(const EvalReport& r)
{
    auto pct = [](const std::optional<double>& v) { return v ? format_percent(*v, 2) + "%" : std::string("n/a"); };
    std::ostringstream os;
    os << "Metric                     Value\n"
       << "-------------------------  ----------\n"
       << "Precision                  " << pct(r.metrics.precision) << '\n'
       << "Recall                     " << pct(r.metrics.recall) << '\n'
       << "Accuracy                   " << pct(r.metrics.accuracy) << '\n'
       << "True Positives             " << r.matrix.tp << '\n'
       << "True Negatives             " << r.matrix.tn << '\n'
       << "False Positives            " << r.matrix.fp << '\n'
       << "False Negatives            " << r.matrix.fn << '\n'
       << "Detector calls             " << r.gating.detect_calls << '\n'
       << "Calls saved vs always-on   " << r.gating.saved_vs_always_on << '\n'
       << "Images without proposals   " << r.empty_proposal_count << '\n';
    if (r.failed_images) {
        os << "Images failed              " << r.failed_images << '\n';
    }
    return os.str();
}

} // namespace cigdetect
