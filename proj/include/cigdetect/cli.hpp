// SPDX-License-Identifier: Apache-2.0
// Command implementations behind the `cigdetect` tool. Each command writes
// line-delimited JSON records to `out`, diagnostics to `err`, and returns the
// process exit code.

#pragma once

#include "cigdetect/evaluation.hpp"
#include "cigdetect/fixture_backend.hpp"
#include "cigdetect/pipeline.hpp"

#if defined(CIGDETECT_WITH_OPENCV)
#include "cigdetect/opencv_backend.hpp"
#endif

#include <charconv>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace cigdetect::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int decode_error = 2;
inline constexpr int backend_error = 3;
inline constexpr int manifest_error = 4;
} // namespace exit_code

struct CliConfig {
    std::string backend;  ///< "fixture:<path>" or "model:<dir>"
    PipelineConfig pipeline;
    std::optional<std::filesystem::path> out_dir;
    unsigned jobs = 1;
    std::uint64_t seed = 42;
    double ratio = 0.8;
    bool no_split = false;
};

/** "12" -> 12 px, "25%" -> 0.25 of the rule's basis dimension. */
inline DeltaTerm parse_delta_term(std::string_view text)
{
    const bool percent = !text.empty() && text.back() == '%';
    const auto digits = percent ? text.substr(0, text.size() - 1) : text;
    double value = 0;
    const auto* end = digits.data() + digits.size();
    const auto [ptr, ec] = std::from_chars(digits.data(), end, value);
    if (digits.empty() || ec != std::errc{} || ptr != end || !std::isfinite(value) || value < 0) {
        throw ConfigError("invalid adjustment delta '" + std::string(text) + "'");
    }
    return percent ? DeltaTerm{value / 100.0, true} : DeltaTerm{value, false};
}

inline BackendSuite open_backend(const std::string& spec)
{
    const auto colon = spec.find(':');
    if (spec.empty() || colon == std::string::npos) {
        throw ConfigError("--backend must be fixture:<path> or model:<dir>");
    }
    const auto kind = spec.substr(0, colon);
    const std::filesystem::path target = spec.substr(colon + 1);
    if (kind == "fixture") {
        return load_fixture_backend(target);
    }
    if (kind == "model") {
#if defined(CIGDETECT_WITH_OPENCV)
        return load_model_backend(target);
#else
        throw ConfigError("model backend not available: rebuild with -DCIGDETECT_WITH_OPENCV=ON");
#endif
    }
    throw ConfigError("unknown backend kind '" + kind + "'");
}

namespace detail {

/** Backend construction errors (bad fixture, missing model) map to exit 3. */
inline std::optional<BackendSuite> open_backend_or_report(const CliConfig& cfg, std::ostream& err)
{
    try {
        cfg.pipeline.validate();
        return open_backend(cfg.backend);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return std::nullopt;
    }
}

inline void write_failures(const PipelineResult& r, std::ostream& err)
{
    for (const auto& f : r.failures) {
        err << "warning: " << r.image_id << ": " << f.stage << ": " << f.detail << '\n';
    }
}

} // namespace detail

inline int cmd_classify(const std::filesystem::path& image_path, const CliConfig& cfg, std::ostream& out,
                        std::ostream& err)
{
    const auto suite = detail::open_backend_or_report(cfg, err);
    if (!suite) {
        return exit_code::backend_error;
    }
    try {
        const auto result = run_pipeline(decode(image_path), *suite, cfg.pipeline);
        detail::write_failures(result, err);
        out << serialize_result(result) << '\n';
        return exit_code::ok;
    } catch (const DecodeError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::decode_error;
    }
}

/** Runs the pipeline and writes the annotated PNG to `output`, or to
 *  `<out_dir>/<image id>_annotated.png` when `output` is empty. */
inline int cmd_detect(const std::filesystem::path& image_path, const CliConfig& cfg,
                      std::optional<std::filesystem::path> output, std::ostream& out, std::ostream& err)
{
    const auto suite = detail::open_backend_or_report(cfg, err);
    if (!suite) {
        return exit_code::backend_error;
    }
    try {
        const auto image = decode(image_path);
        const auto result = run_pipeline(image, *suite, cfg.pipeline);
        detail::write_failures(result, err);
        const auto target =
            output ? *output : cfg.out_dir.value_or(".") / (image.id() + "_annotated.png");
        if (target.has_parent_path()) {
            std::filesystem::create_directories(target.parent_path());
        }
        write_png(render_result(image, result).raster(), target);
        out << serialize_result(result) << '\n';
        err << "wrote " << target.string() << " (" << result.detections.size() << " detection(s))\n";
        return exit_code::ok;
    } catch (const DecodeError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::decode_error;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::backend_error;
    }
}

/** Evaluates the test portion of the manifest (or all of it with no_split).
 *  Per-image records go to `<out_dir>/results.jsonl` when an output directory
 *  is configured; the report JSON is the last stdout line. */
inline int cmd_evaluate(const std::filesystem::path& manifest_path, const CliConfig& cfg, std::ostream& out,
                        std::ostream& err)
{
    std::vector<ManifestEntry> entries;
    try {
        entries = load_manifest(manifest_path);
        if (!cfg.no_split) {
            auto split = split_train_test(entries, cfg.ratio, cfg.seed);
            for (const auto& w : split.warnings) {
                err << "warning: " << w << '\n';
            }
            entries = std::move(split.test);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::manifest_error;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::manifest_error;
    }
    if (entries.empty()) {
        err << "warning: nothing to evaluate\n";
    }

    const auto suite = detail::open_backend_or_report(cfg, err);
    if (!suite) {
        return exit_code::backend_error;
    }

    std::vector<std::filesystem::path> paths;
    for (const auto& e : entries) {
        paths.push_back(e.image_path);
    }
    const auto batch = run_batch(paths, *suite, cfg.pipeline, cfg.jobs);
    for (const auto& e : batch.errors) {
        err << "warning: skipped " << e.path.string() << ": " << e.detail << '\n';
    }

    EvalReport report;
    try {
        report = make_report(batch.results, entries, batch.errors.size());
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::manifest_error;
    }

    if (cfg.out_dir) {
        std::filesystem::create_directories(*cfg.out_dir);
        std::ofstream results(*cfg.out_dir / "results.jsonl");
        for (const auto& r : batch.results) {
            results << serialize_result(r) << '\n';
        }
        std::ofstream(*cfg.out_dir / "report.json") << to_json(report).dump(2) << '\n';
    }
    err << format_report(report);
    out << to_json(report).dump() << '\n';
    return exit_code::ok;
}

/** Writes `<out_dir>/train.csv` and `<out_dir>/test.csv`. */
inline int cmd_split(const std::filesystem::path& manifest_path, const CliConfig& cfg, std::ostream& out,
                     std::ostream& err)
{
    try {
        const auto entries = load_manifest(manifest_path);
        const auto split = split_train_test(entries, cfg.ratio, cfg.seed);
        for (const auto& w : split.warnings) {
            err << "warning: " << w << '\n';
        }
        const auto dir = cfg.out_dir.value_or(".");
        std::filesystem::create_directories(dir);
        write_manifest_csv(split.train, dir / "train.csv");
        write_manifest_csv(split.test, dir / "test.csv");
        nlohmann::ordered_json j;
        j["train"] = split.train.size();
        j["test"] = split.test.size();
        j["seed"] = cfg.seed;
        j["ratio"] = cfg.ratio;
        out << j.dump() << '\n';
        return exit_code::ok;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::manifest_error;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::manifest_error;
    }
}

} // namespace cigdetect::cli
