// SPDX-License-Identifier: Apache-2.0
// cigdetect: smoking-behaviour classification with gated cigarette detection.

#include "cigdetect/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace cigdetect;

int main(int argc, char** argv)
{
    CLI::App app{"Smoking-behaviour classification with conditional cigarette detection"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML-style key = value file mirroring the long flags");

    cli::CliConfig cfg;
    std::string face_dh, face_dv, hand_dh, hand_dv;
    std::string strategy = "roi";
    std::string out_dir;
    bool no_fallback = false;

    app.add_option("--backend", cfg.backend, "fixture:<path> or model:<dir>");
    app.add_option("--face-dh", face_dh, "face horizontal delta: pixels, or N% of box width");
    app.add_option("--face-dv", face_dv, "face vertical delta: pixels, or N% of box height");
    app.add_option("--hand-dh", hand_dh, "hand horizontal delta: pixels, or N% of the longer side");
    app.add_option("--hand-dv", hand_dv, "hand vertical delta: pixels, or N% of the longer side");
    app.add_option("--face-threshold", cfg.pipeline.face_threshold, "minimum face confidence")
        ->capture_default_str();
    app.add_option("--hand-threshold", cfg.pipeline.hand_threshold, "minimum hand confidence")
        ->capture_default_str();
    app.add_option("--cigarette-threshold", cfg.pipeline.cigarette_threshold, "minimum cigarette confidence")
        ->capture_default_str();
    app.add_option("--strategy", strategy, "roi (proposal classification) or raw (whole image)")
        ->check(CLI::IsMember({"roi", "raw"}))
        ->capture_default_str();
    app.add_flag("--no-fallback", no_fallback, "skip detection on positive proposals after an empty first pass");
    app.add_option("--jobs", cfg.jobs, "parallel images in batch runs")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--seed", cfg.seed, "split seed")->capture_default_str();
    app.add_option("--out", out_dir, "output directory");

    std::string image_path;
    std::string manifest_path;
    std::string output_png;

    auto* classify = app.add_subcommand("classify", "classify one image and print its result record");
    classify->add_option("image", image_path, "PNG or JPEG file")->required();

    auto* detect = app.add_subcommand("detect", "classify, detect and write an annotated PNG");
    detect->add_option("image", image_path, "PNG or JPEG file")->required();
    detect->add_option("-o,--output", output_png, "annotated PNG path (default <out>/<id>_annotated.png)");

    auto* evaluate = app.add_subcommand("evaluate", "batch-evaluate a manifest and print the report");
    evaluate->add_option("manifest", manifest_path, "CSV manifest or dataset directory")->required();
    evaluate->add_flag("--no-split", cfg.no_split, "evaluate every entry instead of the test split");
    evaluate->add_option("--ratio", cfg.ratio, "train fraction")->capture_default_str();

    auto* split = app.add_subcommand("split", "write stratified train/test manifests");
    split->add_option("manifest", manifest_path, "CSV manifest or dataset directory")->required();
    split->add_option("--ratio", cfg.ratio, "train fraction")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::exit_code::backend_error;
    }

    try {
        auto set_term = [](const std::string& text, DeltaTerm& term) {
            if (!text.empty()) {
                term = cli::parse_delta_term(text);
            }
        };
        set_term(face_dh, cfg.pipeline.face_deltas.horizontal);
        set_term(face_dv, cfg.pipeline.face_deltas.vertical);
        set_term(hand_dh, cfg.pipeline.hand_deltas.horizontal);
        set_term(hand_dv, cfg.pipeline.hand_deltas.vertical);
        cfg.pipeline.strategy = parse_strategy(strategy);
        cfg.pipeline.detection_fallback = !no_fallback;
        if (!out_dir.empty()) {
            cfg.out_dir = out_dir;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::exit_code::backend_error;
    }

    if (*classify) {
        return cli::cmd_classify(image_path, cfg, std::cout, std::cerr);
    }
    if (*detect) {
        std::optional<std::filesystem::path> target;
        if (!output_png.empty()) {
            target = output_png;
        }
        return cli::cmd_detect(image_path, cfg, target, std::cout, std::cerr);
    }
    if (*evaluate) {
        return cli::cmd_evaluate(manifest_path, cfg, std::cout, std::cerr);
    }
    return cli::cmd_split(manifest_path, cfg, std::cout, std::cerr);
}
