// SPDX-License-Identifier: Apache-2.0

#include "cigdetect/cli.hpp"
#include "support/test_support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace cigdetect;
using cigdetect::testing::golden_dir;
using cigdetect::testing::TempDir;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

/** Runs the built executable through the shell; stdout is captured, stderr discarded. */
Run run_cli(const std::string& args)
{
    const std::string command = std::string("'") + CIGDETECT_CLI + "' " + args + " 2>/dev/null";
    Run run;
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) {
        return run;
    }
    std::array<char, 4096> buf{};
    while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) {
        run.out.append(buf.data(), n);
    }
    const int raw = pclose(pipe);
    run.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return run;
}

std::string fixture_flag() { return "--backend 'fixture:" + (golden_dir() / "fixture.jsonl").string() + "'"; }

std::string image(const char* name) { return "'" + (golden_dir() / "images" / name).string() + "'"; }

cli::CliConfig fixture_config()
{
    cli::CliConfig cfg;
    cfg.backend = "fixture:" + (golden_dir() / "fixture.jsonl").string();
    return cfg;
}

std::string last_line(const std::string& text)
{
    auto end = text.find_last_not_of('\n');
    if (end == std::string::npos) {
        return {};
    }
    const auto start = text.rfind('\n', end);
    return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

} // namespace

TEST(ParseDeltaTerm, PixelsAndPercent)
{
    EXPECT_EQ(cli::parse_delta_term("12"), (DeltaTerm{12, false}));
    EXPECT_EQ(cli::parse_delta_term("25%"), (DeltaTerm{0.25, true}));
    EXPECT_EQ(cli::parse_delta_term("0"), (DeltaTerm{0, false}));
    for (const char* bad : {"", "%", "-3", "abc", "5px", "nan"}) {
        EXPECT_THROW(cli::parse_delta_term(bad), ConfigError) << bad;
    }
}

TEST(OpenBackend, RejectsUnknownSpecs)
{
    EXPECT_THROW(cli::open_backend(""), ConfigError);
    EXPECT_THROW(cli::open_backend("magic:x"), ConfigError);
    EXPECT_THROW(cli::open_backend("fixture:/no/such/file.jsonl"), ParseError);
#if !defined(CIGDETECT_WITH_OPENCV)
    EXPECT_THROW(cli::open_backend("model:/tmp"), ConfigError);
#endif
}

TEST(CmdClassify, SmokerAndNonSmoker)
{
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_classify(golden_dir() / "images" / "img02.png", fixture_config(), out, err), 0);
    const auto smoker = parse_result(out.str());
    EXPECT_EQ(smoker.verdict, ClassLabel::Smoker);
    EXPECT_EQ(smoker.detections.size(), 1u);

    std::ostringstream out2;
    EXPECT_EQ(cli::cmd_classify(golden_dir() / "images" / "img01.png", fixture_config(), out2, err), 0);
    const auto clean = parse_result(out2.str());
    EXPECT_EQ(clean.verdict, ClassLabel::NonSmoker);
    EXPECT_EQ(clean.counters.detect_calls, 0u);
}

TEST(CmdClassify, ErrorsMapToExitCodes)
{
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_classify("/no/such.png", fixture_config(), out, err), cli::exit_code::decode_error);
    EXPECT_NE(err.str().find("error:"), std::string::npos);

    auto cfg = fixture_config();
    cfg.backend = "fixture:/no/such.jsonl";
    EXPECT_EQ(cli::cmd_classify(golden_dir() / "images" / "img01.png", cfg, out, err), cli::exit_code::backend_error);

    cfg = fixture_config();
    cfg.pipeline.face_threshold = 2;
    EXPECT_EQ(cli::cmd_classify(golden_dir() / "images" / "img01.png", cfg, out, err), cli::exit_code::backend_error);
    EXPECT_TRUE(out.str().empty());
}

TEST(CmdClassify, UnknownImageIsRecordedNotFatal)
{
    TempDir dir("unknown");
    write_png(cigdetect::testing::pattern_raster(8, 8), dir.path() / "stranger.png");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_classify(dir.path() / "stranger.png", fixture_config(), out, err), 0);
    const auto r = parse_result(out.str());
    EXPECT_EQ(r.verdict, ClassLabel::NonSmoker);
    EXPECT_FALSE(r.failures.empty());
    EXPECT_NE(err.str().find("warning:"), std::string::npos);
}

TEST(CmdDetect, WritesAnnotatedPng)
{
    TempDir dir("detect");
    auto cfg = fixture_config();
    cfg.out_dir = dir.path();
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_detect(golden_dir() / "images" / "img02.png", cfg, std::nullopt, out, err), 0);
    const auto png = dir.path() / "img02_annotated.png";
    ASSERT_TRUE(std::filesystem::exists(png));
    const auto annotated = decode(png);
    EXPECT_EQ(annotated.raster().at(85, 70), palette::detection);
    EXPECT_EQ(annotated.raster().at(0, 0), palette::banner_smoker);

    const auto explicit_path = dir.path() / "nested" / "x.png";
    ASSERT_EQ(cli::cmd_detect(golden_dir() / "images" / "img01.png", cfg, explicit_path, out, err), 0);
    EXPECT_EQ(decode(explicit_path).raster().at(0, 0), palette::banner_nonsmoker);
}

TEST(CmdEvaluate, GoldenManifestWithoutSplit)
{
    TempDir dir("evaluate");
    auto cfg = fixture_config();
    cfg.no_split = true;
    cfg.out_dir = dir.path();
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_evaluate(golden_dir() / "manifest.csv", cfg, out, err), 0) << err.str();
    const auto j = nlohmann::json::parse(last_line(out.str()));
    EXPECT_EQ(j["matrix"]["tp"], 4);
    EXPECT_EQ(j["matrix"]["tn"], 4);
    EXPECT_EQ(j["matrix"]["fp"], 1);
    EXPECT_EQ(j["matrix"]["fn"], 1);
    EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.8);
    EXPECT_EQ(j["total_detect_calls"], 7);
    EXPECT_EQ(j["detect_calls_saved_vs_always_on"], 5);
    EXPECT_EQ(j["empty_proposal_count"], 2);
    EXPECT_NE(err.str().find("Accuracy                   80.00%"), std::string::npos);

    std::ifstream results(dir.path() / "results.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(results, line)) {
        EXPECT_NO_THROW(parse_result(line));
        ++lines;
    }
    EXPECT_EQ(lines, 10);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "report.json"));
}

TEST(CmdEvaluate, ManifestProblemsExitFour)
{
    TempDir dir("badmanifest");
    std::ofstream(dir.path() / "m.csv") << "path,label\nimg.png,maybe\n";
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_evaluate(dir.path() / "m.csv", fixture_config(), out, err), cli::exit_code::manifest_error);
    EXPECT_EQ(cli::cmd_evaluate(dir.path() / "missing.csv", fixture_config(), out, err), cli::exit_code::manifest_error);
}

TEST(CmdEvaluate, UndecodableEntriesAreCounted)
{
    TempDir dir("partial");
    std::ofstream(dir.path() / "img01.png") << "broken";
    std::ofstream(dir.path() / "m.csv") << "path,label\nimg01.png,0\n" << (golden_dir() / "images" / "img02.png").string()
                                        << ",1\n";
    auto cfg = fixture_config();
    cfg.no_split = true;
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_evaluate(dir.path() / "m.csv", cfg, out, err), 0);
    const auto j = nlohmann::json::parse(last_line(out.str()));
    EXPECT_EQ(j["failed_images"], 1);
    EXPECT_EQ(j["images"], 1);
    EXPECT_NE(err.str().find("skipped"), std::string::npos);
}

TEST(CmdSplit, WritesBothHalves)
{
    TempDir dir("split");
    auto cfg = fixture_config();
    cfg.out_dir = dir.path();
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_split(golden_dir() / "manifest.csv", cfg, out, err), 0);
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j["train"], 8);
    EXPECT_EQ(j["test"], 2);
    EXPECT_EQ(load_manifest(dir.path() / "train.csv").size(), 8u);
    const auto test = load_manifest(dir.path() / "test.csv");
    ASSERT_EQ(test.size(), 2u);
    EXPECT_TRUE(std::filesystem::exists(test[0].image_path));
}

// Subprocess runs of the installed binary ----------------------------------------

TEST(Executable, ClassifySmokerAndNonSmoker)
{
    const auto smoker = run_cli(fixture_flag() + " classify " + image("img02.png"));
    EXPECT_EQ(smoker.status, 0);
    EXPECT_NE(smoker.out.find("\"verdict\":1"), std::string::npos);

    const auto clean = run_cli(fixture_flag() + " classify " + image("img01.png"));
    EXPECT_EQ(clean.status, 0);
    EXPECT_NE(clean.out.find("\"verdict\":0"), std::string::npos);
    EXPECT_NE(clean.out.find("\"detect_calls\":0"), std::string::npos);
}

TEST(Executable, ExitCodes)
{
    EXPECT_EQ(run_cli(fixture_flag() + " classify /no/such/image.png").status, 2);
    EXPECT_EQ(run_cli("--backend nope classify " + image("img01.png")).status, 3);
    EXPECT_EQ(run_cli("classify " + image("img01.png")).status, 3);
    EXPECT_EQ(run_cli(fixture_flag() + " --face-dh 5px classify " + image("img01.png")).status, 3);
    EXPECT_EQ(run_cli(fixture_flag() + " evaluate /no/such/manifest.csv").status, 4);
    EXPECT_EQ(run_cli("--help").status, 0);
}

TEST(Executable, RawStrategyFlag)
{
    const auto raw = run_cli(fixture_flag() + " --strategy raw classify " + image("img04.png"));
    ASSERT_EQ(raw.status, 0);
    const auto r = parse_result(last_line(raw.out));
    EXPECT_EQ(r.strategy, Strategy::RawImageOnly);
    EXPECT_EQ(r.verdict, ClassLabel::Smoker);
}

TEST(Executable, ConfigFileWithFlagOverride)
{
    TempDir dir("config");
    const auto conf = dir.path() / "run.toml";
    std::ofstream(conf) << "backend = \"fixture:" << (golden_dir() / "fixture.jsonl").string() << "\"\n"
                        << "hand-threshold = 0.9\n";
    // hand confidence 0.8 in img02 falls below 0.9 from the file
    auto r = parse_result(last_line(run_cli("--config '" + conf.string() + "' classify " + image("img02.png")).out));
    EXPECT_EQ(r.proposals.size(), 1u);

    r = parse_result(
        last_line(run_cli("--config '" + conf.string() + "' --hand-threshold 0.5 classify " + image("img02.png")).out));
    EXPECT_EQ(r.proposals.size(), 2u);
}

TEST(Executable, DeltaFlagsChangeAdjustedBoxes)
{
    // face (80,50,40,40) with 10 px deltas: centre (80,60), 50x40 -> (55,40)-(105,80)
    const auto run = run_cli(fixture_flag() + " --face-dh 10 --face-dv 10 classify " + image("img01.png"));
    ASSERT_EQ(run.status, 0);
    const auto r = parse_result(last_line(run.out));
    ASSERT_EQ(r.proposals.size(), 1u);
    EXPECT_EQ(r.proposals[0].adjusted_box, CornerBox(55, 40, 105, 80));
}

TEST(Executable, DetectAndSplit)
{
    TempDir dir("exe");
    const auto out_png = dir.path() / "a.png";
    ASSERT_EQ(run_cli(fixture_flag() + " detect " + image("img08.jpg") + " -o '" + out_png.string() + "'").status, 0);
    EXPECT_EQ(decode(out_png).raster().at(52, 40), palette::detection);

    const auto split = run_cli("--out '" + dir.path().string() + "' split '" + (golden_dir() / "manifest.csv").string() + "'");
    ASSERT_EQ(split.status, 0);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "train.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "test.csv"));
}
