// SPDX-License-Identifier: Apache-2.0
// Two-stage smoking-behaviour pipeline:
//
//   face/hand proposals -> box adjustment -> clip + crop -> per-proposal
//   classification -> image verdict (max over labels) -> cigarette detection
//   only for smoker verdicts, full image first, then positive proposal crops.
//
// Backend failures never abort an image; they are recorded in the result.

#pragma once

#include "cigdetect/backends.hpp"
#include "cigdetect/geometry.hpp"
#include "cigdetect/image.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace cigdetect {

enum class Strategy {
    RoiPipeline,  ///< classify face/hand proposals
    RawImageOnly, ///< classify the whole image once
};

inline const char* strategy_name(Strategy s) noexcept
{
    return s == Strategy::RoiPipeline ? "roi" : "raw";
}

inline Strategy parse_strategy(std::string_view text)
{
    if (text == "roi") {
        return Strategy::RoiPipeline;
    }
    if (text == "raw") {
        return Strategy::RawImageOnly;
    }
    throw ConfigError("unknown strategy '" + std::string(text) + "' (expected roi or raw)");
}

/** One component of a delta rule: either absolute pixels or a fraction of
 *  the box dimension selected by the rule's basis. */
struct DeltaTerm {
    double value = 0.0;
    bool proportional = false;

    friend bool operator==(const DeltaTerm&, const DeltaTerm&) = default;
};

enum class DeltaBasis {
    PerAxis,    ///< horizontal term scales with width, vertical with height
    LongerSide, ///< both terms scale with max(width, height)
};

/** How to derive AdjustmentDeltas for a given raw box. */
struct DeltaRule {
    DeltaTerm horizontal;
    DeltaTerm vertical;
    DeltaBasis basis = DeltaBasis::PerAxis;

    static DeltaRule face_default() { return {{0.25, true}, {0.20, true}, DeltaBasis::PerAxis}; }
    static DeltaRule hand_default() { return {{0.15, true}, {0.15, true}, DeltaBasis::LongerSide}; }

    AdjustmentDeltas resolve(double width, double height) const
    {
        const double longer = std::max(width, height);
        const double h_base = basis == DeltaBasis::PerAxis ? width : longer;
        const double v_base = basis == DeltaBasis::PerAxis ? height : longer;
        return {horizontal.proportional ? horizontal.value * h_base : horizontal.value,
                vertical.proportional ? vertical.value * v_base : vertical.value};
    }

    friend bool operator==(const DeltaRule&, const DeltaRule&) = default;
};

struct PipelineConfig {
    DeltaRule face_deltas = DeltaRule::face_default();
    DeltaRule hand_deltas = DeltaRule::hand_default();
    double face_threshold = 0.5;
    double hand_threshold = 0.5;
    double cigarette_threshold = 0.5;
    Strategy strategy = Strategy::RoiPipeline;
    bool detection_fallback = true;
    /// Keep proposal pixels in the result (dropped by default to bound memory
    /// in batch runs).
    bool keep_crops = false;

    void validate() const
    {
        for (const double t : {face_threshold, hand_threshold, cigarette_threshold}) {
            if (!(t >= 0.0 && t <= 1.0)) {
                throw ConfigError("confidence threshold " + std::to_string(t) + " outside [0, 1]");
            }
        }
        for (const auto* rule : {&face_deltas, &hand_deltas}) {
            for (const auto& term : {rule->horizontal, rule->vertical}) {
                if (!std::isfinite(term.value) || term.value < 0) {
                    throw ConfigError("adjustment deltas must be finite and non-negative");
                }
            }
        }
    }
};

struct Proposal {
    ProposalKind kind;
    std::size_t index;      ///< position in the detector's output
    CornerBox raw_box;      ///< detector box in corner form
    CornerBox adjusted_box; ///< after adjustment and clipping
    CornerBox crop_box;     ///< rasterized pixel region actually cropped
    std::optional<PixelRegion> crop;
    std::optional<ClassLabel> label;
    std::optional<double> score;

    ProposalKey key() const { return {kind, index}; }
};

struct Counters {
    std::size_t face_calls = 0;
    std::size_t hand_calls = 0;
    std::size_t classify_calls = 0;
    std::size_t detect_calls = 0;

    friend bool operator==(const Counters&, const Counters&) = default;
};

struct FailureRecord {
    std::string stage;
    std::string detail;

    friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

struct PipelineResult {
    std::string image_id;
    ClassLabel verdict = ClassLabel::NonSmoker;
    Strategy strategy = Strategy::RoiPipeline;
    /// RoiPipeline found no usable proposal; the verdict defaulted to NonSmoker.
    bool empty_proposals = false;
    std::vector<Proposal> proposals;
    std::vector<std::size_t> positive_indices;
    std::vector<Detection> detections;
    Counters counters;
    std::vector<FailureRecord> failures;
};

/** Counters and failures accumulated while processing one image. */
struct StageLog {
    Counters counters;
    std::vector<FailureRecord> failures;
};

/** Image verdict: the maximum over 0/1 labels, NonSmoker for no labels. */
inline ClassLabel aggregate_labels(std::span<const ClassLabel> labels)
{
    ClassLabel verdict = ClassLabel::NonSmoker;
    for (const auto l : labels) {
        verdict = std::max(verdict, l);
    }
    return verdict;
}

namespace detail {

/** Runs `call`, turning any exception into a failure record. */
template <typename F>
auto guarded(StageLog& log, const std::string& stage, F&& call) -> std::optional<decltype(call())>
{
    try {
        return call();
    } catch (const std::exception& e) {
        log.failures.push_back({stage, e.what()});
        return std::nullopt;
    }
}

inline std::optional<Proposal> make_proposal(const ImageRef& image, ProposalKind kind, std::size_t index,
                                             const CornerBox& raw, const CornerBox& adjusted, StageLog& log)
{
    const ProposalKey key{kind, index};
    try {
        auto region = crop(image, adjusted, key);
        const auto clipped = clip_to_extent(adjusted, image.extent());
        return Proposal{kind, index, raw, clipped, region.box, std::move(region), std::nullopt, std::nullopt};
    } catch (const EmptyIntersection& e) {
        log.failures.push_back({"clip:" + to_string(key), e.what()});
        return std::nullopt;
    }
}

} // namespace detail

/** Queries both region detectors, adjusts every box, clips it to the image
 *  and crops it. Faces come first, then hands, each in detector order.
 *  Proposals that vanish after clipping are logged and dropped. */
inline std::vector<Proposal> extract_proposals(const ImageRef& image, const BackendSuite& suite,
                                               const PipelineConfig& cfg, StageLog& log)
{
    std::vector<Proposal> proposals;

    ++log.counters.face_calls;
    const auto faces = detail::guarded(log, "detect_faces", [&] {
        return suite.face_detector->detect_faces(image, cfg.face_threshold);
    });
    if (faces) {
        for (std::size_t i = 0; i < faces->size(); ++i) {
            const auto& raw = (*faces)[i].box;
            const auto adjusted = adjust_face_box(raw, cfg.face_deltas.resolve(raw.w(), raw.h()));
            if (auto p = detail::make_proposal(image, ProposalKind::Face, i, center_to_corner(raw),
                                               center_to_corner(adjusted), log)) {
                proposals.push_back(std::move(*p));
            }
        }
    }

    ++log.counters.hand_calls;
    const auto hands = detail::guarded(log, "detect_hands", [&] {
        return suite.hand_detector->detect_hands(image, cfg.hand_threshold);
    });
    if (hands) {
        for (std::size_t i = 0; i < hands->size(); ++i) {
            const auto& raw = (*hands)[i].box;
            const auto adjusted = adjust_hand_box(raw, cfg.hand_deltas.resolve(raw.width(), raw.height()));
            if (auto p = detail::make_proposal(image, ProposalKind::Hand, i, raw, adjusted, log)) {
                proposals.push_back(std::move(*p));
            }
        }
    }
    return proposals;
}

inline std::vector<Proposal> extract_proposals(const ImageRef& image, const BackendSuite& suite,
                                               const PipelineConfig& cfg)
{
    StageLog log;
    return extract_proposals(image, suite, cfg, log);
}

namespace detail {

/** One detector pass over `region`; boxes are moved into image coordinates
 *  and clipped. */
inline std::vector<Detection> detect_in(const ImageRef& image, const PixelRegion& region, DetectionSource source,
                                        const BackendSuite& suite, const PipelineConfig& cfg, StageLog& log)
{
    const std::string stage = source.is_full_image() ? std::string("detect:full")
                                                     : "detect:" + to_string(*region.origin);
    ++log.counters.detect_calls;
    const auto found = guarded(log, stage, [&] {
        return suite.cigarette_detector->detect_cigarettes(region, cfg.cigarette_threshold);
    });
    std::vector<Detection> out;
    if (!found) {
        return out;
    }
    for (const auto& d : *found) {
        try {
            const auto box = clip_to_extent(d.box.translated(region.box.x1(), region.box.y1()), image.extent());
            out.push_back({box, d.confidence, source});
        } catch (const EmptyIntersection& e) {
            log.failures.push_back({stage, e.what()});
        }
    }
    return out;
}

} // namespace detail

inline PipelineResult run_pipeline(const ImageRef& image, const BackendSuite& suite, const PipelineConfig& cfg)
{
    suite.validate();
    cfg.validate();
    PipelineResult result;
    result.image_id = image.id();
    result.strategy = cfg.strategy;
    StageLog log;

    if (cfg.strategy == Strategy::RoiPipeline) {
        result.proposals = extract_proposals(image, suite, cfg, log);
        std::vector<ClassLabel> labels;
        for (auto& p : result.proposals) {
            ++log.counters.classify_calls;
            const auto out = detail::guarded(log, "classify:" + to_string(p.key()),
                                             [&] { return suite.proposal_classifier->classify_proposal(*p.crop); });
            if (out) {
                p.label = out->label;
                p.score = out->score;
            } else {
                p.label = ClassLabel::NonSmoker;
            }
            labels.push_back(*p.label);
        }
        result.empty_proposals = result.proposals.empty();
        result.verdict = aggregate_labels(labels);
    } else {
        ++log.counters.classify_calls;
        const auto out = detail::guarded(
            log, "classify:image", [&] { return suite.proposal_classifier->classify_proposal(full_region(image)); });
        result.verdict = out ? out->label : ClassLabel::NonSmoker;
    }

    for (std::size_t i = 0; i < result.proposals.size(); ++i) {
        if (result.proposals[i].label == ClassLabel::Smoker) {
            result.positive_indices.push_back(i);
        }
    }

    if (result.verdict == ClassLabel::Smoker) {
        result.detections =
            detail::detect_in(image, full_region(image), DetectionSource::full_image(), suite, cfg, log);
        if (result.detections.empty() && cfg.detection_fallback) {
            for (std::size_t k = 0; k < result.positive_indices.size(); ++k) {
                const auto& p = result.proposals[result.positive_indices[k]];
                auto found = detail::detect_in(image, *p.crop, DetectionSource::proposal(k), suite, cfg, log);
                result.detections.insert(result.detections.end(), found.begin(), found.end());
            }
        }
    }

    if (!cfg.keep_crops) {
        for (auto& p : result.proposals) {
            p.crop.reset();
        }
    }
    result.counters = log.counters;
    result.failures = std::move(log.failures);
    return result;
}

// Batch ----------------------------------------------------------------------

struct BatchError {
    std::size_t position; ///< index into the input list
    std::filesystem::path path;
    std::string detail;
};

struct BatchOutcome {
    std::vector<PipelineResult> results; ///< input order, failed images omitted
    std::vector<BatchError> errors;
};

/** Decodes and processes every image. Parallel only when `jobs > 1` and all
 *  backends are concurrent-safe; output order never depends on scheduling. */
inline BatchOutcome run_batch(std::span<const std::filesystem::path> images, const BackendSuite& suite,
                              const PipelineConfig& cfg, unsigned jobs = 1)
{
    suite.validate();
    cfg.validate();
    struct Slot {
        std::optional<PipelineResult> result;
        std::optional<std::string> error;
    };
    std::vector<Slot> slots(images.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= images.size()) {
                return;
            }
            try {
                slots[i].result = run_pipeline(decode(images[i]), suite, cfg);
            } catch (const std::exception& e) {
                slots[i].error = e.what();
            }
        }
    };

    const unsigned workers = suite.concurrent_safe() ? std::max(1u, std::min<unsigned>(jobs, unsigned(images.size()))) : 1u;
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < workers; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }

    BatchOutcome outcome;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].result) {
            outcome.results.push_back(std::move(*slots[i].result));
        } else {
            outcome.errors.push_back({i, images[i], slots[i].error.value_or("unknown error")});
        }
    }
    return outcome;
}

// Serialization --------------------------------------------------------------

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson box_json(const CornerBox& b) { return ojson::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

inline CornerBox box_from_json(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 4) {
        throw ParseError(0, "box must be a 4-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline std::string source_name(const DetectionSource& s)
{
    return s.is_full_image() ? std::string("full") : "proposal:" + std::to_string(*s.positive_index);
}

inline DetectionSource parse_source(const std::string& text)
{
    if (text == "full") {
        return DetectionSource::full_image();
    }
    static constexpr std::string_view prefix = "proposal:";
    if (text.starts_with(prefix)) {
        return DetectionSource::proposal(std::stoul(text.substr(prefix.size())));
    }
    throw ParseError(0, "unknown detection source '" + text + "'");
}

} // namespace detail

/** JSON record with a fixed key order. Pixels are never serialized. */
inline nlohmann::ordered_json to_json(const PipelineResult& r)
{
    using detail::ojson;
    ojson proposals = ojson::array();
    for (const auto& p : r.proposals) {
        ojson jp;
        jp["kind"] = kind_name(p.kind);
        jp["index"] = p.index;
        jp["raw_box"] = detail::box_json(p.raw_box);
        jp["adjusted_box"] = detail::box_json(p.adjusted_box);
        jp["crop_box"] = detail::box_json(p.crop_box);
        jp["label"] = p.label ? ojson(to_int(*p.label)) : ojson(nullptr);
        jp["score"] = p.score ? ojson(*p.score) : ojson(nullptr);
        proposals.push_back(std::move(jp));
    }
    ojson detections = ojson::array();
    for (const auto& d : r.detections) {
        ojson jd;
        jd["box"] = detail::box_json(d.box);
        jd["conf"] = d.confidence;
        jd["source"] = detail::source_name(d.source);
        detections.push_back(std::move(jd));
    }
    ojson failures = ojson::array();
    for (const auto& f : r.failures) {
        failures.push_back(ojson{{"stage", f.stage}, {"detail", f.detail}});
    }

    ojson j;
    j["image_id"] = r.image_id;
    j["verdict"] = to_int(r.verdict);
    j["strategy"] = strategy_name(r.strategy);
    j["empty_proposals"] = r.empty_proposals;
    j["proposals"] = std::move(proposals);
    j["positive_indices"] = r.positive_indices;
    j["detections"] = std::move(detections);
    j["counters"] = ojson{{"face_calls", r.counters.face_calls},
                          {"hand_calls", r.counters.hand_calls},
                          {"classify_calls", r.counters.classify_calls},
                          {"detect_calls", r.counters.detect_calls}};
    j["failures"] = std::move(failures);
    return j;
}

/** Single-line serialization used for stdout records and golden files. */
inline std::string serialize_result(const PipelineResult& r) { return to_json(r).dump(); }

/** Inverse of to_json (proposal pixels are not restored). */
inline PipelineResult result_from_json(const nlohmann::json& j)
{
    try {
        PipelineResult r;
        r.image_id = j.at("image_id").get<std::string>();
        r.verdict = j.at("verdict").get<int>() ? ClassLabel::Smoker : ClassLabel::NonSmoker;
        r.strategy = parse_strategy(j.at("strategy").get<std::string>());
        r.empty_proposals = j.at("empty_proposals").get<bool>();
        for (const auto& jp : j.at("proposals")) {
            const auto kind = jp.at("kind").get<std::string>() == "face" ? ProposalKind::Face : ProposalKind::Hand;
            Proposal p{kind,
                       jp.at("index").get<std::size_t>(),
                       detail::box_from_json(jp.at("raw_box")),
                       detail::box_from_json(jp.at("adjusted_box")),
                       detail::box_from_json(jp.at("crop_box")),
                       std::nullopt,
                       std::nullopt,
                       std::nullopt};
            if (!jp.at("label").is_null()) {
                p.label = jp.at("label").get<int>() ? ClassLabel::Smoker : ClassLabel::NonSmoker;
            }
            if (!jp.at("score").is_null()) {
                p.score = jp.at("score").get<double>();
            }
            r.proposals.push_back(std::move(p));
        }
        r.positive_indices = j.at("positive_indices").get<std::vector<std::size_t>>();
        for (const auto& jd : j.at("detections")) {
            r.detections.push_back({detail::box_from_json(jd.at("box")), jd.at("conf").get<double>(),
                                    detail::parse_source(jd.at("source").get<std::string>())});
        }
        const auto& c = j.at("counters");
        r.counters = {c.at("face_calls").get<std::size_t>(), c.at("hand_calls").get<std::size_t>(),
                      c.at("classify_calls").get<std::size_t>(), c.at("detect_calls").get<std::size_t>()};
        for (const auto& f : j.at("failures")) {
            r.failures.push_back({f.at("stage").get<std::string>(), f.at("detail").get<std::string>()});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed result record: ") + e.what());
    }
}

inline PipelineResult parse_result(const std::string& line)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(0, e.what());
    }
    return result_from_json(j);
}

/** Annotated copy of `image` for a finished result. */
inline ImageRef render_result(const ImageRef& image, const PipelineResult& r)
{
    std::vector<RegionOverlay> overlays;
    for (const auto& p : r.proposals) {
        overlays.push_back({p.kind, p.adjusted_box});
    }
    std::vector<CornerBox> boxes;
    for (const auto& d : r.detections) {
        boxes.push_back(d.box);
    }
    return render_annotations(image, overlays, boxes, r.verdict);
}

} // namespace cigdetect
