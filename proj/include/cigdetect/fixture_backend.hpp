// SPDX-License-Identifier: Apache-2.0
// Deterministic backend that replays annotation files.
//
// File format: UTF-8, one JSON object per line, blank lines ignored.
//
//   {"image_id": "img01",
//    "faces":  [{"cx": 80, "cy": 50, "w": 40, "h": 40, "conf": 0.95}],
//    "hands":  [{"x1": 10, "y1": 10, "x2": 30, "y2": 40, "conf": 0.9}],
//    "labels": {"face:0": 1, "hand:0": 0, "image": 0},
//    "det_full": [{"x1": 85, "y1": 70, "x2": 100, "y2": 75, "conf": 0.88}],
//    "det_prop": {"hand:0": [{"x1": 5, "y1": 5, "x2": 20, "y2": 10, "conf": 0.7}]}}
//
// Proposal keys index the "faces"/"hands" arrays as written. Label values are
// smoker scores in [0, 1] (0 and 1 being the plain labels); "image" is the
// whole-image label used when proposal extraction is skipped. Detection
// boxes are local to the queried region. Unknown keys are ignored.

#pragma once

#include "cigdetect/backends.hpp"
#include "cigdetect/error.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cigdetect {

struct FixtureDetection {
    CornerBox box;
    double confidence;
};

/** One image's worth of annotations. */
struct FixtureRecord {
    std::string image_id;
    std::vector<FaceProposalRaw> faces;
    std::vector<HandProposalRaw> hands;
    std::map<ProposalKey, double> proposal_scores;
    std::optional<double> image_score;
    std::vector<FixtureDetection> detections_full;
    std::map<ProposalKey, std::vector<FixtureDetection>> detections_per_proposal;
};

namespace detail {

using nlohmann::json;

inline double number_field(const json& obj, const char* key, std::size_t line)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) {
        throw ParseError(line, std::string("missing or non-numeric field '") + key + "'");
    }
    return it->get<double>();
}

inline const json* optional_field(const json& obj, const char* key, json::value_t type, std::size_t line)
{
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return nullptr;
    }
    if (it->type() != type) {
        throw ParseError(line, std::string("field '") + key + "' has the wrong type");
    }
    return &*it;
}

inline FixtureDetection parse_fixture_detection(const json& j, std::size_t line)
{
    if (!j.is_object()) {
        throw ParseError(line, "detection entry must be an object");
    }
    FixtureDetection d{CornerBox(number_field(j, "x1", line), number_field(j, "y1", line),
                                 number_field(j, "x2", line), number_field(j, "y2", line)),
                       number_field(j, "conf", line)};
    validate_confidence(d.confidence);
    return d;
}

inline std::vector<FixtureDetection> parse_fixture_detections(const json& arr, std::size_t line)
{
    if (!arr.is_array()) {
        throw ParseError(line, "detection list must be an array");
    }
    std::vector<FixtureDetection> out;
    for (const auto& d : arr) {
        out.push_back(parse_fixture_detection(d, line));
    }
    return out;
}

} // namespace detail

/** Parses one fixture line. `line` is used in error messages only. */
inline FixtureRecord parse_fixture_record(const std::string& text, std::size_t line = 0)
{
    using detail::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(line, e.what());
    }
    if (!j.is_object()) {
        throw ParseError(line, "record must be a JSON object");
    }
    const auto id = j.find("image_id");
    if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
        throw ParseError(line, "missing or empty 'image_id'");
    }

    try {
        FixtureRecord rec{id->get<std::string>(), {}, {}, {}, std::nullopt, {}, {}};
        if (const auto* faces = detail::optional_field(j, "faces", json::value_t::array, line)) {
            for (const auto& f : *faces) {
                FaceProposalRaw p{CenterBox(detail::number_field(f, "cx", line), detail::number_field(f, "cy", line),
                                            detail::number_field(f, "w", line), detail::number_field(f, "h", line)),
                                  detail::number_field(f, "conf", line)};
                validate_confidence(p.confidence);
                rec.faces.push_back(p);
            }
        }
        if (const auto* hands = detail::optional_field(j, "hands", json::value_t::array, line)) {
            for (const auto& h : *hands) {
                HandProposalRaw p{CornerBox(detail::number_field(h, "x1", line), detail::number_field(h, "y1", line),
                                            detail::number_field(h, "x2", line), detail::number_field(h, "y2", line)),
                                  detail::number_field(h, "conf", line)};
                validate_confidence(p.confidence);
                rec.hands.push_back(p);
            }
        }
        if (const auto* labels = detail::optional_field(j, "labels", json::value_t::object, line)) {
            for (const auto& [key, value] : labels->items()) {
                if (!value.is_number()) {
                    throw ParseError(line, "label '" + key + "' must be numeric");
                }
                const double score = value.get<double>();
                if (!(score >= 0.0 && score <= 1.0)) {
                    throw ValidationError("label '" + key + "' outside [0, 1]");
                }
                if (key == "image") {
                    rec.image_score = score;
                } else {
                    rec.proposal_scores[parse_proposal_key(key)] = score;
                }
            }
        }
        if (const auto* full = detail::optional_field(j, "det_full", json::value_t::array, line)) {
            rec.detections_full = detail::parse_fixture_detections(*full, line);
        }
        if (const auto* prop = detail::optional_field(j, "det_prop", json::value_t::object, line)) {
            for (const auto& [key, value] : prop->items()) {
                rec.detections_per_proposal[parse_proposal_key(key)] =
                    detail::parse_fixture_detections(value, line);
            }
        }
        return rec;
    } catch (const ValidationError& e) {
        if (line == 0) {
            throw;
        }
        throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
}

/** Immutable, validated collection of fixture records keyed by image id.
 *  Face and hand lists are stored in descending-confidence order and keys are
 *  remapped to match. */
class FixtureSet {
public:
    FixtureSet() = default;

    explicit FixtureSet(std::vector<FixtureRecord> records)
    {
        for (auto& rec : records) {
            if (records_.contains(rec.image_id)) {
                throw ValidationError("duplicate image_id '" + rec.image_id + "'");
            }
            canonicalize(rec);
            auto id = rec.image_id;
            records_.emplace(std::move(id), std::move(rec));
        }
    }

    const FixtureRecord* find(const std::string& image_id) const
    {
        const auto it = records_.find(image_id);
        return it == records_.end() ? nullptr : &it->second;
    }

    std::size_t size() const noexcept { return records_.size(); }

private:
    template <typename T>
    static std::vector<std::size_t> rank(const std::vector<T>& items)
    {
        // new position -> annotation position
        std::vector<std::size_t> order(items.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return items[a].confidence > items[b].confidence;
        });
        return order;
    }

    template <typename T>
    static std::vector<T> permute(const std::vector<T>& items, const std::vector<std::size_t>& order)
    {
        std::vector<T> out;
        out.reserve(items.size());
        for (const auto i : order) {
            out.push_back(items[i]);
        }
        return out;
    }

    static void canonicalize(FixtureRecord& rec)
    {
        const auto face_order = rank(rec.faces);
        const auto hand_order = rank(rec.hands);
        std::vector<std::size_t> face_pos(face_order.size());
        std::vector<std::size_t> hand_pos(hand_order.size());
        for (std::size_t i = 0; i < face_order.size(); ++i) {
            face_pos[face_order[i]] = i;
        }
        for (std::size_t i = 0; i < hand_order.size(); ++i) {
            hand_pos[hand_order[i]] = i;
        }
        auto remap = [&](const ProposalKey& key) {
            const auto& pos = key.kind == ProposalKind::Face ? face_pos : hand_pos;
            if (key.index >= pos.size()) {
                throw ValidationError("image '" + rec.image_id + "': key " + to_string(key)
                                      + " refers to an undeclared box");
            }
            return ProposalKey{key.kind, pos[key.index]};
        };

        std::map<ProposalKey, double> scores;
        for (const auto& [key, score] : rec.proposal_scores) {
            scores[remap(key)] = score;
        }
        std::map<ProposalKey, std::vector<FixtureDetection>> per_proposal;
        for (auto& [key, dets] : rec.detections_per_proposal) {
            per_proposal.emplace(remap(key), std::move(dets));
        }
        rec.faces = permute(rec.faces, face_order);
        rec.hands = permute(rec.hands, hand_order);
        rec.proposal_scores = std::move(scores);
        rec.detections_per_proposal = std::move(per_proposal);
    }

    std::unordered_map<std::string, FixtureRecord> records_;
};

inline FixtureSet load_fixture(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError(0, "cannot open fixture file '" + path.string() + "'");
    }
    std::vector<FixtureRecord> records;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        records.push_back(parse_fixture_record(text, line));
    }
    return FixtureSet(std::move(records));
}

/** Implements all four contracts from a FixtureSet. Pixels are never looked
 *  at: queries are keyed by image id and proposal identity. */
class FixtureBackend final : public FaceDetector,
                             public HandDetector,
                             public ProposalClassifier,
                             public CigaretteDetector {
public:
    explicit FixtureBackend(FixtureSet fixtures)
        : fixtures_(std::move(fixtures))
    {
    }

    std::string name() const override { return "fixture"; }
    Concurrency concurrency() const override { return Concurrency::ConcurrentSafe; }

    std::vector<FaceProposalRaw> detect_faces(const ImageRef& image, double min_confidence) override
    {
        return rank_and_filter(record(image.id()).faces, min_confidence);
    }

    std::vector<HandProposalRaw> detect_hands(const ImageRef& image, double min_confidence) override
    {
        return rank_and_filter(record(image.id()).hands, min_confidence);
    }

    ClassifierOutput classify_proposal(const PixelRegion& crop) override
    {
        const auto& rec = record(crop.source);
        double score = 0.0;
        if (crop.origin) {
            if (const auto it = rec.proposal_scores.find(*crop.origin); it != rec.proposal_scores.end()) {
                score = it->second;
            }
        } else if (rec.image_score) {
            score = *rec.image_score;
        }
        return {label_from_score(score), score};
    }

    std::vector<Detection> detect_cigarettes(const PixelRegion& region, double min_confidence) override
    {
        const auto& rec = record(region.source);
        const std::vector<FixtureDetection>* source = &rec.detections_full;
        if (region.origin) {
            const auto it = rec.detections_per_proposal.find(*region.origin);
            if (it == rec.detections_per_proposal.end()) {
                return {};
            }
            source = &it->second;
        }
        std::vector<Detection> out;
        for (const auto& d : *source) {
            out.push_back({d.box, d.confidence, DetectionSource::full_image()});
        }
        return rank_and_filter(std::move(out), min_confidence);
    }

private:
    const FixtureRecord& record(const std::string& image_id) const
    {
        const auto* rec = fixtures_.find(image_id);
        if (!rec) {
            throw BackendFailure("fixture has no record for image '" + image_id + "'");
        }
        return *rec;
    }

    FixtureSet fixtures_;
};

inline BackendSuite make_fixture_suite(FixtureSet fixtures)
{
    auto backend = std::make_shared<FixtureBackend>(std::move(fixtures));
    return {backend, backend, backend, backend};
}

inline BackendSuite load_fixture_backend(const std::filesystem::path& path)
{
    return make_fixture_suite(load_fixture(path));
}

} // namespace cigdetect
