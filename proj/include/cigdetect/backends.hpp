// SPDX-License-Identifier: Apache-2.0
// Inference contracts consumed by the pipeline.

#pragma once

#include "cigdetect/geometry.hpp"
#include "cigdetect/image.hpp"
#include "cigdetect/types.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cigdetect {

inline void validate_confidence(double c)
{
    if (!(c >= 0.0 && c <= 1.0)) {
        throw ValidationError("confidence " + std::to_string(c) + " outside [0, 1]");
    }
}

struct FaceProposalRaw {
    CenterBox box;
    double confidence;
};

struct HandProposalRaw {
    CornerBox box;
    double confidence;
};

struct ClassifierOutput {
    ClassLabel label;
    double score; ///< smoker-class probability
};

/** Where a cigarette detection came from. A proposal source stores the
 *  position within the image's positive proposals, not within all proposals. */
struct DetectionSource {
    std::optional<std::size_t> positive_index;

    static DetectionSource full_image() { return {}; }
    static DetectionSource proposal(std::size_t k) { return {k}; }

    bool is_full_image() const noexcept { return !positive_index.has_value(); }

    friend bool operator==(const DetectionSource&, const DetectionSource&) = default;
};

struct Detection {
    CornerBox box;
    double confidence;
    DetectionSource source;
};

enum class Concurrency { ConcurrentSafe, Exclusive };

/** Common part of the four contracts. */
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string name() const = 0;
    virtual Concurrency concurrency() const = 0;
};

/** Face region detector. Output is sorted by descending confidence and
 *  excludes anything below `min_confidence`. */
class FaceDetector : public virtual Backend {
public:
    virtual std::vector<FaceProposalRaw> detect_faces(const ImageRef& image, double min_confidence) = 0;
};

/** Hand region detector; same ordering and filtering rules as FaceDetector. */
class HandDetector : public virtual Backend {
public:
    virtual std::vector<HandProposalRaw> detect_hands(const ImageRef& image, double min_confidence) = 0;
};

/** Binary smoker classifier on a cropped region. Deterministic for identical
 *  input; label is Smoker iff score >= 0.5. */
class ProposalClassifier : public virtual Backend {
public:
    virtual ClassifierOutput classify_proposal(const PixelRegion& crop) = 0;
};

/** Cigarette detector. Boxes are in region-local coordinates; the caller
 *  translates them. The returned source field is ignored by the pipeline. */
class CigaretteDetector : public virtual Backend {
public:
    virtual std::vector<Detection> detect_cigarettes(const PixelRegion& region, double min_confidence) = 0;
};

/** The four inference backends the pipeline needs. */
struct BackendSuite {
    std::shared_ptr<FaceDetector> face_detector;
    std::shared_ptr<HandDetector> hand_detector;
    std::shared_ptr<ProposalClassifier> proposal_classifier;
    std::shared_ptr<CigaretteDetector> cigarette_detector;

    void validate() const
    {
        if (!face_detector || !hand_detector || !proposal_classifier || !cigarette_detector) {
            throw ConfigError("backend suite is missing an implementation");
        }
    }

    bool concurrent_safe() const
    {
        validate();
        const Backend* all[] = {face_detector.get(), hand_detector.get(), proposal_classifier.get(),
                                cigarette_detector.get()};
        return std::all_of(std::begin(all), std::end(all),
                           [](const Backend* b) { return b->concurrency() == Concurrency::ConcurrentSafe; });
    }
};

/** Stable sort by descending confidence, then drop entries below threshold. */
template <typename T>
std::vector<T> rank_and_filter(std::vector<T> items, double min_confidence)
{
    std::stable_sort(items.begin(), items.end(),
                     [](const T& a, const T& b) { return a.confidence > b.confidence; });
    std::erase_if(items, [&](const T& t) { return t.confidence < min_confidence; });
    return items;
}

} // namespace cigdetect
