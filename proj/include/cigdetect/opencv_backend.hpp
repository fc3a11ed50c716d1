// SPDX-License-Identifier: Apache-2.0
// Real-model backend on top of OpenCV's DNN module. Built only with
// -DCIGDETECT_WITH_OPENCV=ON.
//
// Model directory layout:
//   face.onnx, hand.onnx, cigarette.onnx   YOLO-style detectors whose outputs
//                                          are rows [cx, cy, w, h, obj, cls...]
//   classifier_a.onnx, classifier_b.onnx   two-class classifiers (logits,
//                                          index 1 = smoker); their softmax
//                                          probabilities are averaged
//   model.json (optional)                  {"detector_input": 416,
//                                           "classifier_input": 224,
//                                           "nms_iou": 0.45,
//                                           "normalized_boxes": false}

#pragma once

#if defined(CIGDETECT_WITH_OPENCV)

#include "cigdetect/backends.hpp"
#include "cigdetect/model_adapter.hpp"

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>

namespace cigdetect {

struct ModelOptions {
    int detector_input = 416;
    int classifier_input = 224;
    double nms_iou = 0.45;
    bool normalized_boxes = false;
};

namespace detail {

inline cv::dnn::Net load_net(const std::filesystem::path& file)
{
    if (!std::filesystem::exists(file)) {
        throw ConfigError("missing model file '" + file.string() + "'");
    }
    try {
        return cv::dnn::readNet(file.string());
    } catch (const cv::Exception& e) {
        throw ConfigError("cannot load '" + file.string() + "': " + e.what());
    }
}

inline cv::Mat to_blob(const std::vector<float>& planar, int size)
{
    const int shape[] = {1, 3, size, size};
    cv::Mat blob(4, shape, CV_32F);
    std::copy(planar.begin(), planar.end(), blob.ptr<float>());
    return blob;
}

/** Runs a YOLO-style network on `image`, returning boxes in image pixels. */
class YoloNet {
public:
    YoloNet(const std::filesystem::path& file, const ModelOptions& opts)
        : net_(load_net(file)), opts_(opts)
    {
    }

    std::vector<model::ScoredBox> run(const RgbImage& image, double min_confidence)
    {
        const int n = opts_.detector_input;
        const auto resized = model::resize_bilinear(image, n, n);
        std::vector<cv::Mat> outputs;
        {
            std::lock_guard lock(mutex_);
            net_.setInput(to_blob(model::to_planar_tensor(resized), n));
            net_.forward(outputs, net_.getUnconnectedOutLayersNames());
        }
        const double sx = opts_.normalized_boxes ? image.width() : double(image.width()) / n;
        const double sy = opts_.normalized_boxes ? image.height() : double(image.height()) / n;
        std::vector<model::ScoredBox> boxes;
        for (const auto& out : outputs) {
            const int row_length = out.size[out.dims - 1];
            const auto* data = reinterpret_cast<const float*>(out.data);
            const auto found = model::decode_yolo_rows({data, out.total()}, std::size_t(row_length), min_confidence, sx, sy);
            boxes.insert(boxes.end(), found.begin(), found.end());
        }
        return model::non_max_suppression(std::move(boxes), opts_.nms_iou);
    }

private:
    cv::dnn::Net net_;
    ModelOptions opts_;
    std::mutex mutex_;
};

} // namespace detail

class OpenCvBackend final : public FaceDetector,
                            public HandDetector,
                            public ProposalClassifier,
                            public CigaretteDetector {
public:
    explicit OpenCvBackend(const std::filesystem::path& dir)
        : opts_(read_options(dir / "model.json"))
        , face_(dir / "face.onnx", opts_)
        , hand_(dir / "hand.onnx", opts_)
        , cigarette_(dir / "cigarette.onnx", opts_)
        , classifier_a_(detail::load_net(dir / "classifier_a.onnx"))
        , classifier_b_(detail::load_net(dir / "classifier_b.onnx"))
    {
    }

    std::string name() const override { return "opencv-dnn"; }
    Concurrency concurrency() const override { return Concurrency::Exclusive; }

    std::vector<FaceProposalRaw> detect_faces(const ImageRef& image, double min_confidence) override
    {
        std::vector<FaceProposalRaw> out;
        for (const auto& b : face_.run(image.raster(), min_confidence)) {
            out.push_back({corner_to_center(b.box), b.confidence});
        }
        return rank_and_filter(std::move(out), min_confidence);
    }

    std::vector<HandProposalRaw> detect_hands(const ImageRef& image, double min_confidence) override
    {
        std::vector<HandProposalRaw> out;
        for (const auto& b : hand_.run(image.raster(), min_confidence)) {
            out.push_back({b.box, b.confidence});
        }
        return rank_and_filter(std::move(out), min_confidence);
    }

    ClassifierOutput classify_proposal(const PixelRegion& crop) override
    {
        const int n = opts_.classifier_input;
        const auto tensor = model::to_planar_tensor(model::resize_bilinear(crop.pixels, n, n), model::kImagenetMean,
                                                    model::kImagenetStd);
        std::vector<std::vector<double>> members;
        std::lock_guard lock(mutex_);
        for (auto* net : {&classifier_a_, &classifier_b_}) {
            net->setInput(detail::to_blob(tensor, n));
            const cv::Mat logits = net->forward();
            if (logits.total() != 2) {
                throw BackendFailure("classifier must output 2 logits, got " + std::to_string(logits.total()));
            }
            members.push_back(model::softmax({logits.ptr<float>(), 2}));
        }
        const double score = model::average_probabilities(members)[1];
        return {label_from_score(score), score};
    }

    std::vector<Detection> detect_cigarettes(const PixelRegion& region, double min_confidence) override
    {
        std::vector<Detection> out;
        for (const auto& b : cigarette_.run(region.pixels, min_confidence)) {
            out.push_back({b.box, b.confidence, DetectionSource::full_image()});
        }
        return out;
    }

private:
    static ModelOptions read_options(const std::filesystem::path& file)
    {
        ModelOptions opts;
        std::ifstream in(file);
        if (!in) {
            return opts;
        }
        try {
            const auto j = nlohmann::json::parse(in);
            opts.detector_input = j.value("detector_input", opts.detector_input);
            opts.classifier_input = j.value("classifier_input", opts.classifier_input);
            opts.nms_iou = j.value("nms_iou", opts.nms_iou);
            opts.normalized_boxes = j.value("normalized_boxes", opts.normalized_boxes);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad model.json: " + std::string(e.what()));
        }
        return opts;
    }

    ModelOptions opts_;
    detail::YoloNet face_;
    detail::YoloNet hand_;
    detail::YoloNet cigarette_;
    cv::dnn::Net classifier_a_;
    cv::dnn::Net classifier_b_;
    std::mutex mutex_;
};

inline BackendSuite load_model_backend(const std::filesystem::path& dir)
{
    auto backend = std::make_shared<OpenCvBackend>(dir);
    return {backend, backend, backend, backend};
}

} // namespace cigdetect

#endif // CIGDETECT_WITH_OPENCV
