#include "rebroadcast/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/random.hpp"

namespace rebroadcast::pipeline {

void PipelineConfig::validate() const {
    gabor.validate();
    if (!(detector.threshold > 0.0)) throw ParameterError("detector threshold must be positive");
    if (detector.octaves < 1) throw ParameterError("detector needs at least one octave");
    if (detector.max_keypoints < 1) throw ParameterError("keypoint cap must be positive");
    if (c_grid.empty()) throw ParameterError("C grid is empty");
    for (double c : c_grid) {
        if (!(c > 0.0)) throw ParameterError("C grid values must be positive");
    }
    if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
    if (max_training_descriptors < 2) throw ParameterError("descriptor cap must be at least 2");
}

bool PipelineConfig::operator==(const PipelineConfig& o) const {
    const auto same_scales = [](const auto& a, const auto& b) {
        return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](const gabor::GaborScale& x, const gabor::GaborScale& y) {
            return x.sigma == y.sigma && x.lambda == y.lambda && x.kernel_size == y.kernel_size;
        });
    };
    return gabor.orientations == o.gabor.orientations && gabor.gamma == o.gabor.gamma &&
           same_scales(gabor.scales, o.gabor.scales) && gabor.post_sum_window == o.gabor.post_sum_window &&
           gabor.response_epsilon == o.gabor.response_epsilon && detector.threshold == o.detector.threshold &&
           detector.octaves == o.detector.octaves && detector.max_keypoints == o.detector.max_keypoints &&
           k_rule == o.k_rule && feature_set == o.feature_set && positive == o.positive && c_grid == o.c_grid &&
           folds == o.folds && seed == o.seed && max_training_descriptors == o.max_training_descriptors;
}

int feature_dim(const PipelineConfig& config, int k) {
    switch (config.feature_set) {
        case FeatureKind::Mribgp: return gabor::kMribgpDim;
        case FeatureKind::Bomrw: return k;
        case FeatureKind::Lgmfs: return gabor::kMribgpDim + k;
    }
    return 0;
}

ImageFeatures extract(const imgproc::GrayImage& image, const PipelineConfig& config) {
    ImageFeatures out;
    if (config.uses_texture()) out.mribgp = gabor::mribgp(image, config.gabor).values;
    if (config.uses_words()) out.descriptors = keypoint::extract_binary_descriptors(image, config.detector);
    return out;
}

FusedFeatures fuse(const ImageFeatures& features, const vocab::Vocabulary& vocabulary, const PipelineConfig& config) {
    FusedFeatures out;
    switch (config.feature_set) {
        case FeatureKind::Mribgp:
            if (features.mribgp.size() != static_cast<std::size_t>(gabor::kMribgpDim)) {
                throw DimensionError("texture descriptor must have 648 values");
            }
            out.vector = fusion::l1_normalized(features.mribgp, FeatureKind::Mribgp);
            return out;
        case FeatureKind::Bomrw: {
            auto words = vocab::word_histogram(features.descriptors, vocabulary);
            out.no_keypoints = words.no_keypoints;
            out.vector = std::move(words.histogram);
            return out;
        }
        case FeatureKind::Lgmfs: {
            if (features.mribgp.size() != static_cast<std::size_t>(gabor::kMribgpDim)) {
                throw DimensionError("texture descriptor must have 648 values");
            }
            const auto words = vocab::word_histogram(features.descriptors, vocabulary);
            out.no_keypoints = words.no_keypoints;
            out.vector = fusion::lgmfs(features.mribgp, words.histogram.values);
            return out;
        }
    }
    return out;
}

TrainedModel train(const std::vector<ImageFeatures>& features, const std::vector<fusion::Label>& labels,
                   const PipelineConfig& config) {
    config.validate();
    if (features.size() != labels.size()) throw TrainingError("feature and label counts differ");
    const bool has_genuine = std::find(labels.begin(), labels.end(), fusion::Label::Genuine) != labels.end();
    const bool has_counterfeit = std::find(labels.begin(), labels.end(), fusion::Label::Counterfeit) != labels.end();
    if (!has_genuine || !has_counterfeit) throw TrainingError("training data must contain both labels");

    TrainedModel model;
    if (config.uses_words()) {
        std::vector<const keypoint::BinaryDescriptor*> pool;
        for (const auto& f : features) {
            for (const auto& d : f.descriptors) pool.push_back(&d);
        }
        model.training_descriptors = pool.size();
        model.k = vocab::vocabulary_size(config.k_rule, features.size(), pool.size());

        std::vector<std::size_t> chosen(pool.size());
        std::iota(chosen.begin(), chosen.end(), std::size_t{0});
        if (pool.size() > config.max_training_descriptors) {
            Rng rng(derive_seed(config.seed, 0x766f636162ULL));
            for (std::size_t i = 0; i < config.max_training_descriptors; ++i) {
                const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                        static_cast<std::int64_t>(chosen.size()) - 1));
                std::swap(chosen[i], chosen[j]);
            }
            chosen.resize(config.max_training_descriptors);
            std::sort(chosen.begin(), chosen.end());
        }
        vocab::PointMatrix points;
        points.reserve(chosen.size());
        for (std::size_t idx : chosen) points.append(*pool[idx]);
        try {
            auto km = vocab::kmeans(points, model.k, config.seed, {}, features.size());
            model.vocabulary = std::move(km.vocabulary);
            model.wcss_history = std::move(km.wcss_history);
        } catch (const DegenerateInputError& e) {
            throw TrainingError(std::string("cannot build vocabulary: ") + e.what());
        }
    }

    std::vector<std::vector<double>> samples;
    samples.reserve(features.size());
    for (const auto& f : features) {
        auto fused = fuse(f, model.vocabulary, config);
        if (fused.no_keypoints) ++model.no_keypoint_images;
        samples.push_back(std::move(fused.vector.values));
    }

    model.cross_validation =
        fusion::cross_validate(samples, labels, config.c_grid, config.folds, config.seed, config.positive);
    model.svm = fusion::svm_train(samples, labels, model.cross_validation.best_c, config.positive);
    return model;
}

}  // namespace rebroadcast::pipeline
