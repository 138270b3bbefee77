#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rebroadcast/feature.hpp"
#include "rebroadcast/fusion.hpp"
#include "rebroadcast/gabor.hpp"
#include "rebroadcast/imgproc.hpp"
#include "rebroadcast/keypoint.hpp"
#include "rebroadcast/vocab.hpp"

namespace rebroadcast::pipeline {

// Every tunable of the feature extractor and classifier. Persisted with the
// model so a model file is self-describing.
struct PipelineConfig {
    gabor::GaborParams gabor = gabor::GaborParams::defaults();
    keypoint::DetectorParams detector;
    vocab::KRule k_rule = vocab::KRule::TrainingImages;
    // Which descriptor feeds the classifier; mribgp and bomrw alone are
    // ablations of the fused vector.
    FeatureKind feature_set = FeatureKind::Lgmfs;
    fusion::Label positive = fusion::Label::Counterfeit;
    std::vector<double> c_grid = fusion::default_c_grid();
    int folds = 5;
    std::uint64_t seed = 0;
    // Training descriptors beyond this are subsampled (seeded) before k-means.
    std::uint64_t max_training_descriptors = 20000;

    void validate() const;
    bool uses_texture() const noexcept { return feature_set != FeatureKind::Bomrw; }
    bool uses_words() const noexcept { return feature_set != FeatureKind::Mribgp; }

    bool operator==(const PipelineConfig& other) const;
};

// Dimension of the classifier input for a vocabulary of size k.
int feature_dim(const PipelineConfig& config, int k);

// Vocabulary-independent per-image features; only the parts the configured
// feature set needs are computed.
struct ImageFeatures {
    std::vector<double> mribgp;
    std::vector<keypoint::BinaryDescriptor> descriptors;
};

ImageFeatures extract(const imgproc::GrayImage& image, const PipelineConfig& config);

struct FusedFeatures {
    FeatureVector vector;
    bool no_keypoints = false;
};

// Classifier input: fused and L1-normalized. An image without keypoints keeps
// an all-zero word block.
FusedFeatures fuse(const ImageFeatures& features, const vocab::Vocabulary& vocabulary, const PipelineConfig& config);

struct TrainedModel {
    vocab::Vocabulary vocabulary;
    fusion::LinearSvmModel svm;
    fusion::CrossValidationResult cross_validation;
    std::vector<double> wcss_history;
    int k = 0;
    std::uint64_t training_descriptors = 0;
    std::uint64_t no_keypoint_images = 0;
};

// Vocabulary (when words are used), fused vectors, cross-validated C and the
// final SVM on all samples.
TrainedModel train(const std::vector<ImageFeatures>& features, const std::vector<fusion::Label>& labels,
                   const PipelineConfig& config);

}  // namespace rebroadcast::pipeline
