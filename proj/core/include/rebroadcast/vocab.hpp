#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rebroadcast/feature.hpp"
#include "rebroadcast/imgproc.hpp"
#include "rebroadcast/keypoint.hpp"

namespace rebroadcast::vocab {

inline constexpr int kDescriptorDim = keypoint::kDescriptorBits;

// Dense row-major point set.
class PointMatrix {
public:
    explicit PointMatrix(int dim = kDescriptorDim) : dim_(dim) {}

    int dim() const noexcept { return dim_; }
    std::size_t rows() const noexcept { return dim_ == 0 ? 0 : data_.size() / static_cast<std::size_t>(dim_); }
    std::span<const double> row(std::size_t i) const noexcept {
        return std::span<const double>(data_).subspan(i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_));
    }
    void append(std::span<const double> point);
    void append(const keypoint::BinaryDescriptor& descriptor);
    void reserve(std::size_t rows) { data_.reserve(rows * static_cast<std::size_t>(dim_)); }

    std::size_t distinct_rows() const;

private:
    int dim_;
    std::vector<double> data_;
};

struct TrainingMeta {
    std::uint64_t images = 0;
    std::uint64_t descriptors = 0;
    std::uint64_t seed = 0;

    bool operator==(const TrainingMeta&) const = default;
};

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(int dim, std::vector<double> centroids, TrainingMeta meta);

    int k() const noexcept { return dim_ == 0 ? 0 : static_cast<int>(centroids_.size() / static_cast<std::size_t>(dim_)); }
    int dim() const noexcept { return dim_; }
    std::span<const double> centroid(int i) const noexcept {
        return std::span<const double>(centroids_).subspan(static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_));
    }
    std::span<const double> centroids() const noexcept { return centroids_; }
    const TrainingMeta& meta() const noexcept { return meta_; }

    // Throws InvariantViolationError when two centroids coincide.
    void check_distinct() const;

    bool operator==(const Vocabulary&) const = default;

private:
    int dim_ = 0;
    std::vector<double> centroids_;
    TrainingMeta meta_;
};

// How the vocabulary size is derived: sqrt of the training image count, or
// sqrt of the number of training descriptors.
enum class KRule { TrainingImages, TrainingKeypoints };

// max(2, floor(sqrt(count))).
int vocabulary_size(KRule rule, std::size_t training_images, std::size_t training_descriptors);

struct KMeansOptions {
    int max_iterations = 300;
    double tolerance = 1e-6;  // largest centroid shift that still counts as moving
};

struct KMeansResult {
    Vocabulary vocabulary;
    std::vector<double> wcss_history;  // after the initial assignment and each iteration
    int iterations = 0;
    bool converged = false;
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters are moved to
// the point farthest from its centroid. Deterministic for a given
// (point order, k, seed).
KMeansResult kmeans(const PointMatrix& points, int k, std::uint64_t seed, const KMeansOptions& options = {},
                    std::uint64_t training_images = 0);

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept;

// Nearest centroid by Euclidean distance; ties go to the lowest index.
int assign(std::span<const double> point, const Vocabulary& vocabulary);

struct BomrwResult {
    FeatureVector histogram;
    bool no_keypoints = false;
};

// Word counts of already extracted descriptors, L1-normalized. All zeros and
// the flag set when there are none.
BomrwResult word_histogram(std::span<const keypoint::BinaryDescriptor> descriptors, const Vocabulary& vocabulary);

BomrwResult bomrw_histogram(const imgproc::GrayImage& image, const Vocabulary& vocabulary,
                            const keypoint::DetectorParams& detector = {});

}  // namespace rebroadcast::vocab
