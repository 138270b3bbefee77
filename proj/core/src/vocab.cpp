#include "rebroadcast/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/random.hpp"

namespace rebroadcast::vocab {

void PointMatrix::append(std::span<const double> point) {
    if (point.size() != static_cast<std::size_t>(dim_)) {
        throw DimensionError("point has " + std::to_string(point.size()) + " values, matrix expects " +
                             std::to_string(dim_));
    }
    data_.insert(data_.end(), point.begin(), point.end());
}

void PointMatrix::append(const keypoint::BinaryDescriptor& descriptor) {
    if (dim_ != keypoint::kDescriptorBits) throw DimensionError("descriptor matrix must be 512 wide");
    for (std::size_t i = 0; i < keypoint::kDescriptorBits; ++i) data_.push_back(descriptor.bit(i) ? 1.0 : 0.0);
}

std::size_t PointMatrix::distinct_rows() const {
    std::vector<std::size_t> order(rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto less = [this](std::size_t a, std::size_t b) {
        const auto ra = row(a);
        const auto rb = row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), less);
    std::size_t distinct = order.empty() ? 0 : 1;
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (less(order[i - 1], order[i])) ++distinct;
    }
    return distinct;
}

Vocabulary::Vocabulary(int dim, std::vector<double> centroids, TrainingMeta meta)
    : dim_(dim), centroids_(std::move(centroids)), meta_(meta) {
    if (dim_ <= 0) throw DimensionError("vocabulary dimension must be positive");
    if (centroids_.size() % static_cast<std::size_t>(dim_) != 0) {
        throw DimensionError("centroid storage is not a multiple of the dimension");
    }
    for (double v : centroids_) {
        if (!std::isfinite(v)) throw ParameterError("centroid contains a non-finite value");
    }
}

void Vocabulary::check_distinct() const {
    for (int i = 0; i < k(); ++i) {
        for (int j = i + 1; j < k(); ++j) {
            if (std::ranges::equal(centroid(i), centroid(j))) {
                throw InvariantViolationError("centroids " + std::to_string(i) + " and " + std::to_string(j) +
                                              " coincide");
            }
        }
    }
}

int vocabulary_size(KRule rule, std::size_t training_images, std::size_t training_descriptors) {
    const std::size_t n = rule == KRule::TrainingImages ? training_images : training_descriptors;
    auto k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    // Guard against floating rounding on perfect squares.
    while ((k + 1) * (k + 1) <= n) ++k;
    while (k * k > n) --k;
    return static_cast<int>(std::max<std::size_t>(2, k));
}

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

namespace {

struct Assignment {
    std::vector<int> labels;
    std::vector<double> distances;  // squared distance to the assigned centroid
    double wcss = 0.0;
};

int nearest(std::span<const double> point, std::span<const double> centroids, int k, int dim, double* best_distance) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
        const double d =
            squared_distance(point, centroids.subspan(static_cast<std::size_t>(c) * dim, static_cast<std::size_t>(dim)));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (best_distance != nullptr) *best_distance = best_d;
    return best;
}

Assignment assign_all(const PointMatrix& points, std::span<const double> centroids, int k) {
    Assignment a;
    a.labels.resize(points.rows());
    a.distances.resize(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        a.labels[i] = nearest(points.row(i), centroids, k, points.dim(), &a.distances[i]);
        a.wcss += a.distances[i];
    }
    return a;
}

std::vector<double> seed_plus_plus(const PointMatrix& points, int k, Rng& rng) {
    const auto n = points.rows();
    const auto dim = static_cast<std::size_t>(points.dim());
    std::vector<double> centroids;
    centroids.reserve(static_cast<std::size_t>(k) * dim);

    const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    centroids.insert(centroids.end(), points.row(first).begin(), points.row(first).end());

    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(points.row(i), points.row(first));

    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double running = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                running += closest[i];
                if (running > target && closest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            // Rounding can land on an already chosen point; take the farthest instead.
            if (closest[pick] == 0.0) {
                pick = static_cast<std::size_t>(std::max_element(closest.begin(), closest.end()) - closest.begin());
            }
        }
        const auto chosen = points.row(pick);
        centroids.insert(centroids.end(), chosen.begin(), chosen.end());
        for (std::size_t i = 0; i < n; ++i) closest[i] = std::min(closest[i], squared_distance(points.row(i), chosen));
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const PointMatrix& points, int k, std::uint64_t seed, const KMeansOptions& options,
                    std::uint64_t training_images) {
    if (k < 2) throw ParameterError("k-means needs k >= 2, got " + std::to_string(k));
    if (points.rows() < static_cast<std::size_t>(k) || points.distinct_rows() < static_cast<std::size_t>(k)) {
        throw DegenerateInputError("k-means needs at least k=" + std::to_string(k) + " distinct points");
    }
    if (options.max_iterations < 1) throw ParameterError("k-means needs at least one iteration");

    const auto dim = static_cast<std::size_t>(points.dim());
    Rng rng(seed);
    std::vector<double> centroids = seed_plus_plus(points, k, rng);

    KMeansResult result;
    Assignment current = assign_all(points, centroids, k);
    result.wcss_history.push_back(current.wcss);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.rows(); ++i) {
            const auto c = static_cast<std::size_t>(current.labels[i]);
            const auto p = points.row(i);
            for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += p[d];
            ++counts[c];
        }

        std::vector<double> updated(centroids.size());
        std::vector<std::uint8_t> taken(points.rows(), 0);
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (counts[c] > 0) {
                for (std::size_t d = 0; d < dim; ++d) updated[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < points.rows(); ++i) {
                if (!taken[i] && current.distances[i] > far_d) {
                    far_d = current.distances[i];
                    far = i;
                }
            }
            taken[far] = 1;
            std::copy_n(points.row(far).begin(), dim, updated.begin() + static_cast<std::ptrdiff_t>(c * dim));
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            const std::span<const double> before(centroids.data() + c * dim, dim);
            const std::span<const double> after(updated.data() + c * dim, dim);
            shift = std::max(shift, std::sqrt(squared_distance(before, after)));
        }
        centroids = std::move(updated);
        current = assign_all(points, centroids, k);
        result.wcss_history.push_back(current.wcss);
        result.iterations = iter + 1;
        if (shift < options.tolerance) {
            result.converged = true;
            break;
        }
    }

    result.vocabulary = Vocabulary(points.dim(), std::move(centroids),
                                   TrainingMeta{training_images, static_cast<std::uint64_t>(points.rows()), seed});
    return result;
}

int assign(std::span<const double> point, const Vocabulary& vocabulary) {
    if (vocabulary.k() == 0) throw ParameterError("vocabulary is empty");
    if (point.size() != static_cast<std::size_t>(vocabulary.dim())) {
        throw DimensionError("point dimension " + std::to_string(point.size()) + " does not match vocabulary " +
                             std::to_string(vocabulary.dim()));
    }
    return nearest(point, vocabulary.centroids(), vocabulary.k(), vocabulary.dim(), nullptr);
}

BomrwResult word_histogram(std::span<const keypoint::BinaryDescriptor> descriptors, const Vocabulary& vocabulary) {
    if (vocabulary.k() == 0) throw ParameterError("vocabulary is empty");
    BomrwResult out;
    out.histogram.kind = FeatureKind::Bomrw;
    out.histogram.values.assign(static_cast<std::size_t>(vocabulary.k()), 0.0);
    if (descriptors.empty()) {
        out.no_keypoints = true;
        return out;
    }
    for (const auto& d : descriptors) {
        const auto expanded = d.expand();
        out.histogram.values[static_cast<std::size_t>(assign(expanded, vocabulary))] += 1.0;
    }
    for (double& v : out.histogram.values) v /= static_cast<double>(descriptors.size());
    return out;
}

BomrwResult bomrw_histogram(const imgproc::GrayImage& image, const Vocabulary& vocabulary,
                            const keypoint::DetectorParams& detector) {
    const auto descriptors = keypoint::extract_binary_descriptors(image, detector);
    return word_histogram(descriptors, vocabulary);
}

}  // namespace rebroadcast::vocab
