#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rebroadcast/feature.hpp"

namespace rebroadcast::fusion {

enum class Label { Genuine, Counterfeit };

constexpr std::string_view to_string(Label label) noexcept {
    return label == Label::Genuine ? "genuine" : "counterfeit";
}

// Concatenates (texture block first) and divides by the L1 norm of the
// result. Throws DegenerateInputError when both blocks are all zero.
FeatureVector lgmfs(std::span<const double> mribgp, std::span<const double> bomrw);

// L1 normalization of a single block; an all-zero block is returned unchanged.
FeatureVector l1_normalized(std::span<const double> values, FeatureKind kind);

struct LinearSvmModel {
    std::vector<double> weights;
    double bias = 0.0;
    double C = 1.0;
    // Class mapped to +1 by the decision function.
    Label positive = Label::Counterfeit;

    bool operator==(const LinearSvmModel&) const = default;
};

struct SvmOptions {
    double tolerance = 1e-8;  // maximal KKT violation at exit
    long max_iterations = 10'000'000;
};

// Minimizes 0.5*|w|^2 + C * sum(max(0, 1 - y_i (w.x_i + b))) with an
// unregularized bias, via SMO on the dual.
LinearSvmModel svm_train(const std::vector<std::vector<double>>& samples, std::span<const Label> labels, double C,
                         Label positive = Label::Counterfeit, const SvmOptions& options = {});

// Primal objective of (w, b) on a data set.
double svm_objective(const LinearSvmModel& model, const std::vector<std::vector<double>>& samples,
                     std::span<const Label> labels);

struct Prediction {
    Label label;
    double margin;
};

// margin = w.z + b; positive margin selects model.positive, negative the other
// class, and an exact zero resolves to Genuine.
Prediction svm_predict(const LinearSvmModel& model, std::span<const double> features);

struct Metrics {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
    double f_measure = 0.0;
    double nacc = 0.0;  // percent
    double tpr = 0.0;
    double fpr = 0.0;
    bool tpr_undefined = false;  // no positives in the ground truth
    bool fpr_undefined = false;  // no negatives in the ground truth
};

Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth,
                        Label positive = Label::Counterfeit);

// 2^-5, 2^-3, ..., 2^15.
std::vector<double> default_c_grid();

// Fold index per sample: each class is shuffled with the seed and dealt
// round-robin, so every fold gets a near-equal share of both classes.
std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed);

struct CrossValidationResult {
    double best_c = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_nacc;               // per grid entry
    std::vector<std::vector<double>> fold_nacc;  // [grid entry][fold]
    std::vector<int> fold_of_sample;
};

// Mean validation NACC per C; the best C is the argmax, ties to the smaller C.
CrossValidationResult cross_validate(const std::vector<std::vector<double>>& samples, std::span<const Label> labels,
                                     std::span<const double> c_grid, int folds, std::uint64_t seed,
                                     Label positive = Label::Counterfeit, const SvmOptions& options = {});

}  // namespace rebroadcast::fusion
