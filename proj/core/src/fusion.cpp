#include "rebroadcast/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/random.hpp"

namespace rebroadcast::fusion {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kMaxGramSamples = 4096;

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Label other(Label l) noexcept { return l == Label::Genuine ? Label::Counterfeit : Label::Genuine; }

// Precomputed linear kernel over the full sample set; absent for very large
// sets, in which case columns are computed on demand.
struct Gram {
    std::size_t n = 0;
    std::vector<double> values;

    double operator()(std::size_t a, std::size_t b) const noexcept { return values[a * n + b]; }
};

std::optional<Gram> make_gram(const std::vector<std::vector<double>>& samples) {
    if (samples.size() > kMaxGramSamples) return std::nullopt;
    Gram g;
    g.n = samples.size();
    g.values.resize(g.n * g.n);
    for (std::size_t a = 0; a < g.n; ++a) {
        for (std::size_t b = a; b < g.n; ++b) {
            const double k = dot(samples[a], samples[b]);
            g.values[a * g.n + b] = k;
            g.values[b * g.n + a] = k;
        }
    }
    return g;
}

void validate_training_set(const std::vector<std::vector<double>>& samples, std::span<const Label> labels, double C) {
    if (samples.size() != labels.size()) throw TrainingError("sample and label counts differ");
    if (samples.empty()) throw TrainingError("no training samples");
    if (!(C > 0.0) || !std::isfinite(C)) throw ParameterError("SVM cost C must be positive");
    const std::size_t dim = samples.front().size();
    for (const auto& s : samples) {
        if (s.size() != dim) throw TrainingError("training samples have different dimensions");
    }
}

// SMO with second-order working set selection on the dual
//   min 0.5 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j x_i.x_j
// restricted to the samples listed in `subset`.
LinearSvmModel solve(const std::vector<std::vector<double>>& samples, std::span<const std::size_t> subset,
                     std::span<const double> y_all, double C, const SvmOptions& options, const Gram* gram) {
    const std::size_t n = subset.size();
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = y_all[subset[t]];

    std::size_t positives = 0;
    for (double v : y) positives += v > 0.0 ? 1 : 0;
    if (positives == 0 || positives == n) throw TrainingError("training data contains a single class");

    const auto kernel = [&](std::size_t a, std::size_t b) {
        return gram != nullptr ? (*gram)(subset[a], subset[b]) : dot(samples[subset[a]], samples[subset[b]]);
    };

    std::vector<double> diag(n);
    for (std::size_t t = 0; t < n; ++t) diag[t] = kernel(t, t);

    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    std::vector<double> qi(n);
    std::vector<double> qj(n);
    const auto column = [&](std::size_t i, std::vector<double>& out) {
        for (std::size_t t = 0; t < n; ++t) out[t] = y[i] * y[t] * kernel(i, t);
    };
    const auto upper = [&](std::size_t t) { return alpha[t] >= C; };
    const auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    for (long iter = 0; iter < options.max_iterations; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0.0) {
                if (!upper(t) && -grad[t] >= gmax) {
                    gmax = -grad[t];
                    i = t;
                }
            } else if (!lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i = t;
            }
        }
        if (i == n) break;
        column(i, qi);

        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_gain = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            double diff = 0.0;
            double quad = 0.0;
            if (y[t] > 0.0) {
                if (lower(t)) continue;
                gmax2 = std::max(gmax2, grad[t]);
                diff = gmax + grad[t];
                quad = diag[i] + diag[t] - 2.0 * y[i] * qi[t];
            } else {
                if (upper(t)) continue;
                gmax2 = std::max(gmax2, -grad[t]);
                diff = gmax - grad[t];
                quad = diag[i] + diag[t] + 2.0 * y[i] * qi[t];
            }
            if (diff > 0.0) {
                const double gain = -(diff * diff) / (quad > 0.0 ? quad : kTau);
                if (gain <= best_gain) {
                    best_gain = gain;
                    j = t;
                }
            }
        }
        if (gmax + gmax2 < options.tolerance || j == n) break;
        column(j, qj);

        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = diag[i] + diag[j] + 2.0 * qi[j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = diag[i] + diag[j] - 2.0 * qi[j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * di + qj[t] * dj;
    }

    // Offset from free multipliers, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] < 0.0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] > 0.0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (ub + lb);

    LinearSvmModel model;
    model.C = C;
    model.bias = -rho;
    model.weights.assign(samples[subset.front()].size(), 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] == 0.0) continue;
        const double coef = alpha[t] * y[t];
        const auto& x = samples[subset[t]];
        for (std::size_t d = 0; d < x.size(); ++d) model.weights[d] += coef * x[d];
    }
    return model;
}

std::vector<double> signs(std::span<const Label> labels, Label positive) {
    std::vector<double> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == positive ? 1.0 : -1.0;
    return y;
}

}  // namespace

FeatureVector lgmfs(std::span<const double> mribgp, std::span<const double> bomrw) {
    FeatureVector out{FeatureKind::Lgmfs, {}};
    out.values.reserve(mribgp.size() + bomrw.size());
    out.values.insert(out.values.end(), mribgp.begin(), mribgp.end());
    out.values.insert(out.values.end(), bomrw.begin(), bomrw.end());
    double norm = 0.0;
    for (double v : out.values) {
        if (!std::isfinite(v) || v < 0.0) throw ParameterError("fusion inputs must be finite and non-negative");
        norm += v;
    }
    if (norm == 0.0) throw DegenerateInputError("both feature blocks are all zero");
    for (double& v : out.values) v /= norm;
    return out;
}

FeatureVector l1_normalized(std::span<const double> values, FeatureKind kind) {
    FeatureVector out{kind, std::vector<double>(values.begin(), values.end())};
    double norm = 0.0;
    for (double v : out.values) norm += std::abs(v);
    if (norm > 0.0) {
        for (double& v : out.values) v /= norm;
    }
    return out;
}

LinearSvmModel svm_train(const std::vector<std::vector<double>>& samples, std::span<const Label> labels, double C,
                         Label positive, const SvmOptions& options) {
    validate_training_set(samples, labels, C);
    const auto y = signs(labels, positive);
    std::vector<std::size_t> all(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto gram = make_gram(samples);
    auto model = solve(samples, all, y, C, options, gram ? &*gram : nullptr);
    model.positive = positive;
    return model;
}

double svm_objective(const LinearSvmModel& model, const std::vector<std::vector<double>>& samples,
                     std::span<const Label> labels) {
    double reg = 0.5 * dot(model.weights, model.weights);
    double loss = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double y = labels[i] == model.positive ? 1.0 : -1.0;
        loss += std::max(0.0, 1.0 - y * (dot(model.weights, samples[i]) + model.bias));
    }
    return reg + model.C * loss;
}

Prediction svm_predict(const LinearSvmModel& model, std::span<const double> features) {
    if (features.size() != model.weights.size()) {
        throw DimensionError("feature dimension " + std::to_string(features.size()) + " does not match model " +
                             std::to_string(model.weights.size()));
    }
    const double margin = dot(model.weights, features) + model.bias;
    if (margin > 0.0) return {model.positive, margin};
    if (margin < 0.0) return {other(model.positive), margin};
    return {Label::Genuine, margin};
}

Metrics compute_metrics(std::span<const Label> predicted, std::span<const Label> truth, Label positive) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw ParameterError("metrics need equal-length, non-empty label lists");
    }
    Metrics m;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool actual = truth[i] == positive;
        const bool said = predicted[i] == positive;
        if (actual && said) ++m.tp;
        else if (actual) ++m.fn;
        else if (said) ++m.fp;
        else ++m.tn;
    }
    m.tpr_undefined = m.tp + m.fn == 0;
    m.fpr_undefined = m.fp + m.tn == 0;
    m.tpr = m.tpr_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    m.fpr = m.fpr_undefined ? 0.0 : static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn);
    m.nacc = 100.0 * (m.tpr + (1.0 - m.fpr)) / 2.0;
    if (m.tp + m.fp > 0) {
        const double precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        m.f_measure = precision + m.tpr > 0.0 ? 2.0 * precision * m.tpr / (precision + m.tpr) : 0.0;
    }
    return m;
}

std::vector<double> default_c_grid() {
    std::vector<double> grid;
    for (int e = -5; e <= 15; e += 2) grid.push_back(std::ldexp(1.0, e));
    return grid;
}

std::vector<int> stratified_folds(std::span<const Label> labels, int folds, std::uint64_t seed) {
    if (folds < 2) throw ParameterError("cross-validation needs at least 2 folds");
    std::vector<int> fold(labels.size(), -1);
    Rng rng(seed);
    int next = 0;
    for (Label cls : {Label::Genuine, Label::Counterfeit}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        if (members.size() < static_cast<std::size_t>(folds)) {
            throw ParameterError("class " + std::string(to_string(cls)) + " has " + std::to_string(members.size()) +
                                 " samples, fewer than " + std::to_string(folds) + " folds");
        }
        for (std::size_t i = members.size(); i > 1; --i) {
            const auto swap_with = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(members[i - 1], members[swap_with]);
        }
        for (std::size_t idx : members) {
            fold[idx] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

CrossValidationResult cross_validate(const std::vector<std::vector<double>>& samples, std::span<const Label> labels,
                                     std::span<const double> c_grid, int folds, std::uint64_t seed, Label positive,
                                     const SvmOptions& options) {
    if (c_grid.empty()) throw ParameterError("C grid is empty");
    validate_training_set(samples, labels, c_grid.front());

    CrossValidationResult result;
    result.grid.assign(c_grid.begin(), c_grid.end());
    result.fold_of_sample = stratified_folds(labels, folds, seed);
    const auto y = signs(labels, positive);
    const auto gram = make_gram(samples);

    for (double C : result.grid) {
        if (!(C > 0.0)) throw ParameterError("C grid values must be positive");
        std::vector<double> per_fold;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> train;
            std::vector<std::size_t> held;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                (result.fold_of_sample[i] == f ? held : train).push_back(i);
            }
            auto model = solve(samples, train, y, C, options, gram ? &*gram : nullptr);
            model.positive = positive;
            std::vector<Label> predicted;
            std::vector<Label> truth;
            for (std::size_t i : held) {
                predicted.push_back(svm_predict(model, samples[i]).label);
                truth.push_back(labels[i]);
            }
            per_fold.push_back(compute_metrics(predicted, truth, positive).nacc);
        }
        result.mean_nacc.push_back(std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / folds);
        result.fold_nacc.push_back(std::move(per_fold));
    }

    // Smallest C among the best scores.
    std::vector<std::size_t> order(result.grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return result.grid[a] < result.grid[b]; });
    std::size_t best = order.front();
    for (std::size_t idx : order) {
        if (result.mean_nacc[idx] > result.mean_nacc[best] + 1e-9) best = idx;
    }
    result.best_c = result.grid[best];
    return result;
}

}  // namespace rebroadcast::fusion
