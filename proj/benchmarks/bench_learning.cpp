#include <benchmark/benchmark.h>

#include "rebroadcast/fusion.hpp"
#include "rebroadcast/random.hpp"
#include "rebroadcast/vocab.hpp"

using namespace rebroadcast;

namespace {

vocab::PointMatrix random_descriptors(std::size_t n) {
    Rng rng(3);
    vocab::PointMatrix m;
    for (std::size_t i = 0; i < n; ++i) {
        keypoint::BinaryDescriptor d;
        for (std::size_t b = 0; b < 512; ++b) d.set(b, rng.uniform() < 0.5);
        m.append(d);
    }
    return m;
}

void BM_KMeans(benchmark::State& state) {
    const auto pts = random_descriptors(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(vocab::kmeans(pts, 10, 1));
}
BENCHMARK(BM_KMeans)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Assign(benchmark::State& state) {
    const auto pts = random_descriptors(64);
    const auto vocab = vocab::kmeans(pts, static_cast<int>(state.range(0)), 1).vocabulary;
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(vocab::assign(pts.row(i++ % pts.rows()), vocab));
}
BENCHMARK(BM_Assign)->Arg(10)->Arg(40);

// Fused-vector sized problems: 140 samples of 648 + k dimensions.
void BM_SvmTrain(benchmark::State& state) {
    Rng rng(9);
    const int n = 140;
    const int dim = 658;
    std::vector<std::vector<double>> x(n, std::vector<double>(dim));
    std::vector<fusion::Label> y(n);
    for (int i = 0; i < n; ++i) {
        y[static_cast<std::size_t>(i)] = i % 2 ? fusion::Label::Counterfeit : fusion::Label::Genuine;
        double sum = 0.0;
        for (double& v : x[static_cast<std::size_t>(i)]) sum += v = rng.uniform() + (i % 2 && rng.uniform() < 0.05 ? 0.3 : 0.0);
        for (double& v : x[static_cast<std::size_t>(i)]) v /= sum;
    }
    const double C = static_cast<double>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(fusion::svm_train(x, y, C));
}
BENCHMARK(BM_SvmTrain)->Arg(1)->Arg(1024)->Arg(32768)->Unit(benchmark::kMillisecond);

}  // namespace
