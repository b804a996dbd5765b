// Parallel kernels against their serial references. Set OMP_NUM_THREADS to
// compare thread counts.

#include <random>

#include <benchmark/benchmark.h>

#include "fixtures.hpp"
#include "gaitstream/dataset.hpp"
#include "gaitstream/features.hpp"
#include "gaitstream/gbdt.hpp"

using namespace gaitstream;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

// 60 s of one EMG channel
const std::vector<double>& emg_signal()
{
    static const auto v = noise(120000, 1);
    return v;
}

template <auto Kernel>
void emg_rows(benchmark::State& state)
{
    const auto& x = emg_signal();
    const std::size_t count = window_count(x.size(), 400, 200);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Kernel(x, 400, 200, count, 0.0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(count));
}

template <auto Kernel>
void imu_rows(benchmark::State& state)
{
    static const auto x = noise(12000, 2), y = noise(12000, 3), z = noise(12000, 4);
    const std::size_t count = window_count(x.size(), 40, 20);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Kernel(x, y, z, 200.0, 40, 20, count));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(count));
}

template <Execution E>
void train_trees(benchmark::State& state)
{
    static const auto table = fixture::toy_table(4000, 52, 7, 5);
    GBDTParams hp;
    hp.n_trees = 20;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train(table, hp, E));
    }
}

template <bool Serial>
void preprocess(benchmark::State& state)
{
    static const auto s = fixture::session(4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(Serial ? preprocess_session_serial(s, PreprocessOptions{})
                                        : preprocess_session(s, PreprocessOptions{}));
    }
}

} // namespace

BENCHMARK(emg_rows<emg_feature_rows>)->Name("emg_feature_rows/parallel");
BENCHMARK(emg_rows<emg_feature_rows_serial>)->Name("emg_feature_rows/serial");
BENCHMARK(imu_rows<imu_feature_rows>)->Name("imu_feature_rows/parallel");
BENCHMARK(imu_rows<imu_feature_rows_serial>)->Name("imu_feature_rows/serial");
BENCHMARK(train_trees<Execution::parallel>)->Name("train/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(train_trees<Execution::serial>)->Name("train/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(preprocess<false>)->Name("preprocess_session/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(preprocess<true>)->Name("preprocess_session/serial")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
