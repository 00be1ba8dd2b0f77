// Serial reference vs OpenMP kernels on the sizes the pipeline uses.

#include <benchmark/benchmark.h>

#include <chirpnav/kernels.hpp>
#include <chirpnav/signal_core.hpp>

#include <cmath>

using namespace chirpnav;

namespace {

constexpr std::size_t kChirpLen = 73728;  // sf 12, bw 500 kHz, fs 9 MHz

kernels::ChirpTone tone() { return {Complex(1.0, 0.0), 9e6, 500e3, 500e3 / 8.192e-3, 1e-7, 1e6}; }

template <auto Fn>
void BM_AccumulateChirp(benchmark::State& st) {
  std::vector<Complex> out(kChirpLen);
  for (auto _ : st) {
    Fn(out, tone());
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_ZoomDtft(benchmark::State& st) {
  std::vector<Complex> y(kChirpLen, Complex(1.0, 0.5));
  const auto w = kernels::hann(kChirpLen);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(y, w, 3.25, kChirpLen));
}

template <auto Fn>
void BM_NullSpectrum(benchmark::State& st) {
  const std::size_t m = 4, k = 3;
  std::vector<Complex> en(m * k, Complex(0.5, 0.1));
  std::vector<double> grid(1799), out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = std::sin(deg2rad(-89.9 + 0.1 * static_cast<double>(i)));
  for (auto _ : st) {
    Fn(en, m, k, kPi, grid, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_DelayProfile(benchmark::State& st) {
  std::vector<Complex> x(13, Complex(1.0, 0.0));
  std::vector<int> bins(13);
  for (int i = 0; i < 13; ++i) bins[static_cast<std::size_t>(i)] = i;
  std::vector<double> out(1024);
  for (auto _ : st) {
    Fn(x, bins, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_Dechirp(benchmark::State& st) {
  ChirpConfig cfg;
  cfg.fs = 9e6;
  const Dechirper dech(cfg);
  const auto rx = make_upchirp(cfg);
  for (auto _ : st) benchmark::DoNotOptimize(dech(rx).fractional_bin);
}

}  // namespace

BENCHMARK(BM_AccumulateChirp<kernels::serial::accumulate_chirp>)->Name("accumulate_chirp/serial");
BENCHMARK(BM_AccumulateChirp<kernels::parallel::accumulate_chirp>)->Name("accumulate_chirp/omp");
BENCHMARK(BM_ZoomDtft<kernels::serial::zoom_dtft>)->Name("zoom_dtft/serial");
BENCHMARK(BM_ZoomDtft<kernels::parallel::zoom_dtft>)->Name("zoom_dtft/omp");
BENCHMARK(BM_NullSpectrum<kernels::serial::subspace_null_spectrum>)->Name("null_spectrum/serial");
BENCHMARK(BM_NullSpectrum<kernels::parallel::subspace_null_spectrum>)->Name("null_spectrum/omp");
BENCHMARK(BM_DelayProfile<kernels::serial::delay_profile>)->Name("delay_profile/serial");
BENCHMARK(BM_DelayProfile<kernels::parallel::delay_profile>)->Name("delay_profile/omp");
BENCHMARK(BM_Dechirp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
