#include "chirpnav/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

namespace chirpnav::fft {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are created once per (size, direction) and kept for the process lifetime.
struct PlanCache {
  std::mutex mu;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans;

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard lock(mu);
    auto key = std::make_pair(n, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), in, out, sign, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(key, p);
    return p;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : ptr(fftw_alloc_complex(n)) {}
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* ptr;
};

std::vector<Complex> transform(std::span<const Complex> x, int sign) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  fftw_plan plan = cache().get(n, sign);
  FftwBuffer in(n);
  FftwBuffer out(n);
  std::memcpy(in.ptr, x.data(), n * sizeof(Complex));
  fftw_execute_dft(plan, in.ptr, out.ptr);
  std::vector<Complex> result(n);
  std::memcpy(static_cast<void*>(result.data()), out.ptr, n * sizeof(Complex));
  return result;
}

}  // namespace

std::vector<Complex> forward(std::span<const Complex> x) { return transform(x, FFTW_FORWARD); }

std::vector<Complex> inverse(std::span<const Complex> x) { return transform(x, FFTW_BACKWARD); }

}  // namespace chirpnav::fft
