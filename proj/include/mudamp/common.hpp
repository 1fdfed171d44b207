#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mudamp {

using Complex = std::complex<double>;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Execution policy for the data-parallel kernels. Serial is the reference
// path; Parallel distributes loop iterations over OpenMP threads. Both paths
// perform identical arithmetic per index, so results match exactly.
enum class ExecMode { Serial, Parallel };

// Runs fn(i) for i in [0, n). Iterations must be independent; each iteration
// writes only to its own output slot, which keeps results thread-count
// independent.
template <typename F>
void parallel_for(std::size_t n, ExecMode mode, F&& fn) {
#ifdef _OPENMP
    if (mode == ExecMode::Parallel) {
        #pragma omp parallel for schedule(dynamic, 1)
        for (long long i = 0; i < static_cast<long long>(n); ++i)
            fn(static_cast<std::size_t>(i));
        return;
    }
#else
    (void)mode;
#endif
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace mudamp
