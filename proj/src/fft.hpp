#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace grftopo::detail {

enum class FftDirection { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

/// Unnormalized in-place n-dimensional DFT over a row-major array.
/// Forward uses exp(-2 pi i jk/m), backward exp(+2 pi i jk/m).
inline void fft_inplace(std::vector<std::complex<double>>& data, const std::vector<int>& shape,
                        FftDirection direction) {
  // Planner calls are not thread-safe; execution is.
  static std::mutex planner_mutex;
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex);
    plan = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), buf, buf,
                         static_cast<int>(direction), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(planner_mutex);
  fftw_destroy_plan(plan);
}

}  // namespace grftopo::detail
