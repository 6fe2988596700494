#include "avdet/fft.hpp"

#include <fftw3.h>

#include <cstring>

#include "avdet/errors.hpp"

namespace avdet {

RealFft::RealFft(int n) : n_(n) {
  require(n > 0, errc::config, "RealFft: size must be positive");
  in_ = fftw_alloc_real(n);
  out_ = fftw_alloc_complex(n / 2 + 1);
  plan_ = fftw_plan_dft_r2c_1d(n, in_, static_cast<fftw_complex*>(out_), FFTW_ESTIMATE);
  require(plan_ != nullptr, errc::numeric, "RealFft: plan creation failed");
}

RealFft::~RealFft() {
  fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  fftw_free(in_);
  fftw_free(out_);
}

void RealFft::transform(const double* in, std::complex<double>* out) const {
  std::memcpy(in_, in, sizeof(double) * n_);
  fftw_execute(static_cast<fftw_plan>(plan_));
  const fftw_complex* o = static_cast<const fftw_complex*>(out_);
  for (int i = 0; i <= n_ / 2; ++i) out[i] = std::complex<double>(o[i][0], o[i][1]);
}

}  // namespace avdet
