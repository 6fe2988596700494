#pragma once
#include <complex>
#include <vector>

namespace avdet {

// Real-to-complex FFT backed by FFTW. One plan per transform size, cached.
// Output has n/2 + 1 bins. Not thread-safe (plan cache is shared).
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  void transform(const double* in, std::complex<double>* out) const;

 private:
  int n_;
  void* plan_;   // fftw_plan
  double* in_;   // fftw-aligned buffers
  void* out_;    // fftw_complex*
};

}  // namespace avdet
