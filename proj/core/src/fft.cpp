#include "bubbletrack/fft.hpp"

#include <fftw3.h>

#include <cstring>

namespace bubbletrack::fft {

namespace {
cvec run(const cvec& in, int sign) {
  const int n = static_cast<int>(in.size());
  cvec out(in.size());
  if (n == 0) return out;
  auto* buf_in = fftw_alloc_complex(n);
  auto* buf_out = fftw_alloc_complex(n);
  fftw_plan plan = fftw_plan_dft_1d(n, buf_in, buf_out, sign, FFTW_ESTIMATE);
  std::memcpy(buf_in, in.data(), sizeof(fftw_complex) * n);
  fftw_execute(plan);
  std::memcpy(static_cast<void*>(out.data()), buf_out, sizeof(fftw_complex) * n);
  fftw_destroy_plan(plan);
  fftw_free(buf_in);
  fftw_free(buf_out);
  return out;
}
}  // namespace

cvec forward(const cvec& x) { return run(x, FFTW_FORWARD); }

cvec inverse(const cvec& X) {
  cvec out = run(X, FFTW_BACKWARD);
  const double scale = out.empty() ? 1.0 : 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return out;
}

std::size_t fast_length(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u, 7u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

}  // namespace bubbletrack::fft
