#ifndef BUBBLETRACK_FFT_HPP
#define BUBBLETRACK_FFT_HPP

#include <complex>
#include <cstddef>
#include <vector>

namespace bubbletrack::fft {

using cvec = std::vector<std::complex<double>>;

// Unnormalized forward transform X_k = sum_n x_n exp(-2 pi i k n / N).
cvec forward(const cvec& x);
// Normalized inverse; inverse(forward(x)) == x.
cvec inverse(const cvec& X);

// Smallest length >= n whose prime factors are 2, 3, 5 or 7.
std::size_t fast_length(std::size_t n);

}  // namespace bubbletrack::fft

#endif
