#pragma once

#include <cstdint>
#include <vector>

namespace spav {

// Iterative radix-2 complex FFT over split re/im arrays. Lengths are powers
// of two; tables are precomputed per instance.
class Fft {
  public:
    explicit Fft(std::size_t n);

    std::size_t size() const { return n_; }
    void forward(double* re, double* im) const;
    // Unscaled inverse; caller divides by n (transform_3d handles it).
    void inverse(double* re, double* im) const;

  private:
    void run(double* re, double* im, bool inverse) const;

    std::size_t n_ = 0;
    std::vector<std::uint32_t> bit_reverse_;
    std::vector<double> twiddle_re_, twiddle_im_;  // per-stage tables, packed
};

// In-place 3-D FFT over an n^3 volume (x fastest). Inverse includes the
// 1/n^3 normalization.
void fft3(double* re, double* im, std::size_t n, bool inverse);

}  // namespace spav
