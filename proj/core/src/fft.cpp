#include "spav/fft.hpp"

#include <cmath>
#include <stdexcept>

#include "spav/threading.hpp"

namespace spav {

namespace {
constexpr double kTau = 6.283185307179586476925286766559;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

Fft::Fft(std::size_t n) : n_(n) {
    if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
    bit_reverse_.resize(n);
    std::uint32_t log2n = 0;
    while ((std::size_t{1} << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t r = 0;
        for (std::uint32_t b = 0; b < log2n; ++b)
            if (i & (std::size_t{1} << b)) r |= 1u << (log2n - 1 - b);
        bit_reverse_[i] = r;
    }
    // Stage tables: for stage length len, twiddles w^j, j < len/2, packed
    // sequentially (len = 2, 4, ..., n).
    twiddle_re_.reserve(n);
    twiddle_im_.reserve(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        for (std::size_t j = 0; j < len / 2; ++j) {
            const double a = -kTau * static_cast<double>(j) / static_cast<double>(len);
            twiddle_re_.push_back(std::cos(a));
            twiddle_im_.push_back(std::sin(a));
        }
    }
}

void Fft::run(double* re, double* im, bool inverse) const {
    for (std::size_t i = 0; i < n_; ++i) {
        const std::uint32_t r = bit_reverse_[i];
        if (i < r) {
            std::swap(re[i], re[r]);
            std::swap(im[i], im[r]);
        }
    }
    std::size_t table_offset = 0;
    for (std::size_t len = 2; len <= n_; len <<= 1) {
        const std::size_t half = len / 2;
        const double* wr = twiddle_re_.data() + table_offset;
        const double* wi = twiddle_im_.data() + table_offset;
        for (std::size_t block = 0; block < n_; block += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const double twr = wr[j];
                const double twi = inverse ? -wi[j] : wi[j];
                const std::size_t a = block + j;
                const std::size_t b = a + half;
                const double xr = re[b] * twr - im[b] * twi;
                const double xi = re[b] * twi + im[b] * twr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        table_offset += half;
    }
}

void Fft::forward(double* re, double* im) const { run(re, im, false); }
void Fft::inverse(double* re, double* im) const { run(re, im, true); }

void fft3(double* re, double* im, std::size_t n, bool inverse) {
    const Fft fft(n);
    const std::size_t n2 = n * n;

    // Lines along x are contiguous.
    parallel_for(n2, [&](std::size_t l0, std::size_t l1) {
        for (std::size_t line = l0; line < l1; ++line) {
            double* r = re + line * n;
            double* i = im + line * n;
            inverse ? fft.inverse(r, i) : fft.forward(r, i);
        }
    }, 16);

    // Lines along y (stride n) and z (stride n^2): gather, transform, scatter.
    auto strided_pass = [&](std::size_t stride, auto line_base) {
        parallel_for(n2, [&](std::size_t l0, std::size_t l1) {
            std::vector<double> br(n), bi(n);
            for (std::size_t line = l0; line < l1; ++line) {
                const std::size_t base = line_base(line);
                for (std::size_t j = 0; j < n; ++j) {
                    br[j] = re[base + j * stride];
                    bi[j] = im[base + j * stride];
                }
                inverse ? fft.inverse(br.data(), bi.data()) : fft.forward(br.data(), bi.data());
                for (std::size_t j = 0; j < n; ++j) {
                    re[base + j * stride] = br[j];
                    im[base + j * stride] = bi[j];
                }
            }
        }, 16);
    };
    // y: lines indexed by (k, i)
    strided_pass(n, [n, n2](std::size_t line) {
        const std::size_t k = line / n, i = line % n;
        return k * n2 + i;
    });
    // z: lines indexed by (j, i)
    strided_pass(n2, [n](std::size_t line) {
        const std::size_t j = line / n, i = line % n;
        return j * n + i;
    });

    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n * n2);
        parallel_for(n * n2, [&](std::size_t a, std::size_t b) {
            for (std::size_t idx = a; idx < b; ++idx) {
                re[idx] *= scale;
                im[idx] *= scale;
            }
        }, 4096);
    }
}

}  // namespace spav
