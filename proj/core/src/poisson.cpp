#include "spav/poisson.hpp"

#include <algorithm>
#include <cmath>

#include "spav/fft.hpp"
#include "spav/threading.hpp"

namespace spav {

namespace {
constexpr double kTau = 6.283185307179586476925286766559;

// Signed frequency index for node m on an n-lattice.
inline int signed_freq(std::size_t m, std::size_t n) {
    return m < n / 2 ? static_cast<int>(m) : static_cast<int>(m) - static_cast<int>(n);
}
}  // namespace

void GridLayout::validate_resolution(int r) {
    if (r < 32 || r > 512 || (r & (r - 1)) != 0)
        throw Error("grid resolution must be a power of two in [32, 512], got " + std::to_string(r));
}

GridLayout GridLayout::fit(const Aabb& bounds, int resolution, double padding) {
    validate_resolution(resolution);
    if (!bounds.valid()) throw EmptyCloud("grid fit: empty bounds");
    const Vec3d ext = bounds.extent();
    const double max_extent = std::max({ext.x, ext.y, ext.z, 1e-6});
    const double side = padding * max_extent;
    GridLayout layout;
    layout.resolution = resolution;
    layout.spacing = side / resolution;
    layout.origin = bounds.center() - Vec3d{side, side, side} * 0.5;
    return layout;
}

double ScalarGrid::sample(const Vec3d& p) const {
    const int r = layout.resolution;
    const Vec3d u = (p - layout.origin) / layout.spacing;
    const double cx = std::clamp(u.x, 0.0, static_cast<double>(r - 1));
    const double cy = std::clamp(u.y, 0.0, static_cast<double>(r - 1));
    const double cz = std::clamp(u.z, 0.0, static_cast<double>(r - 1));
    const int i0 = std::min(static_cast<int>(cx), r - 2);
    const int j0 = std::min(static_cast<int>(cy), r - 2);
    const int k0 = std::min(static_cast<int>(cz), r - 2);
    const double fx = cx - i0, fy = cy - j0, fz = cz - k0;
    double acc = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                acc += w * at(i0 + dx, j0 + dy, k0 + dz);
            }
    return acc;
}

VectorGrid rasterize_normals(const OrientedPointCloud& cloud, int resolution, double sigma,
                             double padding) {
    if (cloud.size() == 0) throw EmptyCloud("rasterize_normals: empty cloud");
    return rasterize_normals(cloud, GridLayout::fit(cloud.bounds(), resolution, padding), sigma);
}

VectorGrid rasterize_normals(const OrientedPointCloud& cloud, const GridLayout& layout, double sigma) {
    if (cloud.size() == 0) throw EmptyCloud("rasterize_normals: empty cloud");
    GridLayout::validate_resolution(layout.resolution);
    VectorGrid grid(layout);
    const int r = layout.resolution;

    // Trilinear splat; the weights per point sum to one.
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const Vec3d u = (Vec3d(cloud.positions[p]) - layout.origin) / layout.spacing;
        const int i0 = std::clamp(static_cast<int>(std::floor(u.x)), 0, r - 2);
        const int j0 = std::clamp(static_cast<int>(std::floor(u.y)), 0, r - 2);
        const int k0 = std::clamp(static_cast<int>(std::floor(u.z)), 0, r - 2);
        const double fx = std::clamp(u.x - i0, 0.0, 1.0);
        const double fy = std::clamp(u.y - j0, 0.0, 1.0);
        const double fz = std::clamp(u.z - k0, 0.0, 1.0);
        const Vec3d n(cloud.normals[p]);
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                    const std::size_t idx = layout.index(i0 + dx, j0 + dy, k0 + dz);
                    grid.x[idx] += w * n.x;
                    grid.y[idx] += w * n.y;
                    grid.z[idx] += w * n.z;
                }
    }
    if (sigma <= 0) return grid;

    // Spectral Gaussian: multiply by exp(-sigma^2 w^2 / 2), sigma in cells.
    // Two real fields ride one complex transform (x + i y), the third goes
    // alone; a real even filter keeps the packing exact.
    const std::size_t n = static_cast<std::size_t>(r);
    const std::size_t total = layout.node_count();
    std::vector<double> re(total), im(total);

    auto apply_filter = [&](std::vector<double>& fre, std::vector<double>& fim) {
        const double c = -0.5 * sigma * sigma * (kTau / n) * (kTau / n);
        parallel_for(n, [&](std::size_t k0s, std::size_t k1s) {
            for (std::size_t k = k0s; k < k1s; ++k) {
                const double wk = static_cast<double>(signed_freq(k, n));
                for (std::size_t j = 0; j < n; ++j) {
                    const double wj = static_cast<double>(signed_freq(j, n));
                    const std::size_t base = (k * n + j) * n;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double wi = static_cast<double>(signed_freq(i, n));
                        const double g = std::exp(c * (wi * wi + wj * wj + wk * wk));
                        fre[base + i] *= g;
                        fim[base + i] *= g;
                    }
                }
            }
        }, 1);
    };

    // Pass 1: (x, y) packed.
    std::copy(grid.x.begin(), grid.x.end(), re.begin());
    std::copy(grid.y.begin(), grid.y.end(), im.begin());
    fft3(re.data(), im.data(), n, false);
    apply_filter(re, im);
    fft3(re.data(), im.data(), n, true);
    std::copy(re.begin(), re.end(), grid.x.begin());
    std::copy(im.begin(), im.end(), grid.y.begin());

    // Pass 2: z alone.
    std::copy(grid.z.begin(), grid.z.end(), re.begin());
    std::fill(im.begin(), im.end(), 0.0);
    fft3(re.data(), im.data(), n, false);
    apply_filter(re, im);
    fft3(re.data(), im.data(), n, true);
    std::copy(re.begin(), re.end(), grid.z.begin());

    return grid;
}

ScalarGrid poisson_solve(const VectorGrid& v) {
    const GridLayout& layout = v.layout;
    const std::size_t n = static_cast<std::size_t>(layout.resolution);
    const std::size_t total = layout.node_count();

    // Forward transforms of the three components; (x, y) share one.
    std::vector<double> re_xy(total), im_xy(total), re_z(total), im_z(total);
    std::copy(v.x.begin(), v.x.end(), re_xy.begin());
    std::copy(v.y.begin(), v.y.end(), im_xy.begin());
    std::copy(v.z.begin(), v.z.end(), re_z.begin());
    std::fill(im_z.begin(), im_z.end(), 0.0);
    fft3(re_xy.data(), im_xy.data(), n, false);
    fft3(re_z.data(), im_z.data(), n, false);

    // chi_hat = -i (w . v_hat) / |w|^2, physical wavenumbers w = tau*m/L.
    // The packed transform is unpacked on the fly via conj symmetry:
    //   vx_hat(k) = (Z(k) + conj(Z(-k))) / 2
    //   vy_hat(k) = (Z(k) - conj(Z(-k))) / (2i)
    std::vector<double> chi_re(total), chi_im(total);
    const double freq_unit = kTau / layout.domain_length();

    parallel_for(n, [&](std::size_t k0s, std::size_t k1s) {
        for (std::size_t k = k0s; k < k1s; ++k) {
            const std::size_t kneg = (n - k) % n;
            // Nyquist rows get zero first-derivative weight.
            const double wz = (2 * k == n) ? 0.0 : freq_unit * signed_freq(k, n);
            const double wz2 = freq_unit * signed_freq(k, n) * freq_unit * signed_freq(k, n);
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t jneg = (n - j) % n;
                const double wy = (2 * j == n) ? 0.0 : freq_unit * signed_freq(j, n);
                const double wy2 = freq_unit * signed_freq(j, n) * freq_unit * signed_freq(j, n);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t idx = (k * n + j) * n + i;
                    if (idx == 0) {
                        chi_re[0] = 0;
                        chi_im[0] = 0;
                        continue;
                    }
                    const std::size_t ineg = (n - i) % n;
                    const double wx = (2 * i == n) ? 0.0 : freq_unit * signed_freq(i, n);
                    const double wx2 = freq_unit * signed_freq(i, n) * freq_unit * signed_freq(i, n);

                    const std::size_t nidx = (kneg * n + jneg) * n + ineg;
                    const double zr = re_xy[idx], zi = im_xy[idx];
                    const double cr = re_xy[nidx], ci = -im_xy[nidx];  // conj(Z(-k))
                    const double vx_re = 0.5 * (zr + cr), vx_im = 0.5 * (zi + ci);
                    const double vy_re = 0.5 * (zi - ci), vy_im = -0.5 * (zr - cr);

                    // div_hat = i (wx vx + wy vy + wz vz)
                    const double dot_re = wx * vx_re + wy * vy_re + wz * re_z[idx];
                    const double dot_im = wx * vx_im + wy * vy_im + wz * im_z[idx];
                    const double div_re = -dot_im;
                    const double div_im = dot_re;

                    const double w2 = wx2 + wy2 + wz2;
                    chi_re[idx] = -div_re / w2;
                    chi_im[idx] = -div_im / w2;
                }
            }
        }
    }, 1);

    fft3(chi_re.data(), chi_im.data(), n, true);
    ScalarGrid chi(layout);
    chi.values = std::move(chi_re);
    return chi;
}

double select_isolevel(const ScalarGrid& chi, const OrientedPointCloud& cloud) {
    if (cloud.size() == 0) throw EmptyCloud("select_isolevel: empty cloud");
    double acc = 0;
    for (const auto& p : cloud.positions) acc += chi.sample(Vec3d(p));
    return acc / static_cast<double>(cloud.size());
}

}  // namespace spav
