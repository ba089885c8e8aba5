#ifndef NVSCATTER_FIELD_HPP
#define NVSCATTER_FIELD_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "nvscatter/common.hpp"
#include "nvscatter/fft.hpp"

namespace nvscatter {

/*
 * Square periodic sampling of the truncated z-plane, z = x1 + i x2.
 * Node (j,k) sits at z = (-R + j h) + i (-R + k h), h = 2R/N, so the z = 0
 * node exists for even N.  The conjugate Fourier grid has spacing pi/R and
 * carries the spectral-derivative multipliers
 *     d/dz     <->  (i/2) conj(p),      d/dzbar  <->  (i/2) p,
 * with p = xi1 + i xi2 the complex frequency.
 */
struct Grid {
    double R = 0.0;
    int N = 0;

    double h() const { return 2.0 * R / N; }
    size_t size() const { return size_t(N) * N; }

    double coord(int j) const { return -R + j * h(); }
    cplx node(int j, int k) const { return {coord(j), coord(k)}; }

    // Signed frequency index for FFT bin m (standard wraparound order).
    int freq_index(int m) const { return m < N / 2 ? m : m - N; }
    double freq(int m) const { return freq_index(m) * pi / R; }

    bool operator==(const Grid& o) const { return R == o.R && N == o.N; }
};

inline Grid make_grid(double R, int N) {
    require(R > 0.0, "make_grid: R must be positive");
    require(N % 2 == 0, "make_grid: N must be even");
    require(N >= 16, "make_grid: N must be at least 16");
    return Grid{R, N};
}

struct ComplexField {
    Grid grid;
    std::vector<cplx> values;

    ComplexField() = default;
    explicit ComplexField(const Grid& g) : grid(g), values(g.size(), cplx(0.0)) {}
    ComplexField(const Grid& g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
        require(values.size() == g.size(), "ComplexField: value count does not match grid");
    }

    cplx& at(int j, int k) { return values[size_t(j) * grid.N + k]; }
    const cplx& at(int j, int k) const { return values[size_t(j) * grid.N + k]; }
};

struct RealField {
    Grid grid;
    std::vector<double> values;

    RealField() = default;
    explicit RealField(const Grid& g) : grid(g), values(g.size(), 0.0) {}
    RealField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        require(values.size() == g.size(), "RealField: value count does not match grid");
    }

    double& at(int j, int k) { return values[size_t(j) * grid.N + k]; }
    const double& at(int j, int k) const { return values[size_t(j) * grid.N + k]; }
};

template <typename F>
ComplexField make_complex_field(const Grid& g, F&& f) {
    ComplexField out(g);
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k)
            out.at(j, k) = cplx(f(g.node(j, k)));
    return out;
}

template <typename F>
RealField make_real_field(const Grid& g, F&& f) {
    RealField out(g);
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k)
            out.at(j, k) = double(f(g.node(j, k)));
    return out;
}

inline ComplexField to_complex(const RealField& f) {
    ComplexField out(f.grid);
    for (size_t i = 0; i < f.values.size(); ++i) out.values[i] = f.values[i];
    return out;
}

inline RealField real_part(const ComplexField& f) {
    RealField out(f.grid);
    for (size_t i = 0; i < f.values.size(); ++i) out.values[i] = f.values[i].real();
    return out;
}

inline double linf_norm(const ComplexField& f) {
    double m = 0.0;
    for (const auto& v : f.values) m = std::max(m, std::abs(v));
    return m;
}

inline double linf_norm(const RealField& f) {
    double m = 0.0;
    for (const auto& v : f.values) m = std::max(m, std::abs(v));
    return m;
}

inline double l2_norm(const ComplexField& f) {
    double s = 0.0;
    for (const auto& v : f.values) s += std::norm(v);
    double h = f.grid.h();
    return std::sqrt(h * h * s);
}

inline double l2_norm(const RealField& f) {
    double s = 0.0;
    for (const auto& v : f.values) s += v * v;
    double h = f.grid.h();
    return std::sqrt(h * h * s);
}

// Largest |f| on the outermost node ring; the truncation-quality monitor.
inline double boundary_max(const ComplexField& f) {
    double m = 0.0;
    int N = f.grid.N;
    for (int j = 0; j < N; ++j) {
        m = std::max({m, std::abs(f.at(j, 0)), std::abs(f.at(j, N - 1)),
                      std::abs(f.at(0, j)), std::abs(f.at(N - 1, j))});
    }
    return m;
}

inline double boundary_max(const RealField& f) { return boundary_max(to_complex(f)); }

// Rectangle-rule quadrature h^2 sum f; exact for periodic band-limited samples.
inline cplx integrate(const ComplexField& f) {
    cplx s = 0.0;
    for (const auto& v : f.values) s += v;
    double h = f.grid.h();
    return h * h * s;
}

inline double integrate(const RealField& f) {
    double s = 0.0;
    for (const auto& v : f.values) s += v;
    double h = f.grid.h();
    return h * h * s;
}

// Applies a Fourier multiplier: out = IFFT( m(p) * FFT(f) ), with m given the
// complex frequency p = xi1 + i xi2 of each mode.
template <typename M>
ComplexField apply_fourier_multiplier(const ComplexField& f, M&& m) {
    const Grid& g = f.grid;
    std::vector<cplx> hat = f.values;
    FftEngine::instance().forward(hat, g.N);
    for (int a = 0; a < g.N; ++a) {
        double xi1 = g.freq(a);
        for (int b = 0; b < g.N; ++b) {
            double xi2 = g.freq(b);
            hat[size_t(a) * g.N + b] *= m(cplx(xi1, xi2));
        }
    }
    FftEngine::instance().backward(hat, g.N);
    double scale = 1.0 / (double(g.N) * g.N);
    for (auto& v : hat) v *= scale;
    return ComplexField(g, std::move(hat));
}

enum class Deriv { dz, dzbar };

inline ComplexField spectral_derivative(const ComplexField& f, Deriv kind, int order = 1) {
    require(order >= 1 && order <= 3, "spectral_derivative: order must be 1..3");
    const int N = f.grid.N;
    const int nyq = -N / 2;
    return apply_fourier_multiplier(f, [&](cplx p) {
        // Zero the Nyquist line on odd orders (no well-defined sign there).
        if (order % 2 == 1) {
            double xiN = nyq * pi / f.grid.R;
            if (p.real() == xiN || p.imag() == xiN) return cplx(0.0);
        }
        cplx base = (kind == Deriv::dz) ? cplx(0.0, 0.5) * std::conj(p)
                                        : cplx(0.0, 0.5) * p;
        cplx mult = 1.0;
        for (int i = 0; i < order; ++i) mult *= base;
        return mult;
    });
}

// Mixed Cartesian derivative d^j1/dx1^j1 d^j2/dx2^j2 (used by the decay scans).
inline ComplexField axis_derivative(const ComplexField& f, int j1, int j2) {
    require(j1 >= 0 && j2 >= 0 && j1 + j2 >= 1, "axis_derivative: bad orders");
    const int N = f.grid.N;
    const int nyq = -N / 2;
    return apply_fourier_multiplier(f, [&](cplx p) {
        double xiN = nyq * pi / f.grid.R;
        if ((j1 % 2 == 1 && p.real() == xiN) || (j2 % 2 == 1 && p.imag() == xiN))
            return cplx(0.0);
        cplx m1 = 1.0, m2 = 1.0;
        for (int i = 0; i < j1; ++i) m1 *= cplx(0.0, p.real());
        for (int i = 0; i < j2; ++i) m2 *= cplx(0.0, p.imag());
        return m1 * m2;
    });
}

} // namespace nvscatter

#endif
