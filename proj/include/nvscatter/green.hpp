#ifndef NVSCATTER_GREEN_HPP
#define NVSCATTER_GREEN_HPP

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nvscatter/field.hpp"
#include "nvscatter/field_io.hpp"

namespace nvscatter {

/*
 * Point lambda in the spectral plane.  After the E = +-1 normalization the
 * unit circle T is the degenerate locus of the positive-energy theory, so
 * samples with esign > 0 must keep ||lambda|-1| >= delta_T.
 */
struct SpectralSample {
    cplx lambda{2.0, 0.0};
    int esign = -1;
    double delta_T = 0.05;
};

inline SpectralSample make_sample(cplx lambda, int esign, double delta_T = 0.05) {
    require(esign == 1 || esign == -1, "make_sample: esign must be +1 or -1");
    require(std::abs(lambda) > 1e-12, "make_sample: lambda must be nonzero");
    if (esign > 0)
        require(std::abs(std::abs(lambda) - 1.0) >= delta_T,
                "make_sample: |lambda| too close to the unit circle for E > 0");
    return SpectralSample{lambda, esign, delta_T};
}

// Symbol of the conjugated operator: sigma(p) = |p|^2 + sqrtE (lambda conj(p) + p / lambda).
inline cplx green_symbol(cplx p, const SpectralSample& s) {
    cplx rE = sqrt_E(s.esign);
    return std::norm(p) + rE * (s.lambda * std::conj(p) + p / s.lambda);
}

// The symbol vanishes at p = 0 and at p = -(sqrtE lambda + conj(sqrtE / lambda));
// the two merge exactly on T when E < 0.
inline std::array<cplx, 2> symbol_zeros(const SpectralSample& s) {
    cplx rE = sqrt_E(s.esign);
    cplx p1 = -(rE * s.lambda + std::conj(rE / s.lambda));
    return {cplx(0.0), p1};
}

namespace detail {

// Gauss-Legendre nodes/weights on [0,1], cached per order.
inline const std::pair<std::vector<double>, std::vector<double>>& gauss_legendre01(int n) {
    static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(pi * (i + 0.75) / (n + 0.5));
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1.0);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j + 1.0) * t * p1 - j * p2) / (j + 1.0);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1.0);
        x[i] = 0.5 * (1.0 - t);  // descending t -> ascending x, irrelevant for sums
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    auto [pos, ok] = cache.emplace(n, std::make_pair(std::move(x), std::move(w)));
    return pos->second;
}

// Convex polygon (CCW) utilities for the pole patches.
using Polygon = std::vector<cplx>;

inline Polygon rect_polygon(double x0, double x1, double y0, double y1) {
    return {cplx(x0, y0), cplx(x1, y0), cplx(x1, y1), cplx(x0, y1)};
}

inline double cross2(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

// Keep the side with dot(p - q, n) <= 0 (Sutherland-Hodgman, one plane).
inline Polygon clip_halfplane(const Polygon& poly, cplx q, cplx n) {
    auto side = [&](cplx p) {
        return (p.real() - q.real()) * n.real() + (p.imag() - q.imag()) * n.imag();
    };
    Polygon out;
    size_t m = poly.size();
    for (size_t i = 0; i < m; ++i) {
        cplx a = poly[i], b = poly[(i + 1) % m];
        double sa = side(a), sb = side(b);
        if (sa <= 0.0) out.push_back(a);
        if ((sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0)) {
            double t = sa / (sa - sb);
            out.push_back(a + t * (b - a));
        }
    }
    return out;
}

// Distance from an interior point to the polygon boundary along (cos phi, sin phi).
inline double ray_limit(const Polygon& poly, cplx c, double cph, double sph) {
    cplx d(cph, sph);
    double best = std::numeric_limits<double>::infinity();
    size_t m = poly.size();
    for (size_t i = 0; i < m; ++i) {
        cplx a = poly[i], e = poly[(i + 1) % m] - poly[i];
        double denom = cross2(d, e);
        if (std::abs(denom) < 1e-300) continue;
        double t = cross2(a - c, e) / denom;
        double u = cross2(a - c, d) / denom;
        if (t > 0.0 && u >= -1e-12 && u <= 1.0 + 1e-12) best = std::min(best, t);
    }
    return best;
}

struct PolarRule {
    std::vector<cplx> node;
    std::vector<double> weight;
};

/*
 * Tensor quadrature of integrals over a convex polygon, in polar coordinates
 * about an interior point where the integrand behaves like 1/rho.  The rho
 * Jacobian absorbs the singularity.  Angular panels are aligned with the
 * polygon corner angles so each panel sees a smooth rho_max(phi).  With
 * log_radial set, the radial direction is covered by geometrically shrinking
 * segments, which also resolves 1/(rho + eps) layers (merged symbol zeros).
 */
inline PolarRule polar_rule(cplx center, const Polygon& poly, int n_phi, int n_rho,
                            bool log_radial = false) {
    std::vector<double> corner;
    for (cplx v : poly) corner.push_back(std::arg(v - center));
    std::sort(corner.begin(), corner.end());
    corner.push_back(corner.front() + 2.0 * pi);

    const auto& [gx, gw] = gauss_legendre01(n_rho);
    const auto& [ax, aw] = gauss_legendre01(4);

    PolarRule rule;
    auto add_radial = [&](double rmax, double wphi, double cph, double sph) {
        auto add_segment = [&](double r0, double r1) {
            for (int ir = 0; ir < n_rho; ++ir) {
                double rho = r0 + gx[ir] * (r1 - r0);
                rule.node.push_back(center + rho * cplx(cph, sph));
                rule.weight.push_back(wphi * gw[ir] * (r1 - r0) * rho);
            }
        };
        if (!log_radial) {
            add_segment(0.0, rmax);
            return;
        }
        double hi = rmax;
        for (int seg = 0; seg < 14; ++seg) {
            double lo = (seg == 13) ? 0.0 : hi * 0.25;
            add_segment(lo, hi);
            hi = lo;
        }
    };
    for (size_t s = 0; s + 1 < corner.size(); ++s) {
        double lo = corner[s], hi = corner[s + 1];
        if (hi - lo < 1e-14) continue;
        int panels = std::max(1, int(std::ceil(n_phi * (hi - lo) / (2.0 * pi * ax.size()))));
        double dphi = (hi - lo) / panels;
        for (int p = 0; p < panels; ++p) {
            for (size_t ia = 0; ia < ax.size(); ++ia) {
                double phi = lo + (p + ax[ia]) * dphi;
                double wphi = aw[ia] * dphi;
                double cph = std::cos(phi), sph = std::sin(phi);
                double rmax = ray_limit(poly, center, cph, sph);
                if (!std::isfinite(rmax) || rmax <= 0.0) continue;
                add_radial(rmax, wphi, cph, sph);
            }
        }
    }
    return rule;
}

// 1-D adaptive Simpson.
template <typename F>
double adaptive_simpson_step(F& f, double a, double b, double fa, double fm, double fb,
                             double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol, int depth) {
    if (a == b) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_step(f, a, b, fa, fm, fb, whole, tol, depth);
}

template <typename F>
cplx adaptive_simpson_c(F&& f, double a, double b, double tol, int depth) {
    auto re = [&](double t) { return f(t).real(); };
    auto im = [&](double t) { return f(t).imag(); };
    return {adaptive_simpson(re, a, b, tol, depth), adaptive_simpson(im, a, b, tol, depth)};
}

// Subtract an axis-aligned rectangle from a list of rectangles.
struct Rect {
    double x0, x1, y0, y1;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

inline std::vector<Rect> subtract_rect(const std::vector<Rect>& rects, const Rect& cut) {
    std::vector<Rect> out;
    for (const Rect& r : rects) {
        double ix0 = std::max(r.x0, cut.x0), ix1 = std::min(r.x1, cut.x1);
        double iy0 = std::max(r.y0, cut.y0), iy1 = std::min(r.y1, cut.y1);
        if (ix0 >= ix1 || iy0 >= iy1) {
            out.push_back(r);
            continue;
        }
        if (r.x0 < ix0) out.push_back({r.x0, ix0, r.y0, r.y1});
        if (ix1 < r.x1) out.push_back({ix1, r.x1, r.y0, r.y1});
        if (r.y0 < iy0) out.push_back({ix0, ix1, r.y0, iy0});
        if (iy1 < r.y1) out.push_back({ix0, ix1, iy1, r.y1});
    }
    return out;
}

// McMahon estimate for the i-th positive zero of J_n; interval boundaries only.
inline double bessel_zero_estimate(int n, int i) {
    double beta = (i + 0.5 * n - 0.25) * pi;
    return beta - (4.0 * n * n - 1.0) / (8.0 * beta);
}

/*
 * B(k, n, T0) = int_{T0}^infty t^{-k-1} J_n(t) dt computed by summing hump
 * integrals between consecutive Bessel zeros and accelerating the resulting
 * alternating partial sums by repeated averaging.
 */
inline double bessel_tail_integral(int k, int n, double T0, double tol) {
    require(T0 > 0.0, "bessel tail: T0 must be positive");
    auto f = [&](double t) { return std::pow(t, -k - 1) * std::cyl_bessel_j(double(n), t); };
    int i = 1;
    while (bessel_zero_estimate(n, i) <= T0) ++i;
    const int max_segments = 80;
    std::vector<double> partial;
    double acc = 0.0, lo = T0;
    for (int seg = 0; seg < max_segments; ++seg) {
        double hi = bessel_zero_estimate(n, i + seg);
        acc += adaptive_simpson(f, lo, hi, tol / 50.0, 28);
        partial.push_back(acc);
        lo = hi;
        if (partial.size() > 3) {
            double last = std::abs(partial[partial.size() - 1] - partial[partial.size() - 2]);
            if (last < tol / 10.0) break;
        }
    }
    size_t m = partial.size();
    size_t keep = std::min<size_t>(m, 40);
    std::vector<double> s(partial.end() - keep, partial.end());
    while (s.size() > 1) {
        for (size_t j = 0; j + 1 < s.size(); ++j) s[j] = 0.5 * (s[j] + s[j + 1]);
        s.pop_back();
    }
    return s[0];
}

inline int binomial(int n, int k) {
    double b = 1.0;
    for (int i = 0; i < k; ++i) b = b * (n - i) / (i + 1);
    return int(std::lround(b));
}

} // namespace detail

/*
 * Frequency tail of the Green's function integral, |p| > P, summed through the
 * expansion 1/sigma = sum_k (-sqrtE (lambda conj p + p/lambda))^k / |p|^(2k+2)
 * whose angular integrals reduce to Bessel transforms (Jacobi-Anger).
 */
inline cplx green_point_tail(cplx z, const SpectralSample& s, double P, double tol) {
    double X = std::abs(z);
    double theta = std::arg(z);
    cplx rE = sqrt_E(s.esign);
    cplx total = 0.0;
    for (int k = 0; k <= 8; ++k) {
        cplx term = 0.0;
        for (int a = 0; a <= k; ++a) {
            int n = 2 * a - k;
            cplx coef = std::pow(-rE, k) * double(detail::binomial(k, a)) *
                        std::pow(s.lambda, k - 2 * a);
            double T = std::pow(X, k) * detail::bessel_tail_integral(k, std::abs(n), P * X, tol);
            if (n < 0 && (std::abs(n) % 2 == 1)) T = -T;  // J_{-n} = (-1)^n J_n
            cplx ang = std::pow(cplx(0.0, 1.0), n) * std::exp(cplx(0.0, n * theta));
            term += coef * 2.0 * pi * ang * T;
        }
        total += term;
        if (k >= 1 && std::abs(term) < tol / 4.0) return total;
    }
    // P is chosen with expansion ratio <= 1/2, so landing here means the caller
    // asked for an extreme tolerance.
    throw error("green_point: tail expansion did not converge");
}

struct GreenPointOptions {
    double tol = 1e-6;
    int max_depth = 12;
};

/*
 * Reference evaluation of
 *   g(z,lambda) = -(1/2pi)^2 int e^{i p.x} / sigma(p) d2p
 * by region decomposition: polar patches about the (at most two) symbol zeros,
 * adaptive iterated Simpson over the remaining box rectangles, and the Bessel
 * tail beyond the box.
 */
inline cplx green_point(cplx z, const SpectralSample& s, const GreenPointOptions& opts = {}) {
    require(std::abs(z) > 0.0, "green_point: z must be nonzero");
    auto zeros = symbol_zeros(s);
    cplx p1 = zeros[1];
    double Cp = std::abs(s.lambda) + 1.0 / std::abs(s.lambda);
    double P = std::max({2.0 * Cp + 1.0, 1.3 * std::abs(p1) + 1.5, 6.0});
    double tol = opts.tol * 4.0 * pi * pi;  // work against the unscaled integral
    double x1 = z.real(), x2 = z.imag();

    auto integrand = [&](cplx p) {
        double phase = p.real() * x1 + p.imag() * x2;
        return std::exp(cplx(0.0, phase)) / green_symbol(p, s);
    };

    // Patch geometry.
    struct Patch {
        cplx center;
        detail::Polygon poly;
        detail::Rect bound;
    };
    std::vector<Patch> patches;
    const double hw = 1.0;
    if (std::abs(p1) <= 1e-8) {
        patches.push_back({cplx(0.0), detail::rect_polygon(-hw, hw, -hw, hw), {-hw, hw, -hw, hw}});
    } else if (std::abs(p1) >= 2.2 * hw) {
        patches.push_back({cplx(0.0), detail::rect_polygon(-hw, hw, -hw, hw), {-hw, hw, -hw, hw}});
        detail::Rect r{p1.real() - hw, p1.real() + hw, p1.imag() - hw, p1.imag() + hw};
        patches.push_back({p1, detail::rect_polygon(r.x0, r.x1, r.y0, r.y1), r});
    } else {
        double x0 = std::min(0.0, p1.real()) - hw, xx1 = std::max(0.0, p1.real()) + hw;
        double y0 = std::min(0.0, p1.imag()) - hw, yy1 = std::max(0.0, p1.imag()) + hw;
        detail::Rect r{x0, xx1, y0, yy1};
        auto full = detail::rect_polygon(x0, xx1, y0, yy1);
        cplx q = 0.5 * p1, n = p1 / std::abs(p1);
        patches.push_back({cplx(0.0), detail::clip_halfplane(full, q, n), r});
        patches.push_back({p1, detail::clip_halfplane(full, q, -n), r});
    }

    cplx sum = 0.0;

    // Polar patches: log-segmented GL radial lines (robust through merged-zero
    // layers), adaptive Simpson over the angle.
    for (const Patch& patch : patches) {
        std::vector<double> corner;
        for (cplx v : patch.poly) corner.push_back(std::arg(v - patch.center));
        std::sort(corner.begin(), corner.end());
        corner.push_back(corner.front() + 2.0 * pi);
        const auto& [gx, gw] = detail::gauss_legendre01(10);
        auto line = [&](double phi) {
            double cph = std::cos(phi), sph = std::sin(phi);
            double rmax = detail::ray_limit(patch.poly, patch.center, cph, sph);
            if (!std::isfinite(rmax) || rmax <= 0.0) return cplx(0.0);
            cplx acc = 0.0;
            double hi = rmax;
            for (int seg = 0; seg < 14; ++seg) {
                double lo = (seg == 13) ? 0.0 : hi * 0.25;
                for (size_t i = 0; i < gx.size(); ++i) {
                    double rho = lo + gx[i] * (hi - lo);
                    cplx p = patch.center + rho * cplx(cph, sph);
                    acc += gw[i] * (hi - lo) * rho * integrand(p);
                }
                hi = lo;
            }
            return acc;
        };
        for (size_t c = 0; c + 1 < corner.size(); ++c) {
            if (corner[c + 1] - corner[c] < 1e-14) continue;
            sum += detail::adaptive_simpson_c(line, corner[c], corner[c + 1],
                                              tol / (8.0 * patches.size()), opts.max_depth);
        }
    }

    // Box minus patches as rectangles, iterated adaptive Simpson.
    std::vector<detail::Rect> rects{{-P, P, -P, P}};
    for (const Patch& patch : patches) rects = detail::subtract_rect(rects, patch.bound);
    {
        // Patches sharing a bounding rect would double-cut; dedupe is implicit
        // because subtract_rect of an already-removed region is a no-op.
    }
    double total_area = 0.0;
    for (const auto& r : rects) total_area += r.area();
    for (const auto& r : rects) {
        double rtol = tol * 0.5 * std::max(r.area() / total_area, 0.05);
        auto outer = [&](double px) {
            auto inner = [&](double py) { return integrand(cplx(px, py)); };
            return detail::adaptive_simpson_c(inner, r.y0, r.y1, rtol / (4.0 * (r.x1 - r.x0)),
                                              opts.max_depth);
        };
        sum += detail::adaptive_simpson_c(outer, r.x0, r.x1, rtol, opts.max_depth);
    }

    sum += green_point_tail(z, s, P, tol * 0.25);
    return -sum / (4.0 * pi * pi);
}

struct GreenTableOptions {
    bool polar_correction = true;
    int block_cells = 4;   // patch halfwidth in frequency cells
    int n_phi = 64;        // angular density of the patch rule
    int n_rho = 12;        // radial GL nodes of the patch rule
    int refine_cap = 8;    // max internal oversampling factor
};

/*
 * g sampled on the doubled grid (half-width 2R, 2N points, same spacing), the
 * layout consumed by exact zero-padded Nystrom convolutions against fields on
 * the base grid.  Synthesis: midpoint sum of e^{ip.x}/sigma over a half-cell
 * offset frequency lattice (the offset keeps the symbol zeros away from the
 * nodes), with the cells around each zero integrated by the polar rule instead.
 */
struct GreenTable {
    SpectralSample sample;
    ComplexField g;      // on the doubled grid
    double residual = 0.0;
};

inline double green_residual(const GreenTable& gt, int exclusion_cells = 3);

inline GreenTable green_table(const SpectralSample& s, const Grid& grid,
                              const GreenTableOptions& opts = {}) {
    const int M = 2 * grid.N;
    const double h = grid.h();
    Grid tg = make_grid(2.0 * grid.R, M);
    const double dp = pi / tg.R;  // frequency spacing of the doubled box

    auto zeros = symbol_zeros(s);
    double pz_max = std::max(std::abs(zeros[0]), std::abs(zeros[1]));
    double need = std::max(1.15 * pz_max + 3.0, pz_max + 2.0 * (opts.block_cells + 2) * dp);
    int refine = std::max(1, int(std::ceil(need / (pi / h))));
    require(refine <= opts.refine_cap,
            "green_table: |lambda| too extreme for this grid (oversampling cap exceeded)");
    const int Mf = refine * M;

    // Half-cell offset lattice p(m) = (m - Mf/2 + 1/2) dp; reject zeros sitting
    // on a node (re-grid required).
    auto nearest_node_coord = [&](double x) {
        double k = std::round(x / dp - 0.5);
        return (k + 0.5) * dp;
    };
    for (cplx zc : zeros) {
        double dx = zc.real() - nearest_node_coord(zc.real());
        double dy = zc.imag() - nearest_node_coord(zc.imag());
        require(std::hypot(dx, dy) >= 1e-3,
                "green_table: symbol zero within 1e-3 of a frequency node; re-grid required");
    }

    // Cell-aligned patch blocks around each zero, merged when they touch.
    struct Block {
        long ax0, ax1, bx0, bx1;  // inclusive cell index ranges
        std::vector<std::pair<cplx, detail::Polygon>> parts;
    };
    auto cell_of = [&](double x) { return long(std::floor(x / dp)); };
    const int B = opts.block_cells;
    long a0 = cell_of(zeros[0].real()), b0 = cell_of(zeros[0].imag());
    long a1 = cell_of(zeros[1].real()), b1 = cell_of(zeros[1].imag());
    bool merged = std::abs(zeros[1]) <= 1e-8 ||
                  (std::abs(a1 - a0) <= 2 * B + 1 && std::abs(b1 - b0) <= 2 * B + 1);

    std::vector<Block> blocks;
    if (merged) {
        Block blk;
        blk.ax0 = std::min(a0, a1) - B;
        blk.ax1 = std::max(a0, a1) + B;
        blk.bx0 = std::min(b0, b1) - B;
        blk.bx1 = std::max(b0, b1) + B;
        auto poly = detail::rect_polygon(blk.ax0 * dp, (blk.ax1 + 1) * dp,
                                         blk.bx0 * dp, (blk.bx1 + 1) * dp);
        if (std::abs(zeros[1] - zeros[0]) <= 1e-8) {
            blk.parts.push_back({zeros[0], poly});
        } else {
            cplx mid = 0.5 * (zeros[0] + zeros[1]);
            cplx nrm = (zeros[1] - zeros[0]) / std::abs(zeros[1] - zeros[0]);
            blk.parts.push_back({zeros[0], detail::clip_halfplane(poly, mid, nrm)});
            blk.parts.push_back({zeros[1], detail::clip_halfplane(poly, mid, -nrm)});
        }
        blocks.push_back(std::move(blk));
    } else {
        for (int zi = 0; zi < 2; ++zi) {
            long ca = zi == 0 ? a0 : a1, cb = zi == 0 ? b0 : b1;
            Block blk;
            blk.ax0 = ca - B;
            blk.ax1 = ca + B;
            blk.bx0 = cb - B;
            blk.bx1 = cb + B;
            blk.parts.push_back({zeros[zi],
                                 detail::rect_polygon(blk.ax0 * dp, (blk.ax1 + 1) * dp,
                                                      blk.bx0 * dp, (blk.bx1 + 1) * dp)});
            blocks.push_back(std::move(blk));
        }
    }

    auto in_block = [&](long ca, long cb) {
        if (!opts.polar_correction) return false;
        for (const Block& blk : blocks)
            if (ca >= blk.ax0 && ca <= blk.ax1 && cb >= blk.bx0 && cb <= blk.bx1) return true;
        return false;
    };

    // Offset-lattice synthesis via one backward FFT with pre/post twiddles.
    std::vector<cplx> F(size_t(Mf) * Mf);
    for (int m = 0; m < Mf; ++m) {
        double px = (m - Mf / 2 + 0.5) * dp;
        long ca = cell_of(px);
        for (int n = 0; n < Mf; ++n) {
            double py = (n - Mf / 2 + 0.5) * dp;
            cplx val = 0.0;
            if (!in_block(ca, cell_of(py))) {
                val = 1.0 / green_symbol(cplx(px, py), s);
                if ((m + n) % 2 == 1) val = -val;
            }
            F[size_t(m) * Mf + n] = val;
        }
    }
    FftEngine::instance().backward(F, Mf);

    ComplexField g(tg);
    const double scale = -dp * dp / (4.0 * pi * pi);
    std::vector<cplx> pre(M);
    for (int J = 0; J < M; ++J) {
        int j = J * refine;
        cplx ph = std::exp(cplx(0.0, pi * j / Mf)) * cplx(0.0, -1.0);
        pre[J] = ((j % 2 == 0) ? 1.0 : -1.0) * ph;
    }
    for (int J = 0; J < M; ++J)
        for (int K = 0; K < M; ++K)
            g.at(J, K) = scale * pre[J] * pre[K] * F[size_t(J) * refine * Mf + K * refine];

    // Polar corrections added through rank-structured outer products (a GEMM).
    if (opts.polar_correction) {
        int n_phi = opts.n_phi * (merged ? 2 : 1);
        for (const Block& blk : blocks) {
            detail::PolarRule rule;
            for (const auto& [center, poly] : blk.parts) {
                auto part = detail::polar_rule(center, poly, n_phi, opts.n_rho, merged);
                rule.node.insert(rule.node.end(), part.node.begin(), part.node.end());
                rule.weight.insert(rule.weight.end(), part.weight.begin(), part.weight.end());
            }
            const int Q = int(rule.node.size());
            Eigen::MatrixXcd U(M, Q), V(M, Q);
            for (int q = 0; q < Q; ++q) {
                cplx p = rule.node[q];
                cplx val = rule.weight[q] / green_symbol(p, s);
                for (int J = 0; J < M; ++J) {
                    double x = tg.coord(J);
                    U(J, q) = std::exp(cplx(0.0, p.real() * x));
                    V(J, q) = std::exp(cplx(0.0, p.imag() * x));
                }
                U.col(q) *= val;
            }
            Eigen::MatrixXcd corr = U * V.transpose();
            const double cscale = -1.0 / (4.0 * pi * pi);
            for (int J = 0; J < M; ++J)
                for (int K = 0; K < M; ++K)
                    g.at(J, K) += cscale * corr(J, K);
        }
    }

    GreenTable table{s, std::move(g), 0.0};
    table.residual = green_residual(table);
    return table;
}

/*
 * Discrete-operator diagnostic: with T = 4 dz dzbar + 2i sqrtE lambda dz +
 * (2i sqrtE / lambda) dzbar (symbol -sigma), a proper table satisfies
 * T g = delta_h, the discrete delta of mass h^-2 at the z = 0 node.  Returns
 * the max norm outside a Chebyshev `exclusion_cells` neighborhood of 0.
 */
inline double green_residual(const GreenTable& gt, int exclusion_cells) {
    const Grid& tg = gt.g.grid;
    ComplexField Tg = apply_fourier_multiplier(gt.g, [&](cplx p) {
        return -green_symbol(p, gt.sample);
    });
    const int M = tg.N;
    const int c = M / 2;  // z = 0 node index
    double h = tg.h();
    Tg.at(c, c) -= 1.0 / (h * h);
    double worst = 0.0;
    for (int j = 0; j < M; ++j)
        for (int k = 0; k < M; ++k) {
            if (std::max(std::abs(j - c), std::abs(k - c)) <= exclusion_cells) continue;
            worst = std::max(worst, std::abs(Tg.at(j, k)));
        }
    return worst;
}

// Optional on-disk cache keyed by (lambda, esign, R, N); enabled by NVSCATTER_CACHE.
inline GreenTable green_table_cached(const SpectralSample& s, const Grid& grid,
                                     const GreenTableOptions& opts = {}) {
    const char* dir = std::getenv("NVSCATTER_CACHE");
    if (!dir) return green_table(s, grid, opts);
    char key[160];
    std::snprintf(key, sizeof(key), "gt_%+d_%a_%d_%a_%a", s.esign, grid.R, grid.N,
                  s.lambda.real(), s.lambda.imag());
    for (char* p = key; *p; ++p)
        if (*p == '/' || *p == '+' || *p == '.') *p = '_';
    std::filesystem::path path = std::filesystem::path(dir) / (std::string(key) + ".nvsf");
    if (std::filesystem::exists(path)) {
        GreenTable t{s, read_complex_field(path.string()), 0.0};
        t.residual = green_residual(t);
        return t;
    }
    GreenTable t = green_table(s, grid, opts);
    std::filesystem::create_directories(dir);
    write_field(path.string(), t.g);
    return t;
}

} // namespace nvscatter

#endif
