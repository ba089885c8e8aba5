#ifndef NVSCATTER_POTENTIAL_HPP
#define NVSCATTER_POTENTIAL_HPP

#include <array>
#include <cmath>
#include <string>

#include "nvscatter/field.hpp"

namespace nvscatter {

/*
 * Test-potential catalogue.  All families are real, radially smooth around
 * `center`, and decay fast enough that the truncation boundary is numerically
 * silent for the widths used in practice:
 *   gaussian            A exp(-rho^2)
 *   stretched-rational  A (1 + rho^2)^(-5/2)      (algebraic, |z|^-5 tail)
 *   ring                A rho^2 exp(-rho^2)
 * with rho = |z - center| / width.
 */
enum class PotentialFamily { gaussian, stretched_rational, ring };

struct PotentialSpec {
    PotentialFamily family = PotentialFamily::gaussian;
    double amplitude = 1.0;
    double width = 1.0;
    cplx center = 0.0;
    double eps = 1.0;  // decay margin in (1+|z|)^{-3-j-eps}
    double q = 0.0;    // decay constant; 0 means "not certified yet"
};

inline PotentialFamily potential_family_from_string(const std::string& s) {
    if (s == "gaussian") return PotentialFamily::gaussian;
    if (s == "stretched-rational") return PotentialFamily::stretched_rational;
    if (s == "ring") return PotentialFamily::ring;
    throw error("unknown potential family: " + s);
}

inline std::string to_string(PotentialFamily f) {
    switch (f) {
        case PotentialFamily::gaussian: return "gaussian";
        case PotentialFamily::stretched_rational: return "stretched-rational";
        case PotentialFamily::ring: return "ring";
    }
    return "?";
}

inline double potential_value(const PotentialSpec& spec, cplx z) {
    double rho2 = std::norm((z - spec.center) / spec.width);
    switch (spec.family) {
        case PotentialFamily::gaussian: return spec.amplitude * std::exp(-rho2);
        case PotentialFamily::stretched_rational:
            return spec.amplitude * std::pow(1.0 + rho2, -2.5);
        case PotentialFamily::ring: return spec.amplitude * rho2 * std::exp(-rho2);
    }
    return 0.0;
}

inline RealField sample_potential(const PotentialSpec& spec, const Grid& grid) {
    require(spec.width > 0.0, "sample_potential: width must be positive");
    require(std::isfinite(spec.amplitude), "sample_potential: non-finite amplitude");
    RealField v = make_real_field(grid, [&](cplx z) { return potential_value(spec, z); });
    if (spec.amplitude != 0.0) {
        double bmax = boundary_max(v);
        require(bmax < 1e-10 * std::abs(spec.amplitude),
                "sample_potential: boundary-decay violation (grid too small for this width)");
    }
    return v;
}

// Scan report for the decay hypothesis |d^j v| <= q (1+|z|)^{-3-j-eps}, j <= 4.
struct DecayReport {
    std::array<double, 5> max_ratio{};  // indexed by total derivative order
    double q = 0.0;
    double eps = 0.0;
    bool pass = false;
};

inline DecayReport validate_decay(const RealField& v, double q, double eps) {
    require(q > 0.0 && eps > 0.0, "validate_decay: q and eps must be positive");
    DecayReport rep;
    rep.q = q;
    rep.eps = eps;
    ComplexField vc = to_complex(v);
    const Grid& g = v.grid;
    for (int order = 0; order <= 4; ++order) {
        double worst = 0.0;
        for (int j1 = 0; j1 <= order; ++j1) {
            int j2 = order - j1;
            ComplexField d = (order == 0) ? vc : axis_derivative(vc, j1, j2);
            for (int a = 0; a < g.N; ++a)
                for (int b = 0; b < g.N; ++b) {
                    double weight = std::pow(1.0 + std::abs(g.node(a, b)), 3.0 + order + eps);
                    worst = std::max(worst, std::abs(d.at(a, b)) * weight / q);
                }
        }
        rep.max_ratio[order] = worst;
    }
    rep.pass = std::all_of(rep.max_ratio.begin(), rep.max_ratio.end(),
                           [](double r) { return r <= 1.0; });
    return rep;
}

/*
 * The auxiliary field of the NV pair: dzbar w = -3 dz v with w -> 0 at
 * infinity, realized by the Fourier division w_hat = -3 (conj(p)/p) v_hat and
 * a zeroed p = 0 mode (the unique decaying solution modulo constants).
 */
struct WField {
    ComplexField w;
    cplx vhat0;
};

inline WField solve_w(const RealField& v, double tol_factor = 1e-6) {
    ComplexField vc = to_complex(v);
    ComplexField w = apply_fourier_multiplier(vc, [](cplx p) {
        if (p == cplx(0.0)) return cplx(0.0);
        return -3.0 * std::conj(p) / p;
    });
    // Residual of the defining equation; spectral construction makes this
    // roundoff-level, anything larger means a corrupted grid.
    ComplexField resid = spectral_derivative(w, Deriv::dzbar);
    ComplexField dzv = spectral_derivative(vc, Deriv::dz);
    for (size_t i = 0; i < resid.values.size(); ++i) resid.values[i] += 3.0 * dzv.values[i];
    double tol = tol_factor * std::max(linf_norm(v), 1e-300);
    require(linf_norm(resid) <= tol, "solve_w: residual exceeds tolerance (grid too small)");
    return WField{std::move(w), integrate(vc)};
}

// Ring fit of the leading large-z coefficient of w: w ~ coef / z^2 with
// coef -> 3 vhat0 / pi.
struct WAsymptoticsReport {
    double ring_radius = 0.0;
    cplx fitted_coef = 0.0;
    double deviation = 0.0;  // relative to 3 vhat0 / pi (absolute if vhat0 ~ 0)
    int ring_nodes = 0;
};

inline WAsymptoticsReport check_w_asymptotics(const WField& wf, double ring_radius) {
    const Grid& g = wf.w.grid;
    require(ring_radius <= 0.9 * g.R, "check_w_asymptotics: ring too close to boundary");
    WAsymptoticsReport rep;
    rep.ring_radius = ring_radius;
    cplx sum = 0.0;
    int count = 0;
    double band = g.h();
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k) {
            cplx z = g.node(j, k);
            if (std::abs(std::abs(z) - ring_radius) <= band) {
                sum += wf.w.at(j, k) * z * z;
                ++count;
            }
        }
    require(count > 0, "check_w_asymptotics: empty ring");
    rep.ring_nodes = count;
    rep.fitted_coef = sum / double(count);
    cplx target = 3.0 * wf.vhat0 / pi;
    double scale = std::abs(target);
    rep.deviation = scale > 1e-14 ? std::abs(rep.fitted_coef - target) / scale
                                  : std::abs(rep.fitted_coef);
    return rep;
}

} // namespace nvscatter

#endif
