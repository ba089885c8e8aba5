#ifndef NVSCATTER_SCATTER_HPP
#define NVSCATTER_SCATTER_HPP

#include <Eigen/Eigenvalues>

#include "nvscatter/eigenfunctions.hpp"

namespace nvscatter {

/*
 * The unimodular weight attached to the b/beta data and to the mu d-bar
 * kernel:
 *   X(lambda, zeta) = exp{ (i sqrtE / 2)(1 + sgnE/|lambda|^2)
 *                          (sgnE conj(lambda) zeta + lambda conj(zeta)) }.
 * The exponent is purely imaginary for both energy signs.
 */
inline cplx data_phase(const SpectralSample& s, cplx zeta) {
    cplx rE = sqrt_E(s.esign);
    double sgn = double(s.esign);
    cplx arg = 0.5i * rE * (1.0 + sgn / std::norm(s.lambda)) *
               (sgn * std::conj(s.lambda) * zeta + s.lambda * std::conj(zeta));
    return std::exp(arg);
}

inline cplx reflected_lambda(cplx lambda, int esign) {
    return -double(esign) / std::conj(lambda);
}

struct ScatteringQuad {
    SpectralSample sample;
    cplx a = 0.0, b = 0.0, alpha = 0.0, beta = 0.0;
    cplx vhat0 = 0.0;
};

inline ScatteringQuad scattering_data(const RealField& v, const EigenSolution& mu,
                                      const EigenSolution& nu) {
    require(mu.kind == EigenKind::mu && nu.kind == EigenKind::nu,
            "scattering_data: pass one mu and one nu solution");
    require(!mu.exceptional && !nu.exceptional,
            "scattering_data: exceptional lambda has no scattering data");
    require(mu.field.grid == v.grid && nu.field.grid == v.grid,
            "scattering_data: grid mismatch");
    const Grid& g = v.grid;
    ScatteringQuad q;
    q.sample = mu.sample;
    ComplexField nuf = nu_full(nu);
    cplx a = 0.0, b = 0.0, al = 0.0, be = 0.0, v0 = 0.0;
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k) {
            double vv = v.at(j, k);
            if (vv == 0.0) continue;
            cplx X = data_phase(q.sample, g.node(j, k));
            a += vv * mu.field.at(j, k);
            b += vv * X * mu.field.at(j, k);
            al += vv * nuf.at(j, k);
            be += vv * X * nuf.at(j, k);
            v0 += vv;
        }
    double h2 = g.h() * g.h();
    q.a = h2 * a;
    q.b = h2 * b;
    q.alpha = h2 * al;
    q.beta = h2 * be;
    q.vhat0 = h2 * v0;
    return q;
}

struct DeterminantRecord {
    SpectralSample sample;
    cplx delta = 1.0;
    double realness_defect = 0.0;                                // |Im Delta|
    double symmetry_defect = std::numeric_limits<double>::quiet_NaN();
};

/*
 * Modified Fredholm determinant of the weighted Lippmann-Schwinger kernel
 *   A(z,zeta) = (1+|z|)^{-(2+eps/2)} g(z-zeta) v(zeta) (1+|zeta|)^{2+eps/2} h^2
 * through the eigenvalue product Delta = prod (1 - m_i) e^{m_i}.  Columns with
 * v = 0 vanish, so the nonzero spectrum lives on the support nodes; the weight
 * is a diagonal similarity there and cannot change the eigenvalues, but the
 * kernel is assembled in the weighted form regardless.
 */
inline DeterminantRecord fredholm_delta(const RealField& v, const GreenTable& gt,
                                        double eps = 1.0, double support_cutoff = 1e-12) {
    require(gt.g.grid.N == 2 * v.grid.N, "fredholm_delta: table/grid mismatch");
    const Grid& g = v.grid;
    const int N = g.N;
    double vmax = linf_norm(v);
    std::vector<int> sup;
    for (size_t i = 0; i < v.values.size(); ++i)
        if (std::abs(v.values[i]) >= support_cutoff * std::max(vmax, 1e-300))
            sup.push_back(int(i));
    DeterminantRecord rec;
    rec.sample = gt.sample;
    if (sup.empty()) return rec;  // v == 0: A = 0, Delta = 1

    const int n = int(sup.size());
    const double h2 = g.h() * g.h();
    const double wexp = 2.0 + 0.5 * eps;
    Eigen::VectorXd weight(n);
    for (int i = 0; i < n; ++i)
        weight(i) = std::pow(1.0 + std::abs(g.node(sup[i] / N, sup[i] % N)), wexp);
    Eigen::MatrixXcd A(n, n);
    for (int col = 0; col < n; ++col) {
        int jc = sup[col] / N, kc = sup[col] % N;
        double vj = v.values[sup[col]];
        for (int row = 0; row < n; ++row) {
            int jr = sup[row] / N, kr = sup[row] % N;
            A(row, col) =
                h2 * vj * gt.g.at(jr - jc + N, kr - kc + N) * (weight(col) / weight(row));
        }
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(A, /*computeEigenvectors=*/false);
    require(es.info() == Eigen::Success, "fredholm_delta: eigendecomposition failed");
    cplx delta = 1.0;
    for (int i = 0; i < n; ++i) {
        cplx m = es.eigenvalues()(i);
        delta *= (1.0 - m) * std::exp(m);
    }
    rec.delta = delta;
    rec.realness_defect = std::abs(delta.imag());
    return rec;
}

// Max relative defect |Delta(lambda) - Delta(-sgnE/conj(lambda))| over pairs.
struct SymmetryReport {
    double max_rel_defect = 0.0;
};

inline SymmetryReport check_delta_symmetry(
    const std::vector<std::pair<DeterminantRecord, DeterminantRecord>>& pairs) {
    SymmetryReport rep;
    for (const auto& [r1, r2] : pairs) {
        double scale = std::max({std::abs(r1.delta), std::abs(r2.delta), 1e-300});
        rep.max_rel_defect = std::max(rep.max_rel_defect, std::abs(r1.delta - r2.delta) / scale);
    }
    return rep;
}

struct PipelineOptions {
    GreenTableOptions table;
    SolveOptions solve;
};

inline ScatteringQuad compute_scattering(const RealField& v, const SpectralSample& s,
                                         const PipelineOptions& opts = {}) {
    GreenTable gt = green_table_cached(s, v.grid, opts.table);
    LippmannSchwingerSolver solver(v, gt, opts.solve);
    EigenSolution mu = solver.solve(EigenKind::mu);
    EigenSolution nu = solver.solve(EigenKind::nu);
    return scattering_data(v, mu, nu);
}

inline DeterminantRecord compute_delta(const RealField& v, const SpectralSample& s,
                                       double eps = 1.0, const PipelineOptions& opts = {}) {
    GreenTable gt = green_table_cached(s, v.grid, opts.table);
    return fredholm_delta(v, gt, eps);
}

// Four-point complex stencil for d/d(conj lambda) of a lambda-function.
template <typename F>
cplx dbar_stencil(F&& f, cplx lambda, double delta) {
    cplx fpx = f(lambda + delta), fmx = f(lambda - delta);
    cplx fpy = f(lambda + cplx(0.0, delta)), fmy = f(lambda - cplx(0.0, delta));
    return (fpx - fmx) / (4.0 * delta) + 1.0i * (fpy - fmy) / (4.0 * delta);
}

struct DetDbarReport {
    cplx finite_difference = 0.0;
    cplx rhs = 0.0;
    double rel_mismatch = 0.0;
};

/*
 * Statement check: dDelta/dbar(lambda) = -sgn(|lambda|^2-1)/(4 pi conj lambda)
 * (a(-sgnE/conj lambda) - vhat0) Delta(lambda), with the left side from the
 * 4-point stencil.  The stencil must stay off T and off the exceptional set.
 */
inline DetDbarReport check_det_dbar(const RealField& v, const SpectralSample& s,
                                    double dlambda, double eps = 1.0,
                                    const PipelineOptions& opts = {}) {
    for (cplx off : {cplx(dlambda), cplx(-dlambda), cplx(0.0, dlambda), cplx(0.0, -dlambda)})
        if (s.esign > 0)
            require(std::abs(std::abs(s.lambda + off) - 1.0) >= 0.5 * s.delta_T,
                    "check_det_dbar: stencil crosses the unit circle");

    auto delta_at = [&](cplx lam) {
        return compute_delta(v, make_sample(lam, s.esign, 0.5 * s.delta_T), eps, opts).delta;
    };
    DetDbarReport rep;
    rep.finite_difference = dbar_stencil(delta_at, s.lambda, dlambda);

    cplx lam_ref = reflected_lambda(s.lambda, s.esign);
    SpectralSample sref = make_sample(lam_ref, s.esign, 0.5 * s.delta_T);
    GreenTable gt_ref = green_table_cached(sref, v.grid, opts.table);
    LippmannSchwingerSolver solver(v, gt_ref, opts.solve);
    EigenSolution mu = solver.solve(EigenKind::mu);
    require(!mu.exceptional, "check_det_dbar: reflected lambda is exceptional");
    ComplexField vmu = to_complex(v);
    for (size_t i = 0; i < vmu.values.size(); ++i) vmu.values[i] *= mu.field.values[i];
    cplx a_ref = integrate(vmu);
    cplx vhat0 = integrate(v);

    double sgn = std::norm(s.lambda) - 1.0 > 0.0 ? 1.0 : -1.0;
    cplx delta0 = delta_at(s.lambda);
    rep.rhs = -sgn / (4.0 * pi * std::conj(s.lambda)) * (a_ref - vhat0) * delta0;
    double scale = std::max({std::abs(rep.rhs), std::abs(rep.finite_difference), 1e-300});
    rep.rel_mismatch = std::abs(rep.finite_difference - rep.rhs) / scale;
    return rep;
}

struct MuDbarReport {
    double rel_l2_mismatch = 0.0;
    double max_pointwise_rel = 0.0;  // where |rhs| is significant
};

/*
 * Field-level check of dmu/dbar(lambda) = r(z,lambda) conj(mu(z,lambda)) with
 * r(z,lambda) = sgn(|lambda|^2-1)/(4 pi conj lambda) b(lambda) conj(X(lambda,z)),
 * compared on the half-radius disk.
 */
inline MuDbarReport check_mu_dbar(const RealField& v, const SpectralSample& s,
                                  double dlambda, const PipelineOptions& opts = {}) {
    auto mu_at = [&](cplx lam) {
        SpectralSample sl = make_sample(lam, s.esign, 0.5 * s.delta_T);
        GreenTable gt = green_table_cached(sl, v.grid, opts.table);
        EigenSolution mu = solve_mu(v, gt, opts.solve);
        require(!mu.exceptional, "check_mu_dbar: stencil hit an exceptional point");
        return mu;
    };
    EigenSolution mu0 = mu_at(s.lambda);
    EigenSolution mpx = mu_at(s.lambda + dlambda), mmx = mu_at(s.lambda - dlambda);
    EigenSolution mpy = mu_at(s.lambda + cplx(0.0, dlambda)),
                  mmy = mu_at(s.lambda - cplx(0.0, dlambda));

    GreenTable gt0 = green_table_cached(s, v.grid, opts.table);
    LippmannSchwingerSolver solver(v, gt0, opts.solve);
    EigenSolution nu0 = solver.solve(EigenKind::nu);
    ScatteringQuad q = scattering_data(v, mu0, nu0);

    const Grid& g = v.grid;
    double sgn = std::norm(s.lambda) - 1.0 > 0.0 ? 1.0 : -1.0;
    cplx rlam = sgn / (4.0 * pi * std::conj(s.lambda)) * q.b;

    MuDbarReport rep;
    double num = 0.0, den = 0.0, rhs_max = 0.0;
    ComplexField lhs(g), rhs(g);
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k) {
            if (std::abs(g.node(j, k)) > 0.5 * g.R) continue;
            cplx fd = (mpx.field.at(j, k) - mmx.field.at(j, k)) / (4.0 * dlambda) +
                      1.0i * (mpy.field.at(j, k) - mmy.field.at(j, k)) / (4.0 * dlambda);
            cplx rz = rlam * std::conj(data_phase(s, g.node(j, k))) *
                      std::conj(mu0.field.at(j, k));
            lhs.at(j, k) = fd;
            rhs.at(j, k) = rz;
            num += std::norm(fd - rz);
            den += std::norm(rz);
            rhs_max = std::max(rhs_max, std::abs(rz));
        }
    rep.rel_l2_mismatch = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k) {
            if (std::abs(g.node(j, k)) > 0.5 * g.R) continue;
            cplx rz = rhs.at(j, k);
            if (std::abs(rz) < 0.1 * rhs_max) continue;
            rep.max_pointwise_rel =
                std::max(rep.max_pointwise_rel, std::abs(lhs.at(j, k) - rz) / std::abs(rz));
        }
    return rep;
}

struct RayPoint {
    double r = 0.0;
    cplx delta = 0.0;
    cplx predicted = 0.0;
};

struct RayFactorizationReport {
    double max_rel_mismatch = 0.0;
    std::vector<RayPoint> points;
};

/*
 * Case-(ii) diagnostic: along the ray lambda = r e^{i phi}, r < 1, integrate
 *   u(conj lambda) = -sgn(|lambda|^2-1)/(4 pi conj lambda)(a(-sgnE/conj lambda) - vhat0)
 * to U and compare Delta against exp(U + conj U).
 */
inline RayFactorizationReport ray_factorization(double phi, const std::vector<double>& radii,
                                                const std::vector<cplx>& deltas,
                                                const std::vector<cplx>& a_reflected,
                                                cplx vhat0, int /*esign*/) {
    require(radii.size() == deltas.size() && radii.size() == a_reflected.size(),
            "ray_factorization: mismatched input lengths");
    require(!radii.empty() && radii.back() < 1.0, "ray_factorization: radii must stay below 1");
    RayFactorizationReport rep;
    cplx ephi = std::exp(cplx(0.0, -phi));
    std::vector<cplx> u(radii.size());
    for (size_t i = 0; i < radii.size(); ++i) {
        cplx lam = radii[i] * std::exp(cplx(0.0, phi));
        double sgn = radii[i] * radii[i] - 1.0 > 0.0 ? 1.0 : -1.0;
        u[i] = -sgn / (4.0 * pi * std::conj(lam)) * (a_reflected[i] - vhat0);
    }
    cplx U = u[0] * radii[0] * ephi;  // u is bounded at 0; flat extrapolation
    for (size_t i = 0; i < radii.size(); ++i) {
        if (i > 0) U += 0.5 * (u[i] + u[i - 1]) * (radii[i] - radii[i - 1]) * ephi;
        RayPoint pt;
        pt.r = radii[i];
        pt.delta = deltas[i];
        pt.predicted = std::exp(2.0 * U.real());
        rep.points.push_back(pt);
        double rel = std::abs(pt.delta - pt.predicted) / std::max(std::abs(pt.delta), 1e-300);
        rep.max_rel_mismatch = std::max(rep.max_rel_mismatch, rel);
    }
    return rep;
}

// Log-radial x uniform-angle annulus sweep, skipping the T collar for E > 0.
inline std::vector<SpectralSample> make_lambda_annulus(int esign, double rmin, double rmax,
                                                       int nr, int nphi,
                                                       double delta_T = 0.05,
                                                       double phase_offset = 0.0) {
    require(rmin > 0.0 && rmax > rmin && nr >= 1 && nphi >= 1, "make_lambda_annulus: bad bounds");
    std::vector<SpectralSample> out;
    for (int i = 0; i < nr; ++i) {
        double t = nr == 1 ? 0.0 : double(i) / (nr - 1);
        double r = rmin * std::pow(rmax / rmin, t);
        if (esign > 0 && std::abs(r - 1.0) < delta_T) continue;
        for (int j = 0; j < nphi; ++j) {
            double phi = phase_offset + 2.0 * pi * j / nphi;
            out.push_back(make_sample(r * std::exp(cplx(0.0, phi)), esign, delta_T));
        }
    }
    return out;
}

} // namespace nvscatter

#endif
