#ifndef NVSCATTER_INVERT_HPP
#define NVSCATTER_INVERT_HPP

#include <Eigen/Dense>

#include "nvscatter/scatter.hpp"

namespace nvscatter {

/*
 * Spectral-plane data for the inverse transform: b sampled on a log-radial
 * annulus with area weights, away from T (E > 0) and away from 0.  The
 * angular count must resolve the phase of the d-bar kernel at the largest |z|
 * to be reconstructed (oscillation ~ |lambda| |z|).
 */
struct DbarData {
    int esign = -1;
    std::vector<SpectralSample> samples;
    std::vector<cplx> b;
    std::vector<double> weight;  // lambda-plane area element per sample
};

struct AnnulusSpec {
    double rmin = 0.125;
    double rmax = 8.0;
    int nr = 16;    // even keeps |lambda| = 1 on a cell edge
    int nphi = 32;
    double delta_T = 0.05;
};

inline DbarData make_dbar_annulus(int esign, const AnnulusSpec& spec) {
    require(spec.rmin > 0.0 && spec.rmax > spec.rmin, "make_dbar_annulus: bad radii");
    DbarData data;
    data.esign = esign;
    double s0 = std::log(spec.rmin), s1 = std::log(spec.rmax);
    double ds = (s1 - s0) / spec.nr;
    double dphi = 2.0 * pi / spec.nphi;
    for (int i = 0; i < spec.nr; ++i) {
        double s = s0 + (i + 0.5) * ds;
        double r = std::exp(s);
        if (esign > 0 && std::abs(r - 1.0) < spec.delta_T) continue;
        for (int j = 0; j < spec.nphi; ++j) {
            double phi = (j + 0.5) * dphi;
            data.samples.push_back(make_sample(r * std::exp(cplx(0.0, phi)), esign, spec.delta_T));
            data.b.push_back(0.0);
            data.weight.push_back(r * r * ds * dphi);
        }
    }
    return data;
}

// Forward pipeline filling b on the annulus (only mu is needed for b).
inline DbarData forward_dbar_data(const RealField& v, int esign, const AnnulusSpec& spec,
                                  const PipelineOptions& opts = {}) {
    DbarData data = make_dbar_annulus(esign, spec);
    const Grid& g = v.grid;
    for (size_t i = 0; i < data.samples.size(); ++i) {
        GreenTable gt = green_table_cached(data.samples[i], g, opts.table);
        EigenSolution mu = solve_mu(v, gt, opts.solve);
        require(!mu.exceptional, "forward_dbar_data: exceptional lambda in the annulus");
        cplx b = 0.0;
        for (int j = 0; j < g.N; ++j)
            for (int k = 0; k < g.N; ++k) {
                double vv = v.at(j, k);
                if (vv == 0.0) continue;
                b += vv * data_phase(data.samples[i], g.node(j, k)) * mu.field.at(j, k);
            }
        data.b[i] = b * g.h() * g.h();
    }
    return data;
}

struct DbarSolveOptions {
    int max_iter = 80;
    double tol = 1e-11;     // absolute fixed-point update tolerance
    double relax = 1.0;
    int stall_limit = 6;    // consecutive non-decreasing updates allowed
};

struct DbarDiagnostics {
    int iterations = 0;
    double final_update = 0.0;
    bool converged = false;
};

/*
 * Solves mu = 1 + C[r conj(mu)] at fixed z over the lambda samples, where C is
 * the solid Cauchy transform (1/pi) int f(lambda')/(lambda - lambda') dA'.
 * The discrete Cauchy matrix drops the (nearly antisymmetric) self-cell.
 * Batched over many z so the per-iteration work is one dense product.
 */
class DbarSolver {
public:
    DbarSolver(const DbarData& data, const DbarSolveOptions& opts = {})
        : data_(data), opts_(opts) {
        const int M = int(data.samples.size());
        require(M > 0, "DbarSolver: empty data");
        C_.resize(M, M);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) {
                if (i == j) {
                    C_(i, j) = 0.0;
                    continue;
                }
                C_(i, j) = data.weight[j] /
                           (pi * (data.samples[i].lambda - data.samples[j].lambda));
            }
        rlam_.resize(M);
        for (int i = 0; i < M; ++i) {
            const SpectralSample& s = data.samples[i];
            double sgn = std::norm(s.lambda) - 1.0 > 0.0 ? 1.0 : -1.0;
            rlam_(i) = sgn / (4.0 * pi * std::conj(s.lambda)) * data.b[i];
        }
    }

    // mu(z, lambda_i) for a batch of z; columns are z points.
    Eigen::MatrixXcd solve_batch(const std::vector<cplx>& zs, DbarDiagnostics* diag = nullptr) const {
        const int M = int(data_.samples.size());
        const int Z = int(zs.size());
        Eigen::MatrixXcd R(M, Z);
        for (int i = 0; i < M; ++i)
            for (int c = 0; c < Z; ++c)
                R(i, c) = rlam_(i) * std::conj(data_phase(data_.samples[i], zs[c]));
        Eigen::MatrixXcd mu = Eigen::MatrixXcd::Ones(M, Z);
        double prev_update = std::numeric_limits<double>::infinity();
        int stall = 0;
        DbarDiagnostics d;
        for (d.iterations = 1; d.iterations <= opts_.max_iter; ++d.iterations) {
            Eigen::MatrixXcd next =
                Eigen::MatrixXcd::Ones(M, Z) + C_ * R.cwiseProduct(mu.conjugate());
            if (opts_.relax != 1.0)
                next = opts_.relax * next + (1.0 - opts_.relax) * mu;
            d.final_update = (next - mu).cwiseAbs().maxCoeff();
            mu = std::move(next);
            if (d.final_update < opts_.tol) {
                d.converged = true;
                break;
            }
            if (d.final_update >= prev_update) {
                if (++stall > opts_.stall_limit)
                    throw error("DbarSolver: fixed point is not contracting (data too large)");
            } else {
                stall = 0;
            }
            prev_update = d.final_update;
        }
        require(d.converged, "DbarSolver: fixed point did not converge");
        if (diag) *diag = d;
        return mu;
    }

    std::vector<cplx> solve(cplx z, DbarDiagnostics* diag = nullptr) const {
        Eigen::MatrixXcd mu = solve_batch({z}, diag);
        std::vector<cplx> out(mu.rows());
        for (int i = 0; i < mu.rows(); ++i) out[i] = mu(i, 0);
        return out;
    }

    const DbarData& data() const { return data_; }

private:
    DbarData data_;
    DbarSolveOptions opts_;
    Eigen::MatrixXcd C_;
    Eigen::VectorXcd rlam_;
};

struct Reconstruction {
    RealField v;
    ComplexField mu_minus1;
    double imag_defect = 0.0;  // ||Im v_c||_2 / ||Re v_c||_2
    DbarDiagnostics diagnostics;
};

/*
 * Inverse transform on a grid: solve the d-bar problem at every node, extract
 * mu_{-1} from a {1/lambda, 1/lambda^2} fit over the outermost rings, and
 * apply v = 2i sqrtE dz mu_{-1}.  The imaginary part is a fidelity diagnostic.
 */
inline Reconstruction reconstruct_v(const DbarData& data, const Grid& grid,
                                    const DbarSolveOptions& opts = {},
                                    double fit_ring_fraction = 0.55,
                                    double imag_defect_limit = 0.10) {
    DbarSolver solver(data, opts);
    std::vector<cplx> zs(grid.size());
    for (int j = 0; j < grid.N; ++j)
        for (int k = 0; k < grid.N; ++k) zs[size_t(j) * grid.N + k] = grid.node(j, k);

    Reconstruction rec{RealField(grid), ComplexField(grid), 0.0, {}};
    Eigen::MatrixXcd mu = solver.solve_batch(zs, &rec.diagnostics);

    double rmax = 0.0;
    for (const auto& s : data.samples) rmax = std::max(rmax, std::abs(s.lambda));
    double rfit = fit_ring_fraction * rmax;
    std::vector<int> ring;
    for (size_t i = 0; i < data.samples.size(); ++i)
        if (std::abs(data.samples[i].lambda) >= rfit) ring.push_back(int(i));
    require(ring.size() >= 8, "reconstruct_v: too few outer-ring samples for the fit");

    // Per-z least squares with basis {1/lambda, 1/lambda^2}.
    cplx s11 = 0.0, s12 = 0.0, s22 = 0.0;
    std::vector<cplx> x1(ring.size()), x2(ring.size());
    for (size_t k = 0; k < ring.size(); ++k) {
        cplx il = 1.0 / data.samples[ring[k]].lambda;
        x1[k] = il;
        x2[k] = il * il;
        s11 += std::conj(x1[k]) * x1[k];
        s12 += std::conj(x1[k]) * x2[k];
        s22 += std::conj(x2[k]) * x2[k];
    }
    cplx det = s11 * s22 - s12 * std::conj(s12);
    require(std::abs(det) > 1e-14, "reconstruct_v: degenerate ring fit");
    for (size_t i = 0; i < zs.size(); ++i) {
        cplx r1 = 0.0, r2 = 0.0;
        for (size_t k = 0; k < ring.size(); ++k) {
            cplx y = mu(ring[k], int(i)) - 1.0;
            r1 += std::conj(x1[k]) * y;
            r2 += std::conj(x2[k]) * y;
        }
        rec.mu_minus1.values[i] = (s22 * r1 - s12 * r2) / det;
    }

    ComplexField vc = spectral_derivative(rec.mu_minus1, Deriv::dz);
    cplx factor = 2.0i * sqrt_E(data.esign);
    double re2 = 0.0, im2 = 0.0;
    for (size_t i = 0; i < vc.values.size(); ++i) {
        cplx val = factor * vc.values[i];
        rec.v.values[i] = val.real();
        re2 += val.real() * val.real();
        im2 += val.imag() * val.imag();
    }
    rec.imag_defect = std::sqrt(im2) / std::max(std::sqrt(re2), 1e-300);
    require(rec.imag_defect <= imag_defect_limit,
            "reconstruct_v: imaginary-part diagnostic exceeds limit");
    return rec;
}

} // namespace nvscatter

#endif
