#ifndef NVSCATTER_EIGENFUNCTIONS_HPP
#define NVSCATTER_EIGENFUNCTIONS_HPP

#include <Eigen/Dense>

#include "nvscatter/green.hpp"
#include "nvscatter/potential.hpp"

namespace nvscatter {

// Exact Nystrom convolution (g * f)(x_j) = h^2 sum_k g(x_j - x_k) f(x_k) via
// zero padding onto the doubled grid the table lives on.
class GreenConvolver {
public:
    GreenConvolver(const GreenTable& gt, const Grid& base) : base_(base), M_(2 * base.N) {
        require(gt.g.grid.N == M_ && gt.g.grid.R == 2.0 * base.R,
                "GreenConvolver: table grid does not match base grid");
        const int N = base.N;
        Ghat_.assign(size_t(M_) * M_, cplx(0.0));
        for (int o1 = -N; o1 < N; ++o1) {
            int a = (o1 + M_) % M_;
            for (int o2 = -N; o2 < N; ++o2) {
                int b = (o2 + M_) % M_;
                Ghat_[size_t(a) * M_ + b] = gt.g.at(o1 + N, o2 + N);
            }
        }
        FftEngine::instance().forward(Ghat_, M_);
    }

    ComplexField apply(const ComplexField& f) const {
        require(f.grid == base_, "GreenConvolver: field grid mismatch");
        const int N = base_.N;
        std::vector<cplx> buf(size_t(M_) * M_, cplx(0.0));
        for (int j = 0; j < N; ++j)
            for (int k = 0; k < N; ++k) buf[size_t(j) * M_ + k] = f.at(j, k);
        FftEngine::instance().forward(buf, M_);
        for (size_t i = 0; i < buf.size(); ++i) buf[i] *= Ghat_[i];
        FftEngine::instance().backward(buf, M_);
        double scale = base_.h() * base_.h() / (double(M_) * M_);
        ComplexField out(base_);
        for (int j = 0; j < N; ++j)
            for (int k = 0; k < N; ++k) out.at(j, k) = scale * buf[size_t(j) * M_ + k];
        return out;
    }

private:
    Grid base_;
    int M_;
    std::vector<cplx> Ghat_;
};

enum class EigenKind { mu, nu };

struct EigenSolution {
    EigenKind kind = EigenKind::mu;
    SpectralSample sample;
    // mu itself, or the decaying correction nu - (i sqrtE / 2)(lambda zbar - z/lambda).
    ComplexField field;
    double solver_residual = 0.0;
    bool exceptional = false;
};

// The unbounded inhomogeneity of the nu equation, kept analytically.
inline ComplexField nu_inhomogeneity(const Grid& g, const SpectralSample& s) {
    cplx rE = sqrt_E(s.esign);
    return make_complex_field(g, [&](cplx z) {
        return 0.5i * rE * (s.lambda * std::conj(z) - z / s.lambda);
    });
}

struct SolveOptions {
    enum class Method { automatic, dense, iterative };
    Method method = Method::automatic;
    double tol = 1e-10;          // relative iterative tolerance
    int max_iter = 400;
    int restart = 60;
    int dense_cap = 4600;        // switch to GMRES above this many support nodes
    double support_cutoff = 1e-12;
    double rcond_threshold = 1e-12;  // exceptional-set flag
};

/*
 * Nystrom solver for mu = 1 + g*(v mu) and its nu sibling (same kernel,
 * different right side).  Columns where v vanishes numerically are zero, so
 * the linear algebra restricts exactly to the support nodes; the dense path
 * factorizes that restricted system once (rcond comes for free), the
 * iterative path runs restarted GMRES with the FFT-applied operator.
 */
class LippmannSchwingerSolver {
public:
    LippmannSchwingerSolver(const RealField& v, const GreenTable& gt, SolveOptions opts = {})
        : v_(v), sample_(gt.sample), opts_(opts), conv_(gt, v.grid) {
        double vmax = linf_norm(v_);
        for (size_t i = 0; i < v_.values.size(); ++i)
            if (std::abs(v_.values[i]) >= opts_.support_cutoff * std::max(vmax, 1e-300))
                support_.push_back(int(i));
        dense_ = opts_.method == SolveOptions::Method::dense ||
                 (opts_.method == SolveOptions::Method::automatic &&
                  int(support_.size()) <= opts_.dense_cap);
        if (dense_ && !support_.empty()) factorize(gt);
    }

    bool exceptional() const { return exceptional_; }
    double rcond() const { return rcond_; }
    const std::vector<int>& support() const { return support_; }

    EigenSolution solve(EigenKind kind) {
        EigenSolution sol;
        sol.kind = kind;
        sol.sample = sample_;
        sol.field = ComplexField(v_.grid);
        if (exceptional_) {
            sol.exceptional = true;
            return sol;
        }
        ComplexField rhs(v_.grid);
        if (kind == EigenKind::mu) {
            for (auto& x : rhs.values) x = 1.0;
        } else {
            ComplexField inhom = nu_inhomogeneity(v_.grid, sample_);
            for (size_t i = 0; i < inhom.values.size(); ++i) inhom.values[i] *= v_.values[i];
            rhs = conv_.apply(inhom);
        }
        sol.field = dense_ ? solve_dense(rhs, sol.solver_residual)
                           : solve_gmres(rhs, sol.solver_residual, sol.exceptional);
        return sol;
    }

private:
    void factorize(const GreenTable& gt) {
        const int n = int(support_.size());
        const int N = v_.grid.N;
        double h2 = v_.grid.h() * v_.grid.h();
        Eigen::MatrixXcd A(n, n);
        for (int col = 0; col < n; ++col) {
            int jc = support_[col] / N, kc = support_[col] % N;
            double vj = v_.values[support_[col]];
            for (int row = 0; row < n; ++row) {
                int jr = support_[row] / N, kr = support_[row] % N;
                A(row, col) = -h2 * vj * gt.g.at(jr - jc + N, kr - kc + N);
            }
            A(col, col) += 1.0;
        }
        lu_.compute(A);
        rcond_ = lu_.rcond();
        if (!(rcond_ >= opts_.rcond_threshold)) exceptional_ = true;
    }

    ComplexField solve_dense(const ComplexField& rhs, double& resid) {
        const int n = int(support_.size());
        Eigen::VectorXcd b(n);
        for (int i = 0; i < n; ++i) b(i) = rhs.values[support_[i]];
        Eigen::VectorXcd x = lu_.solve(b);
        // Extend off the support: u = rhs + g*(v x).  The convolution also
        // furnishes A x = x - (g*(v x))|_S for the residual check.
        ComplexField vu(v_.grid);
        for (int i = 0; i < n; ++i) vu.values[support_[i]] = v_.values[support_[i]] * x(i);
        ComplexField out = conv_.apply(vu);
        double rnorm = 0.0;
        for (int i = 0; i < n; ++i)
            rnorm += std::norm(x(i) - out.values[support_[i]] - b(i));
        resid = std::sqrt(rnorm) / std::max(b.norm(), 1e-300);
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += rhs.values[i];
        return out;
    }

    ComplexField apply_operator(const ComplexField& x) const {
        ComplexField vx(v_.grid);
        for (size_t i = 0; i < x.values.size(); ++i) vx.values[i] = v_.values[i] * x.values[i];
        ComplexField gx = conv_.apply(vx);
        ComplexField out = x;
        for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= gx.values[i];
        return out;
    }

    ComplexField solve_gmres(const ComplexField& rhs, double& resid, bool& failed) {
        const size_t n = rhs.values.size();
        using Vec = Eigen::VectorXcd;
        auto to_vec = [&](const ComplexField& f) {
            return Eigen::Map<const Vec>(f.values.data(), n).eval();
        };
        auto to_field = [&](const Vec& v) {
            ComplexField f(v_.grid);
            Eigen::Map<Vec>(f.values.data(), n) = v;
            return f;
        };
        Vec b = to_vec(rhs);
        double bnorm = std::max(b.norm(), 1e-300);
        Vec x = Vec::Zero(n);
        double beta = bnorm;
        int iters = 0;
        while (iters < opts_.max_iter) {
            Vec r = b - to_vec(apply_operator(to_field(x)));
            beta = r.norm();
            if (beta / bnorm < opts_.tol) break;
            int m = opts_.restart;
            Eigen::MatrixXcd V(n, m + 1);
            Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(m + 1, m);
            V.col(0) = r / beta;
            int k = 0;
            for (; k < m && iters < opts_.max_iter; ++k, ++iters) {
                Vec w = to_vec(apply_operator(to_field(V.col(k))));
                for (int i = 0; i <= k; ++i) {
                    H(i, k) = V.col(i).dot(w);
                    w -= H(i, k) * V.col(i);
                }
                H(k + 1, k) = w.norm();
                if (H(k + 1, k).real() < 1e-300) { ++k; break; }
                V.col(k + 1) = w / H(k + 1, k);
                // cheap convergence probe via the least-squares residual
                Vec e = Vec::Zero(k + 2);
                e(0) = beta;
                Eigen::VectorXcd y = H.topLeftCorner(k + 2, k + 1)
                                         .colPivHouseholderQr()
                                         .solve(e);
                double rho = (H.topLeftCorner(k + 2, k + 1) * y - e).norm();
                if (rho / bnorm < opts_.tol) { ++k; break; }
            }
            Vec e = Vec::Zero(k + 1);
            e(0) = beta;
            Eigen::VectorXcd y =
                H.topLeftCorner(k + 1, k).colPivHouseholderQr().solve(e);
            x += V.leftCols(k) * y;
        }
        Vec r = b - to_vec(apply_operator(to_field(x)));
        resid = r.norm() / bnorm;
        failed = !(resid < std::sqrt(opts_.tol));  // well short of convergence
        return to_field(x);
    }

    RealField v_;
    SpectralSample sample_;
    SolveOptions opts_;
    GreenConvolver conv_;
    std::vector<int> support_;
    bool dense_ = false;
    bool exceptional_ = false;
    double rcond_ = std::numeric_limits<double>::quiet_NaN();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

inline EigenSolution solve_mu(const RealField& v, const GreenTable& gt,
                              const SolveOptions& opts = {}) {
    LippmannSchwingerSolver solver(v, gt, opts);
    return solver.solve(EigenKind::mu);
}

inline EigenSolution solve_nu(const RealField& v, const GreenTable& gt,
                              const SolveOptions& opts = {}) {
    LippmannSchwingerSolver solver(v, gt, opts);
    return solver.solve(EigenKind::nu);
}

// Full nu field (correction plus the analytic inhomogeneity).
inline ComplexField nu_full(const EigenSolution& sol) {
    require(sol.kind == EigenKind::nu, "nu_full: not a nu solution");
    ComplexField out = nu_inhomogeneity(sol.field.grid, sol.sample);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += sol.field.values[i];
    return out;
}

/*
 * Conjugated Schrodinger residual.  With L = -4 dz dzbar - 2i sqrtE lambda dz
 * - (2i sqrtE / lambda) dzbar (Fourier symbol sigma), the eigenfunction
 * equation reads L u + v u_total = 0; the inhomogeneous nu part is annihilated
 * analytically, so only the decaying stored field is differentiated.
 */
inline double schrodinger_residual(const EigenSolution& sol, const RealField& v,
                                   double interior_fraction = 0.75) {
    require(!sol.exceptional, "schrodinger_residual: exceptional solution");
    const Grid& g = sol.field.grid;
    ComplexField Lf = apply_fourier_multiplier(
        sol.field, [&](cplx p) { return green_symbol(p, sol.sample); });
    ComplexField total = sol.kind == EigenKind::mu ? sol.field : nu_full(sol);
    double num = 0.0, den = 0.0;
    double rmax = interior_fraction * g.R;
    for (int j = 0; j < g.N; ++j)
        for (int k = 0; k < g.N; ++k) {
            if (std::abs(g.node(j, k)) > rmax) continue;
            cplx resid = Lf.at(j, k) + v.at(j, k) * total.at(j, k);
            num += std::norm(resid);
            den += std::norm(total.at(j, k));
        }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// Size of the first Born correction; the small-data dial used across tests.
inline double born_parameter(const RealField& v, const GreenTable& gt) {
    GreenConvolver conv(gt, v.grid);
    return linf_norm(conv.apply(to_complex(v)));
}

struct MuMinus1Fit {
    ComplexField mu_minus1;
    double max_fit_residual = 0.0;
};

/*
 * Per-node least-squares fit of mu - 1 against 1/lambda over large-|lambda|
 * solutions; the coefficient field drives the reconstruction identity
 * v = 2i sqrtE dz mu_{-1}.
 */
inline MuMinus1Fit mu_minus1(const std::vector<EigenSolution>& sols,
                             double residual_threshold = 1e-3) {
    require(sols.size() >= 3, "mu_minus1: need at least 3 samples");
    for (const auto& s : sols) {
        require(s.kind == EigenKind::mu && !s.exceptional, "mu_minus1: need mu solutions");
        require(std::abs(s.sample.lambda) >= 8.0, "mu_minus1: |lambda| must be >= 8");
        require(s.field.grid == sols.front().field.grid, "mu_minus1: grid mismatch");
    }
    const Grid& g = sols.front().field.grid;
    MuMinus1Fit fit;
    fit.mu_minus1 = ComplexField(g);
    double sxx = 0.0;
    std::vector<cplx> xs;
    for (const auto& s : sols) {
        xs.push_back(1.0 / s.sample.lambda);
        sxx += std::norm(xs.back());
    }
    for (size_t i = 0; i < g.size(); ++i) {
        cplx sxy = 0.0;
        for (size_t k = 0; k < sols.size(); ++k)
            sxy += std::conj(xs[k]) * (sols[k].field.values[i] - 1.0);
        cplx coef = sxy / sxx;
        double r2 = 0.0;
        for (size_t k = 0; k < sols.size(); ++k)
            r2 += std::norm(sols[k].field.values[i] - 1.0 - coef * xs[k]);
        fit.mu_minus1.values[i] = coef;
        fit.max_fit_residual = std::max(fit.max_fit_residual, std::sqrt(r2 / sols.size()));
    }
    require(fit.max_fit_residual <= residual_threshold,
            "mu_minus1: fit residual above threshold (lambda not asymptotic yet)");
    return fit;
}

} // namespace nvscatter

#endif
