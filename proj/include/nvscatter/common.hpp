#ifndef NVSCATTER_COMMON_HPP
#define NVSCATTER_COMMON_HPP

#include <complex>
#include <stdexcept>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace nvscatter {

using cplx = std::complex<double>;
using namespace std::complex_literals;

inline constexpr double pi = 3.14159265358979323846264338327950288;

// sqrt(E) for E = +1 / -1 after the scaling normalization.
inline cplx sqrt_E(int esign) { return esign > 0 ? cplx(1.0, 0.0) : cplx(0.0, 1.0); }

// (sqrt(E))^3 = E * sqrt(E).
inline cplx sqrt_E_cubed(int esign) { return double(esign) * sqrt_E(esign); }

class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw error(msg);
}

inline int max_workers() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_workers(int n) {
#if defined(_OPENMP)
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace nvscatter

#endif
