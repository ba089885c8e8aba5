#ifndef NVSCATTER_FFT_HPP
#define NVSCATTER_FFT_HPP

#include <complex>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "nvscatter/common.hpp"

namespace nvscatter {

// Thin FFTW wrapper for square 2-D complex transforms.  Plans are cached per
// size and created with FFTW_UNALIGNED so the new-array execute interface can
// run on any std::vector buffer; plan creation is serialized (FFTW requirement),
// execution on distinct buffers is safe from concurrent workers.
class FftEngine {
public:
    static FftEngine& instance() {
        static FftEngine engine;
        return engine;
    }

    // In-place forward/backward transform of an n-by-n row-major array.
    // Backward is unnormalized (FFTW convention); callers scale by 1/n^2.
    void forward(std::vector<cplx>& data, int n)  { execute(data, n, FFTW_FORWARD); }
    void backward(std::vector<cplx>& data, int n) { execute(data, n, FFTW_BACKWARD); }

    FftEngine(const FftEngine&) = delete;
    FftEngine& operator=(const FftEngine&) = delete;

private:
    FftEngine() = default;
    ~FftEngine() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    void execute(std::vector<cplx>& data, int n, int sign) {
        require(int(data.size()) == n * n, "fft: buffer size does not match n*n");
        fftw_plan plan = acquire(n, sign);
        auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
        fftw_execute_dft(plan, ptr, ptr);
    }

    fftw_plan acquire(int n, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<cplx> scratch(size_t(n) * n);
        auto* ptr = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_dft_2d(n, n, ptr, ptr, sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        require(plan != nullptr, "fft: plan creation failed");
        plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mutex_;
    std::map<std::pair<int, int>, fftw_plan> plans_;
};

} // namespace nvscatter

#endif
