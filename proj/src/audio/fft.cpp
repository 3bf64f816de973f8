#include "sonicgauss/audio/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace sonicgauss::audio {

namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex g_plan_mutex;
std::map<std::pair<int, bool>, fftw_plan> g_plans;

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double, FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex, FftwFree>;

RealBuffer alloc_real(int n) { return RealBuffer(fftw_alloc_real(static_cast<size_t>(n))); }
ComplexBuffer alloc_complex(int n) { return ComplexBuffer(fftw_alloc_complex(static_cast<size_t>(n))); }

fftw_plan plan_for(int n, bool forward) {
    std::lock_guard lock(g_plan_mutex);
    auto key = std::make_pair(n, forward);
    auto it = g_plans.find(key);
    if (it != g_plans.end()) {
        return it->second;
    }
    RealBuffer r = alloc_real(n);
    ComplexBuffer c = alloc_complex(n / 2 + 1);
    fftw_plan p = forward ? fftw_plan_dft_r2c_1d(n, r.get(), c.get(), FFTW_ESTIMATE)
                          : fftw_plan_dft_c2r_1d(n, c.get(), r.get(), FFTW_ESTIMATE);
    if (p == nullptr) {
        throw std::runtime_error("FFTW planning failed");
    }
    g_plans.emplace(key, p);
    return p;
}

}  // namespace

std::vector<Complex> rfft(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    if (n == 0) {
        return {};
    }
    fftw_plan plan = plan_for(n, true);
    RealBuffer in = alloc_real(n);
    ComplexBuffer out = alloc_complex(n / 2 + 1);
    std::copy(x.begin(), x.end(), in.get());
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    std::vector<Complex> result(static_cast<size_t>(n / 2 + 1));
    for (size_t k = 0; k < result.size(); ++k) {
        result[k] = Complex(out.get()[k][0], out.get()[k][1]);
    }
    return result;
}

std::vector<double> irfft(std::span<const Complex> spectrum, int n) {
    if (n <= 0 || spectrum.size() != static_cast<size_t>(n / 2 + 1)) {
        throw std::invalid_argument("irfft: spectrum length does not match n/2+1");
    }
    fftw_plan plan = plan_for(n, false);
    ComplexBuffer in = alloc_complex(n / 2 + 1);
    RealBuffer out = alloc_real(n);
    for (size_t k = 0; k < spectrum.size(); ++k) {
        in.get()[k][0] = spectrum[k].real();
        in.get()[k][1] = spectrum[k].imag();
    }
    fftw_execute_dft_c2r(plan, in.get(), out.get());
    std::vector<double> result(out.get(), out.get() + n);
    for (double& v : result) {
        v /= n;
    }
    return result;
}

}  // namespace sonicgauss::audio
