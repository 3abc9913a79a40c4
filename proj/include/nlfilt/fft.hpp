#pragma once

// Thin FFTW3 wrapper: complex transforms with plan caching, plus the
// real-data helpers used by the discrete operators (circular and linear
// convolution, spectral multipliers).

#include <complex>
#include <map>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace nlfilt {

using cplx = std::complex<double>;

namespace fftdetail {
struct PlanCache {
    std::map<std::pair<int, int>, fftw_plan> plans;  // (n, sign)
    std::mutex mu;
    std::vector<cplx> buf;

    static PlanCache& instance() {
        static PlanCache c;
        return c;
    }
    ~PlanCache() {
        for (auto& [k, p] : plans) fftw_destroy_plan(p);
    }
};
}  // namespace fftdetail

// In-place complex FFT, sign=-1 forward / +1 backward (unnormalized).
inline void fft_inplace(std::vector<cplx>& a, int sign) {
    auto& c = fftdetail::PlanCache::instance();
    std::lock_guard<std::mutex> lk(c.mu);
    int n = int(a.size());
    auto key = std::make_pair(n, sign);
    auto it = c.plans.find(key);
    if (it == c.plans.end()) {
        if (int(c.buf.size()) < n) c.buf.resize(n);
        fftw_plan p = fftw_plan_dft_1d(
            n, reinterpret_cast<fftw_complex*>(c.buf.data()),
            reinterpret_cast<fftw_complex*>(c.buf.data()),
            sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
        it = c.plans.emplace(key, p).first;
    }
    fftw_execute_dft(it->second, reinterpret_cast<fftw_complex*>(a.data()),
                     reinterpret_cast<fftw_complex*>(a.data()));
}

// Circular convolution of real sequences a and kern (same length).
inline std::vector<double> circular_convolve(const std::vector<double>& a,
                                             const std::vector<double>& kern) {
    int n = int(a.size());
    std::vector<cplx> fa(a.begin(), a.end()), fk(kern.begin(), kern.end());
    fft_inplace(fa, -1);
    fft_inplace(fk, -1);
    for (int i = 0; i < n; ++i) fa[i] *= fk[i];
    fft_inplace(fa, +1);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = fa[i].real() / n;
    return out;
}

// Linear convolution of a (length n) with a symmetric kernel given by
// k0 at lag 0 and klag[j-1] at lags +-j; output truncated to length n.
inline std::vector<double> symmetric_linear_convolve(
    const std::vector<double>& a, double k0, const std::vector<double>& klag) {
    int n = int(a.size());
    int m = int(klag.size());
    int full = n + 2 * m;
    int nf = 1;
    while (nf < full) nf <<= 1;
    std::vector<cplx> fa(nf, 0.0), fk(nf, 0.0);
    for (int i = 0; i < n; ++i) fa[i + m] = a[i];
    fk[0] = k0;
    for (int j = 1; j <= m; ++j) {
        fk[j] += klag[j - 1];
        fk[nf - j] += klag[j - 1];
    }
    fft_inplace(fa, -1);
    fft_inplace(fk, -1);
    for (int i = 0; i < nf; ++i) fa[i] *= fk[i];
    fft_inplace(fa, +1);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = fa[i + m].real() / nf;
    return out;
}

// Apply a spectral multiplier mult(|xi|) to a real periodic sequence on a
// grid of extent length L (frequencies 2*pi*j/L).
template <class M>
std::vector<double> spectral_apply(const std::vector<double>& a, double L, M&& mult) {
    int n = int(a.size());
    std::vector<cplx> fa(a.begin(), a.end());
    fft_inplace(fa, -1);
    for (int j = 0; j < n; ++j) {
        int jj = j <= n / 2 ? j : j - n;
        double xi = 2.0 * 3.14159265358979323846 * jj / L;
        fa[j] *= mult(std::abs(xi));
    }
    fft_inplace(fa, +1);
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = fa[i].real() / n;
    return out;
}

}  // namespace nlfilt
