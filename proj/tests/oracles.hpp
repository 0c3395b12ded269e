#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "hpl/delay_model.hpp"
#include "hpl/neural_horizon.hpp"

namespace oracle {

/// psi(t) by plain bisection in long double on phi(t + psi) = t over [0, 1000].
template <class D>
long double bisect_psi(const D& d, long double t) {
    auto f = [&](long double p) {
        const long double s = t + p;
        return s - static_cast<long double>(d.value(static_cast<double>(s))) - t;
    };
    long double lo = t < 0 ? -t : 0.0L;
    long double hi = lo + 1.0L;
    while (f(hi) < 0) hi = lo + 2 * (hi - lo);
    for (int i = 0; i < 200; ++i) {
        const long double mid = 0.5L * (lo + hi);
        if (mid == lo || mid == hi) break;
        (f(mid) < 0 ? lo : hi) = mid;
    }
    return 0.5L * (lo + hi);
}

/// Truncated Taylor series sum_{k<terms} (M t)^k / k!.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& M, double t, int terms = 200) {
    const Eigen::MatrixXd X = M * t;
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(M.rows(), M.cols());
    Eigen::MatrixXd sum = term;
    for (int k = 1; k < terms; ++k) {
        term = (term * X / static_cast<double>(k)).eval();
        sum += term;
    }
    return sum;
}

/// Forward pass written directly from the operator definition with complex
/// arithmetic and an explicit DFT; shares no code with the library kernels.
inline std::vector<double> reference_forward(const hpl::OperatorWeights& w, const std::vector<double>& d) {
    using cd = std::complex<double>;
    const std::size_t n = w.resolution;
    const std::size_t C = w.channels;
    const double pi = 3.14159265358979323846;
    auto gelu = [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
    auto stat = [](const Eigen::VectorXd& v, std::size_t j) { return v.size() == 1 ? v(0) : v(static_cast<Eigen::Index>(j)); };

    std::vector<std::vector<double>> v(C, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        const double x0 = (d[j] - stat(w.in_mean, j)) / stat(w.in_std, j);
        const double x1 = static_cast<double>(j) / static_cast<double>(n - 1);
        for (std::size_t c = 0; c < C; ++c) {
            v[c][j] = w.lift_w(static_cast<Eigen::Index>(c), 0) * x0 + w.lift_w(static_cast<Eigen::Index>(c), 1) * x1 +
                      w.lift_b(static_cast<Eigen::Index>(c));
        }
    }
    for (const auto& layer : w.blocks) {
        // Full spectrum of each channel, then keep the lowest modes.
        std::vector<std::vector<cd>> spec(C, std::vector<cd>(w.modes));
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < w.modes; ++k) {
                cd acc = 0;
                for (std::size_t j = 0; j < n; ++j) acc += v[c][j] * std::polar(1.0, -2.0 * pi * double(k * j) / double(n));
                spec[c][k] = acc;
            }
        }
        std::vector<std::vector<double>> next(C, std::vector<double>(n, 0.0));
        for (std::size_t o = 0; o < C; ++o) {
            // Hermitian-completed inverse transform of the mixed half spectrum.
            std::vector<cd> full(n, 0.0);
            for (std::size_t k = 0; k < w.modes; ++k) {
                cd y = 0;
                for (std::size_t i = 0; i < C; ++i) {
                    y += spec[i][k] * cd(layer.spectral_re[k](Eigen::Index(i), Eigen::Index(o)),
                                         layer.spectral_im[k](Eigen::Index(i), Eigen::Index(o)));
                }
                if (k == 0 || (n % 2 == 0 && k == n / 2)) y = y.real();
                full[k] = y;
                if (k != 0 && k != n - k) full[n - k] = std::conj(y);
            }
            for (std::size_t j = 0; j < n; ++j) {
                cd acc = 0;
                for (std::size_t k = 0; k < n; ++k) acc += full[k] * std::polar(1.0, 2.0 * pi * double(k * j) / double(n));
                double pw = layer.pointwise_b(Eigen::Index(o));
                for (std::size_t i = 0; i < C; ++i) pw += layer.pointwise_w(Eigen::Index(o), Eigen::Index(i)) * v[i][j];
                next[o][j] = gelu(acc.real() / double(n) + pw);
            }
        }
        v = next;
    }
    std::vector<double> out(n);
    const auto P = static_cast<std::size_t>(w.project0_w.rows());
    for (std::size_t j = 0; j < n; ++j) {
        double y = w.project1_b(0);
        for (std::size_t p = 0; p < P; ++p) {
            double h = w.project0_b(Eigen::Index(p));
            for (std::size_t c = 0; c < C; ++c) h += w.project0_w(Eigen::Index(p), Eigen::Index(c)) * v[c][j];
            y += w.project1_w(0, Eigen::Index(p)) * gelu(h);
        }
        out[j] = y * stat(w.out_std, j) + stat(w.out_mean, j);
    }
    return out;
}

}  // namespace oracle
