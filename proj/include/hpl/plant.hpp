#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/history_buffer.hpp"
#include "hpl/horizon.hpp"
#include "hpl/linalg.hpp"
#include "hpl/rng.hpp"

namespace hpl {

/// Z' = A Z + B U(t - D1(t)),  Y = C Z(t - D2(t)), with gains K (state feedback)
/// and L (observer).
struct PlantSpec {
    Matrix A, B, C, K, L;

    [[nodiscard]] Eigen::Index n() const noexcept { return A.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return B.cols(); }
    [[nodiscard]] Eigen::Index p() const noexcept { return C.rows(); }

    void check_dimensions() const {
        const auto n_ = n();
        if (A.cols() != n_ || B.rows() != n_ || C.cols() != n_ || K.rows() != m() || K.cols() != n_ ||
            L.rows() != n_ || L.cols() != p()) {
            throw Error(Errc::invalid_argument, "inconsistent plant dimensions");
        }
        if (n_ == 0 || n_ > 32) throw Error(Errc::invalid_argument, "state dimension must be in [1, 32]");
    }

    [[nodiscard]] Matrix closed_loop() const { return A + B * K; }
    [[nodiscard]] Matrix observer_matrix() const { return A - L * C; }

    /// Throws NotHurwitz naming the offending matrix.
    void check_hurwitz() const {
        check_dimensions();
        if (const double r = max_real_eigenvalue(closed_loop()); !(r < 0.0)) {
            throw Error(Errc::not_hurwitz, "A+BK has an eigenvalue with real part " + std::to_string(r));
        }
        if (const double r = max_real_eigenvalue(observer_matrix()); !(r < 0.0)) {
            throw Error(Errc::not_hurwitz, "A-LC has an eigenvalue with real part " + std::to_string(r));
        }
    }

    /// The two-state example: A = [[0,1],[1,2]], B = [0,1]', C = [1,-1], K = [-4,-4], L = [-4,-8]'.
    static PlantSpec reference_example() {
        PlantSpec s;
        s.A.resize(2, 2);
        s.A << 0.0, 1.0, 1.0, 2.0;
        s.B.resize(2, 1);
        s.B << 0.0, 1.0;
        s.C.resize(1, 2);
        s.C << 1.0, -1.0;
        s.K.resize(1, 2);
        s.K << -4.0, -4.0;
        s.L.resize(2, 1);
        s.L << -4.0, -8.0;
        return s;
    }
};

/// Pre-initial data for U or Z: either a constant or a table (linear interpolation).
class HistorySource {
public:
    static HistorySource constant(Vector value) {
        HistorySource h;
        h.constant_ = std::move(value);
        return h;
    }
    static HistorySource table(std::vector<double> times, std::vector<Vector> values) {
        if (times.empty() || times.size() != values.size()) {
            throw Error(Errc::invalid_argument, "history table needs matching, non-empty times and values");
        }
        HistorySource h;
        h.times_ = std::move(times);
        h.values_ = std::move(values);
        for (std::size_t i = 1; i < h.times_.size(); ++i) {
            if (!(h.times_[i] > h.times_[i - 1])) throw Error(Errc::invalid_argument, "history table times must increase");
        }
        return h;
    }

    [[nodiscard]] bool is_constant() const noexcept { return constant_.has_value(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return constant_ ? constant_->size() : values_.front().size(); }
    /// Earliest time covered (-inf for constants).
    [[nodiscard]] double begin() const noexcept {
        return constant_ ? -std::numeric_limits<double>::infinity() : times_.front();
    }

    [[nodiscard]] Vector operator()(double t) const {
        if (constant_) return *constant_;
        if (t < times_.front() - 1e-12) {
            throw Error(Errc::history_underflow, "history table starts at " + std::to_string(times_.front()) +
                                                     ", queried at " + std::to_string(t));
        }
        if (t <= times_.front()) return values_.front();
        if (t >= times_.back()) return values_.back();
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const auto i = static_cast<std::size_t>(it - times_.begin()) - 1;
        const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
        return (1.0 - w) * values_[i] + w * values_[i + 1];
    }

private:
    std::optional<Vector> constant_;
    std::vector<double> times_;
    std::vector<Vector> values_;
};

struct InitialData {
    Vector Z0;
    Vector xi0;
    HistorySource u_history;
    HistorySource z_history;
};

struct SimulationOptions {
    double T = 12.0;
    double dt = 1e-3;
    /// Standard deviation of additive Gaussian noise on Y; 0 disables it.
    double measurement_noise = 0.0;
    std::uint64_t noise_seed = 0;
};

struct SimulationTrace {
    std::vector<double> t;
    std::vector<Vector> Z, xi, Zhat, Phat, U, Y;
    std::vector<double> psi_hat;
    std::vector<double> gamma;
    /// Predictor lookups U(phi1(s)) with phi1(s) beyond the current time, clamped
    /// to the latest control sample.
    std::size_t clamp_count = 0;
    std::optional<double> first_clamp_time;
    /// max over steps of |phi1(t + psi_hat(t)) - t|.
    double max_horizon_identity_error = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
};

/// Composite trapezoid for integrals of the form
///   int_{lo}^{hi} e^{A (hi - s)} B u(s) ds
/// on nodes stepping back from hi by dt, with a final partial panel at lo.
/// Shared between the reconstruction and prediction stages.
class KernelQuadrature {
public:
    KernelQuadrature(const Matrix& A, const Matrix& B, double dt) : A_(A), B_(B), dt_(dt) {}

    /// e^{A j dt} B.
    const Matrix& propagated_input(std::size_t j) {
        while (table_.size() <= j) {
            if (table_.empty()) {
                step_ = matrix_exponential(A_, dt_);
                power_ = Matrix::Identity(A_.rows(), A_.cols());
            } else {
                power_ = power_ * step_;
            }
            table_.push_back(power_ * B_);
        }
        return table_[j];
    }

    /// lookup(s, out) writes u(s). end_propagator is e^{A (hi - lo)}.
    template <class Lookup>
    Vector integrate(double lo, double hi, const Matrix& end_propagator, Lookup&& lookup) {
        Vector acc = Vector::Zero(A_.rows());
        const double len = hi - lo;
        if (!(len > 0.0)) return acc;
        const auto full = static_cast<std::size_t>(std::floor(len / dt_ + 1e-12));
        const double rest = std::max(0.0, len - static_cast<double>(full) * dt_);
        Vector u(B_.cols());
        Vector g_prev(A_.rows());
        for (std::size_t j = 0; j <= full; ++j) {
            lookup(hi - static_cast<double>(j) * dt_, u);
            const Vector g = propagated_input(j) * u;
            if (j > 0) acc += 0.5 * dt_ * (g_prev + g);
            g_prev = g;
        }
        if (rest > 1e-15) {
            lookup(lo, u);
            const Vector g_end = end_propagator * B_ * u;
            acc += 0.5 * rest * (g_prev + g_end);
        }
        return acc;
    }

private:
    Matrix A_, B_;
    double dt_;
    Matrix step_, power_;
    std::vector<Matrix> table_;
};

/// Stage 2: Zhat(t) = e^{A D2(t)} xi(t) + int_{phi2(t)}^{t} e^{A(t - tau)} B U(phi1(tau)) dtau.
template <DelayFunction D1, DelayFunction D2>
[[nodiscard]] Vector reconstruct_zhat(const Matrix& A, const D1& d1, const D2& d2, const HistoryBuffer& u_hist,
                                      KernelQuadrature& quad, double t, const Vector& xi) {
    const double lag = d2.value(t);
    const Matrix E = matrix_exponential(A, lag);
    Vector z = E * xi;
    z += quad.integrate(t - lag, t, E, [&](double tau, Vector& out) { u_hist.interpolate(eval_phi(d1, tau), out); });
    return z;
}

/// Stage 3: Phat(t) = e^{A psi} Zhat + int_{t}^{t+psi} e^{A(t + psi - s)} B U(phi1(s)) ds.
/// `on_clamp` is called for every lookup U(phi1(s)) beyond `now`.
template <DelayFunction D1, class OnClamp>
[[nodiscard]] Vector predict_phat(const Matrix& A, const D1& d1, const HistoryBuffer& u_hist, KernelQuadrature& quad,
                                  double t, double psi, const Vector& zhat, double now, OnClamp&& on_clamp) {
    psi = std::max(psi, 0.0);
    const Matrix E = matrix_exponential(A, psi);
    Vector p = E * zhat;
    p += quad.integrate(t, t + psi, E, [&](double s, Vector& out) {
        const double when = eval_phi(d1, s);
        if (when > now + 1e-9) on_clamp(when);
        u_hist.interpolate(when, out);
    });
    return p;
}

namespace detail {

inline double gaussian(SplitMix64& rng) {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

/// Closed loop of the delayed plant with the observer / reconstruction / prediction
/// law U = K Phat. Plant and observer are co-integrated with fixed-step RK4; the
/// control is computed at every grid point and held in a history buffer for the
/// delayed lookups. `psi_hat(t)` supplies the prediction horizon.
template <DelayFunction D1, DelayFunction D2>
[[nodiscard]] SimulationTrace simulate(const PlantSpec& spec, const D1& d1, const D2& d2, const InitialData& init,
                                       const std::function<double(double)>& psi_hat,
                                       const SimulationOptions& opts = {}) {
    spec.check_dimensions();
    const Matrix& A = spec.A;
    const Matrix& B = spec.B;
    const Matrix& C = spec.C;
    const Matrix& K = spec.K;
    const Matrix& L = spec.L;
    const auto n = spec.n();
    if (init.Z0.size() != n || init.xi0.size() != n || init.u_history.dim() != spec.m() ||
        init.z_history.dim() != n) {
        throw Error(Errc::invalid_argument, "initial data dimensions do not match the plant");
    }
    const double dt = opts.dt;
    const auto steps = static_cast<std::size_t>(std::llround(opts.T / dt));
    if (!(dt > 0.0) || steps == 0) throw Error(Errc::invalid_argument, "need dt > 0 and T >= dt");

    // Pre-initial histories on the dt grid, back to the earliest lookup.
    const double z_start = std::min(eval_phi(d2, 0.0), 0.0);
    const double u_start = std::min({eval_phi(d1, z_start), eval_phi(d1, 0.0), 0.0});
    if (init.z_history.begin() > z_start + 1e-12) {
        throw Error(Errc::history_underflow, "state history must cover [" + std::to_string(z_start) + ", 0]");
    }
    if (init.u_history.begin() > u_start + 1e-12) {
        throw Error(Errc::history_underflow, "input history must cover [" + std::to_string(u_start) + ", 0]");
    }
    HistoryBuffer z_hist(n);
    HistoryBuffer u_hist(spec.m());
    {
        const auto kz = static_cast<std::int64_t>(std::ceil(-z_start / dt)) + 2;
        for (std::int64_t k = kz; k >= 1; --k) {
            const double th = -static_cast<double>(k) * dt;
            z_hist.append(th, init.z_history(std::max(th, init.z_history.begin())));
        }
        z_hist.append(0.0, init.Z0);
        const auto ku = static_cast<std::int64_t>(std::ceil(-u_start / dt)) + 2;
        for (std::int64_t k = ku; k >= 1; --k) {
            const double th = -static_cast<double>(k) * dt;
            u_hist.append(th, init.u_history(std::max(th, init.u_history.begin())));
        }
    }

    SplitMix64 noise_rng(opts.noise_seed);
    auto measure = [&](const Vector& z_delayed) {
        Vector y = C * z_delayed;
        if (opts.measurement_noise > 0.0) {
            for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += opts.measurement_noise * detail::gaussian(noise_rng);
        }
        return y;
    };

    KernelQuadrature quad(A, B, dt);
    SimulationTrace tr;
    const std::size_t count = steps + 1;
    tr.t.reserve(count);
    tr.psi_hat.reserve(count);
    tr.gamma.reserve(count);

    Vector Z = init.Z0;
    Vector xi = init.xi0;
    Vector tmp_u(spec.m());
    Vector tmp_z(n);

    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;

        z_hist.interpolate(eval_phi(d2, t), tmp_z);
        const Vector Y = measure(tmp_z);
        const Vector zhat = reconstruct_zhat(A, d1, d2, u_hist, quad, t, xi);
        const double psi = psi_hat(t);
        tr.max_horizon_identity_error =
            std::max(tr.max_horizon_identity_error, std::abs(eval_phi(d1, t + std::max(psi, 0.0)) - t));
        const Vector phat = predict_phat(A, d1, u_hist, quad, t, psi, zhat, t, [&](double when) {
            ++tr.clamp_count;
            if (!tr.first_clamp_time) tr.first_clamp_time = t;
            (void)when;
        });
        const Vector U = K * phat;
        if (k == 0 && u_hist.back_time() >= 0.0) {
            throw Error(Errc::invalid_argument, "input history overlaps t = 0");
        }
        u_hist.append(t, U);

        const double gamma = Z.squaredNorm() + (Z - zhat).squaredNorm() + u_hist.sup_norm_sq(eval_phi(d1, t), t);

        tr.t.push_back(t);
        tr.Z.push_back(Z);
        tr.xi.push_back(xi);
        tr.Zhat.push_back(zhat);
        tr.Phat.push_back(phat);
        tr.U.push_back(U);
        tr.Y.push_back(Y);
        tr.psi_hat.push_back(psi);
        tr.gamma.push_back(gamma);

        if (k == steps) break;

        // One RK4 step of (Z, xi) over [t, t + dt].
        const Vector z_now = Z;
        auto rhs = [&](double tau, const Vector& z, const Vector& x, Vector& dz, Vector& dx) {
            u_hist.interpolate(eval_phi(d1, tau), tmp_u);
            dz = A * z + B * tmp_u;
            const double s = eval_phi(d2, tau);
            Vector zs(n);
            if (s <= t) {
                z_hist.interpolate(s, zs);
            } else {
                // Only reachable when D2 < dt: blend toward the stage state.
                const double w = tau > t ? (s - t) / (tau - t) : 0.0;
                zs = z_now + w * (z - z_now);
            }
            const Vector y = measure(zs);
            u_hist.interpolate(eval_phi(d1, s), tmp_u);
            dx = eval_phi_rate(d2, tau) * (A * x + B * tmp_u + L * (y - C * x));
        };
        Vector k1z(n), k1x(n), k2z(n), k2x(n), k3z(n), k3x(n), k4z(n), k4x(n);
        rhs(t, Z, xi, k1z, k1x);
        rhs(t + 0.5 * dt, Z + 0.5 * dt * k1z, xi + 0.5 * dt * k1x, k2z, k2x);
        rhs(t + 0.5 * dt, Z + 0.5 * dt * k2z, xi + 0.5 * dt * k2x, k3z, k3x);
        rhs(t + dt, Z + dt * k3z, xi + dt * k3x, k4z, k4x);
        Z += dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        xi += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        z_hist.append(t + dt, Z);
    }
    return tr;
}

/// Horizon provider backed by a series (linear interpolation) plus a constant offset.
[[nodiscard]] inline std::function<double(double)> series_provider(HorizonSeries series, double offset = 0.0) {
    return [s = std::move(series), offset](double t) { return s.at(t) + offset; };
}

struct DecayFit {
    double M_fit = 0.0;
    double C_fit = 0.0;
    std::size_t points = 0;
};

/// Least-squares line through log Gamma on [T/4, T] (restricted to the prefix where
/// Gamma > 0): log Gamma = log M - C t.
[[nodiscard]] inline DecayFit gamma_decay_fit(std::span<const double> t, std::span<const double> gamma) {
    if (t.size() != gamma.size() || t.size() < 10) {
        throw Error(Errc::degenerate_trace, "need at least 10 samples of matching (t, gamma)");
    }
    std::size_t end = 0;
    while (end < gamma.size() && gamma[end] > 0.0 && std::isfinite(gamma[end])) ++end;
    const double T = t.back();
    const double start = t.front() + 0.25 * (T - t.front());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < end; ++i) {
        if (t[i] < start) continue;
        const double y = std::log(gamma[i]);
        sx += t[i];
        sy += y;
        sxx += t[i] * t[i];
        sxy += t[i] * y;
        ++m;
    }
    if (m < 2) throw Error(Errc::degenerate_trace, "gamma is not positive on the fit window");
    const double mm = static_cast<double>(m);
    const double den = mm * sxx - sx * sx;
    if (!(std::abs(den) > 0.0)) throw Error(Errc::degenerate_trace, "fit window has no time spread");
    const double slope = (mm * sxy - sx * sy) / den;
    const double intercept = (sy - slope * sx) / mm;
    return {std::exp(intercept), -slope, m};
}

[[nodiscard]] inline DecayFit gamma_decay_fit(const SimulationTrace& tr) { return gamma_decay_fit(tr.t, tr.gamma); }

/// CSV: t, Z_1..Z_n, xi_1..xi_n, Zhat_1..Zhat_n, Phat_1..Phat_n, U_1..U_m, Y_1..Y_p, psi_hat, gamma.
inline void write_trace_csv(std::ostream& os, const SimulationTrace& tr) {
    if (tr.size() == 0) return;
    const auto n = tr.Z.front().size();
    const auto m = tr.U.front().size();
    const auto p = tr.Y.front().size();
    auto cols = [&](const char* name, Eigen::Index k) {
        for (Eigen::Index i = 1; i <= k; ++i) os << ',' << name << '_' << i;
    };
    os << 't';
    cols("Z", n);
    cols("xi", n);
    cols("Zhat", n);
    cols("Phat", n);
    cols("U", m);
    cols("Y", p);
    os << ",psi_hat,gamma\n";
    const auto old = os.precision(17);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << tr.t[k];
        for (const auto* v : {&tr.Z[k], &tr.xi[k], &tr.Zhat[k], &tr.Phat[k], &tr.U[k], &tr.Y[k]}) {
            for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << (*v)(i);
        }
        os << ',' << tr.psi_hat[k] << ',' << tr.gamma[k] << '\n';
    }
    os.precision(old);
}

}  // namespace hpl
