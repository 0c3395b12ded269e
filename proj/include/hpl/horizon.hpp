#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"

namespace hpl {

enum class HorizonMethod { oracle, euler, rk4, neural, windowed };

[[nodiscard]] constexpr std::string_view to_string(HorizonMethod m) noexcept {
    switch (m) {
        case HorizonMethod::oracle: return "oracle";
        case HorizonMethod::euler: return "euler";
        case HorizonMethod::rk4: return "rk4";
        case HorizonMethod::neural: return "neural";
        case HorizonMethod::windowed: return "windowed";
    }
    return "unknown";
}

/// Accepts "fno" as an alias of "neural".
[[nodiscard]] inline HorizonMethod parse_horizon_method(std::string_view s) {
    if (s == "oracle") return HorizonMethod::oracle;
    if (s == "euler") return HorizonMethod::euler;
    if (s == "rk4") return HorizonMethod::rk4;
    if (s == "neural" || s == "fno") return HorizonMethod::neural;
    if (s == "windowed") return HorizonMethod::windowed;
    throw Error(Errc::invalid_argument, "unknown horizon method '" + std::string(s) + "'");
}

/// psi sampled on a time grid. step is the grid spacing (0 when non-uniform).
struct HorizonSeries {
    std::vector<double> grid;
    std::vector<double> values;
    HorizonMethod method = HorizonMethod::oracle;
    double step = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return grid.size(); }

    /// Linear interpolation, clamped to the end values outside the grid.
    [[nodiscard]] double at(double t) const noexcept {
        if (grid.empty()) return 0.0;
        if (t <= grid.front()) return values.front();
        if (t >= grid.back()) return values.back();
        std::size_t i;
        if (step > 0.0) {
            i = std::min(static_cast<std::size_t>((t - grid.front()) / step), grid.size() - 2);
            // Rounding can put t one cell off.
            while (i > 0 && grid[i] > t) --i;
            while (i + 2 < grid.size() && grid[i + 1] < t) ++i;
        } else {
            i = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), t) - grid.begin()) - 1;
        }
        const double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
        return (1.0 - w) * values[i] + w * values[i + 1];
    }
};

struct RootOptions {
    double tol = 1e-12;
    int max_iter = 200;
};

inline constexpr double singular_denominator_floor = 1e-9;

/// t_n = t0 + n*h for n = 0..N with N = round((t1 - t0)/h).
[[nodiscard]] inline std::vector<double> uniform_grid(double t0, double t1, double h) {
    if (!(h > 0.0) || !(t1 >= t0)) throw Error(Errc::invalid_argument, "uniform_grid needs h > 0 and t1 >= t0");
    const auto n = static_cast<std::int64_t>(std::llround((t1 - t0) / h));
    if (std::abs(static_cast<double>(n) * h - (t1 - t0)) > 1e-9 * std::max(1.0, std::abs(t1 - t0))) {
        throw Error(Errc::grid_mismatch, "interval length is not a multiple of the step");
    }
    std::vector<double> g(static_cast<std::size_t>(n) + 1);
    for (std::int64_t k = 0; k <= n; ++k) g[static_cast<std::size_t>(k)] = t0 + static_cast<double>(k) * h;
    return g;
}

/// Spacing of a uniform grid, or 0 if the grid is not uniform.
[[nodiscard]] inline double uniform_step(std::span<const double> grid) noexcept {
    if (grid.size() < 2) return 0.0;
    const double h = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    for (std::size_t n = 1; n < grid.size(); ++n) {
        if (std::abs((grid[n] - grid[n - 1]) - h) > 1e-9 * std::max(1.0, h)) return 0.0;
    }
    return h;
}

/// phi(t + psi) - t; zero exactly at the prediction horizon.
template <DelayFunction D>
[[nodiscard]] double fixed_point_residual(const D& d, double t, double psi) noexcept {
    return eval_phi(d, t + psi) - t;
}

namespace detail {

/// Bisection on f(psi) = phi(t + psi) - t, assuming f(lo) <= 0 <= f(hi).
/// f is increasing in psi because phi' > 0.
template <DelayFunction D>
double bisect_horizon(const D& d, double t, double lo, double hi, const RootOptions& opts) {
    double best = lo;
    double best_res = std::abs(fixed_point_residual(d, t, lo));
    const double r_hi = std::abs(fixed_point_residual(d, t, hi));
    if (r_hi < best_res) {
        best = hi;
        best_res = r_hi;
    }
    for (int it = 0; it < opts.max_iter && best_res > opts.tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double f = fixed_point_residual(d, t, mid);
        if (std::abs(f) < best_res) {
            best = mid;
            best_res = std::abs(f);
        }
        if (f < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return best;
}

/// Bracket from the smallest admissible psi (t + psi >= 0) upward, doubling until
/// the residual changes sign or `cap` is exceeded.
template <DelayFunction D>
double cold_solve(const D& d, double t, std::optional<double> cap, const RootOptions& opts) {
    const double lo = std::max(0.0, -t);
    const double f_lo = fixed_point_residual(d, t, lo);
    if (f_lo > 0.0) {
        throw Error(Errc::bracket_not_found,
                    "t=" + std::to_string(t) + " lies below the range of phi (phi(0) > t)");
    }
    if (f_lo == 0.0) return lo;
    const double limit = cap.value_or(1e6);
    double width = std::max(d.value(t + lo), 1e-3);
    double hi = lo + std::min(width, limit);
    while (fixed_point_residual(d, t, hi) < 0.0) {
        if (hi - lo >= limit) {
            throw Error(Errc::bracket_not_found,
                        "no sign change of phi(t+psi)-t for psi in [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "] at t=" + std::to_string(t));
        }
        width *= 2.0;
        hi = lo + std::min(width, limit);
    }
    return bisect_horizon(d, t, lo, hi, opts);
}

}  // namespace detail

/// Root of t - D(t) = 0, i.e. psi(0).
template <DelayFunction D>
[[nodiscard]] double solve_psi0(const D& d, std::optional<double> psi_cap = std::nullopt,
                                const RootOptions& opts = {}) {
    return detail::cold_solve(d, 0.0, psi_cap, opts);
}

/// psi at a single time by bracketed bisection.
template <DelayFunction D>
[[nodiscard]] double solve_psi_at(const D& d, double t, std::optional<double> psi_cap = std::nullopt,
                                  const RootOptions& opts = {}) {
    return detail::cold_solve(d, t, psi_cap, opts);
}

/// dpsi/dt = D'(t+psi) / (1 - D'(t+psi)).
template <DelayFunction D>
[[nodiscard]] double psi_ode_rhs(const D& d, double t, double psi) {
    const double rate = d.rate(t + psi);
    const double den = 1.0 - rate;
    if (den < singular_denominator_floor) {
        throw Error(Errc::near_singular_denominator,
                    "1 - D'(t+psi) = " + std::to_string(den) + " at t=" + std::to_string(t));
    }
    return rate / den;
}

/// Root-finding reference: solves phi(t_n + psi) = t_n at every grid point, with
/// the bracket warm-started from the previous point.
template <DelayFunction D>
[[nodiscard]] HorizonSeries oracle_psi(const D& d, std::span<const double> grid,
                                       std::optional<double> psi_cap = std::nullopt,
                                       const RootOptions& opts = {}) {
    HorizonSeries s;
    s.method = HorizonMethod::oracle;
    s.grid.assign(grid.begin(), grid.end());
    s.values.resize(grid.size());
    s.step = uniform_step(grid);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double t = grid[n];
        try {
            bool warm = false;
            if (n > 0) {
                const double prev = s.values[n - 1];
                const double dt = std::abs(t - grid[n - 1]);
                const double slope = std::abs(d.rate(grid[n - 1] + prev)) /
                                         std::max(1.0 - d.rate(grid[n - 1] + prev), singular_denominator_floor) +
                                     1.0;
                const double lo = std::max(prev - 2.0 * dt * slope, std::max(0.0, -t));
                const double hi = prev + 2.0 * dt * slope;
                if (fixed_point_residual(d, t, lo) <= 0.0 && fixed_point_residual(d, t, hi) >= 0.0) {
                    s.values[n] = detail::bisect_horizon(d, t, lo, hi, opts);
                    warm = true;
                }
            }
            if (!warm) s.values[n] = detail::cold_solve(d, t, psi_cap, opts);
        } catch (const Error& e) {
            throw Error(e.code(), "oracle failed at t=" + std::to_string(t) + ": " + e.what());
        }
    }
    return s;
}

template <DelayFunction D>
[[nodiscard]] HorizonSeries oracle_psi(const D& d, const std::vector<double>& grid,
                                       std::optional<double> psi_cap = std::nullopt,
                                       const RootOptions& opts = {}) {
    return oracle_psi(d, std::span<const double>(grid), psi_cap, opts);
}

namespace detail {

template <DelayFunction D>
double euler_increment(const D& d, double t, double psi, double h) {
    return h * psi_ode_rhs(d, t, psi);
}

template <DelayFunction D>
double rk4_increment(const D& d, double t, double psi, double h) {
    const double k1 = psi_ode_rhs(d, t, psi);
    const double k2 = psi_ode_rhs(d, t + 0.5 * h, psi + 0.5 * h * k1);
    const double k3 = psi_ode_rhs(d, t + 0.5 * h, psi + 0.5 * h * k2);
    const double k4 = psi_ode_rhs(d, t + h, psi + h * k3);
    return h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <DelayFunction D, class Step>
HorizonSeries integrate_psi(const D& d, double h, double T, HorizonMethod method, Step step,
                            std::int64_t anchor_every) {
    HorizonSeries s;
    s.method = method;
    s.step = h;
    s.grid = uniform_grid(0.0, T, h);
    s.values.resize(s.grid.size());
    s.values[0] = solve_psi0(d);
    for (std::size_t n = 1; n < s.grid.size(); ++n) {
        if (anchor_every > 0 && static_cast<std::int64_t>(n) % anchor_every == 0) {
            s.values[n] = solve_psi_at(d, s.grid[n]);
        } else {
            s.values[n] = s.values[n - 1] + step(d, s.grid[n - 1], s.values[n - 1], h);
        }
    }
    return s;
}

}  // namespace detail

/// Explicit Euler on the horizon ODE, started from the fixed point psi(0) = D(psi(0)).
template <DelayFunction D>
[[nodiscard]] HorizonSeries euler_psi(const D& d, double h, double T) {
    return detail::integrate_psi(d, h, T, HorizonMethod::euler, detail::euler_increment<D>, 0);
}

/// Classical four-stage Runge-Kutta on the same ODE.
template <DelayFunction D>
[[nodiscard]] HorizonSeries rk4_psi(const D& d, double h, double T) {
    return detail::integrate_psi(d, h, T, HorizonMethod::rk4, detail::rk4_increment<D>, 0);
}

/// Re-anchored integration: [0, T] is cut into windows of length window_H (rounded
/// to whole steps); each window starts from an exact fixed-point solve at its left
/// end and is integrated with `inner` (euler or rk4) up to the next anchor.
template <DelayFunction D>
[[nodiscard]] HorizonSeries windowed_psi(const D& d, double window_H, HorizonMethod inner, double T, double h) {
    if (!(window_H > 0.0)) throw Error(Errc::invalid_argument, "window_H must be positive");
    const auto steps = std::max<std::int64_t>(1, std::llround(window_H / h));
    HorizonSeries s;
    switch (inner) {
        case HorizonMethod::euler:
            s = detail::integrate_psi(d, h, T, HorizonMethod::windowed, detail::euler_increment<D>, steps);
            break;
        case HorizonMethod::rk4:
            s = detail::integrate_psi(d, h, T, HorizonMethod::windowed, detail::rk4_increment<D>, steps);
            break;
        default:
            throw Error(Errc::invalid_argument, "windowed inner method must be euler or rk4");
    }
    return s;
}

/// Ingredients of the explicit-Euler global error bound
///   max |psi - psi_euler| <= (e^{KT} - 1)/K * h/2 * max|psi''|.
struct EulerBoundReport {
    double h = 0.0;
    double T = 0.0;
    /// sup |phi''(s) / phi'(s)^2| along s = t + psi(t).
    double lipschitz_K = 0.0;
    /// sup |phi''(s)| / pi3^2 with pi3 = 1 / sup phi'(s) along the same trajectory.
    double lipschitz_K_pi3 = 0.0;
    double max_psi_ddot = 0.0;
    double bound = 0.0;
    double measured_max_error = 0.0;
};

/// (e^{KT} - 1)/K * h/2 * max|psi''|, with the K -> 0 limit T.
[[nodiscard]] inline double euler_global_bound(double K, double T, double h, double max_psi_ddot) noexcept {
    const double growth = K > 0.0 ? std::expm1(K * T) / K : T;
    return growth * 0.5 * h * max_psi_ddot;
}

/// Stride of a coarse uniform grid inside a fine one, or nullopt if it does not nest.
[[nodiscard]] inline std::optional<std::size_t> nested_stride(const HorizonSeries& fine, double h, double T) {
    if (!(fine.step > 0.0) || fine.grid.empty() || std::abs(fine.grid.front()) > 1e-12) return std::nullopt;
    const double ratio = h / fine.step;
    const auto stride = std::llround(ratio);
    if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-6 * ratio) return std::nullopt;
    if (fine.grid.back() < T - 1e-9 * std::max(1.0, T)) return std::nullopt;
    return static_cast<std::size_t>(stride);
}

template <DelayFunction D>
[[nodiscard]] EulerBoundReport euler_error_bound(const D& d, double h, double T, const HorizonSeries& oracle) {
    const auto stride = nested_stride(oracle, h, T);
    if (!stride) throw Error(Errc::grid_mismatch, "oracle grid does not contain the Euler grid");

    EulerBoundReport r;
    r.h = h;
    r.T = T;
    double sup_phi_dd = 0.0;
    double sup_phi_d = 0.0;
    for (std::size_t n = 0; n < oracle.size() && oracle.grid[n] <= T + 1e-9; ++n) {
        const double s = oracle.grid[n] + oracle.values[n];
        const double phi_d = 1.0 - d.rate(s);
        const double phi_dd = -d.curvature(s);
        r.lipschitz_K = std::max(r.lipschitz_K, std::abs(phi_dd / (phi_d * phi_d)));
        r.max_psi_ddot = std::max(r.max_psi_ddot, std::abs(d.curvature(s) / (phi_d * phi_d * phi_d)));
        sup_phi_dd = std::max(sup_phi_dd, std::abs(phi_dd));
        sup_phi_d = std::max(sup_phi_d, phi_d);
    }
    r.lipschitz_K_pi3 = sup_phi_dd * sup_phi_d * sup_phi_d;
    r.bound = euler_global_bound(r.lipschitz_K, T, h, r.max_psi_ddot);

    const HorizonSeries euler = euler_psi(d, h, T);
    for (std::size_t n = 0; n < euler.size(); ++n) {
        r.measured_max_error = std::max(r.measured_max_error, std::abs(euler.values[n] - oracle.values[n * *stride]));
    }
    return r;
}

/// max |a - b| at the points of the coarser series (which must nest in the finer one).
[[nodiscard]] inline double max_nested_error(const HorizonSeries& coarse, const HorizonSeries& fine) {
    const auto stride = nested_stride(fine, coarse.step, coarse.grid.back());
    if (!stride) throw Error(Errc::grid_mismatch, "series grids do not nest");
    double e = 0.0;
    for (std::size_t n = 0; n < coarse.size(); ++n) {
        e = std::max(e, std::abs(coarse.values[n] - fine.values[n * *stride]));
    }
    return e;
}

struct LipschitzCheck {
    double lhs_max = 0.0;
    double rhs = 0.0;
    double pi2_common = 0.0;
    double sup_delay_gap = 0.0;
    std::size_t points = 0;
    bool holds = false;
};

/// Compares max_y |Psi(D1)(y) - Psi(D2)(y)| against ||D1 - D2||_inf / min(pi2).
/// Grid points below max(phi1(0), phi2(0)) are outside the common range and skipped.
template <DelayFunction D1, DelayFunction D2>
[[nodiscard]] LipschitzCheck lipschitz_check(const D1& d1, const D2& d2, std::span<const double> grid,
                                             double fine_step = default_assumption_step, double tol = 1e-9) {
    const double y_min = std::max(eval_phi(d1, 0.0), eval_phi(d2, 0.0));
    std::vector<double> ys;
    for (double y : grid) {
        if (y >= y_min) ys.push_back(y);
    }
    LipschitzCheck out;
    out.points = ys.size();
    if (ys.empty()) {
        out.holds = true;
        return out;
    }
    const HorizonSeries s1 = oracle_psi(d1, std::span<const double>(ys));
    const HorizonSeries s2 = oracle_psi(d2, std::span<const double>(ys));
    double psi_max = 0.0;
    for (std::size_t n = 0; n < ys.size(); ++n) {
        out.lhs_max = std::max(out.lhs_max, std::abs(s1.values[n] - s2.values[n]));
        psi_max = std::max({psi_max, s1.values[n], s2.values[n]});
    }
    const double t_end = std::max(ys.back() + psi_max, fine_step) + fine_step;
    const auto r1 = check_assumptions(d1, t_end, fine_step);
    const auto r2 = check_assumptions(d2, t_end, fine_step);
    out.pi2_common = std::min(r1.pi2_star, r2.pi2_star);
    const auto n = static_cast<std::int64_t>(std::ceil(t_end / fine_step));
    for (std::int64_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * fine_step;
        out.sup_delay_gap = std::max(out.sup_delay_gap, std::abs(d1.value(t) - d2.value(t)));
    }
    out.rhs = out.sup_delay_gap / out.pi2_common;
    out.holds = out.lhs_max <= out.rhs + tol;
    return out;
}

/// Per-point |phi(t + psi) - t|.
template <DelayFunction D>
[[nodiscard]] std::vector<double> residuals(const D& d, const HorizonSeries& s) {
    std::vector<double> r(s.size());
    for (std::size_t n = 0; n < s.size(); ++n) r[n] = std::abs(fixed_point_residual(d, s.grid[n], s.values[n]));
    return r;
}

/// CSV with header t,psi,residual.
template <DelayFunction D>
void write_horizon_csv(std::ostream& os, const D& d, const HorizonSeries& s) {
    const auto old = os.precision(17);
    os << "t,psi,residual\n";
    for (std::size_t n = 0; n < s.size(); ++n) {
        os << s.grid[n] << ',' << s.values[n] << ','
           << std::abs(fixed_point_residual(d, s.grid[n], s.values[n])) << '\n';
    }
    os.precision(old);
}

}  // namespace hpl
