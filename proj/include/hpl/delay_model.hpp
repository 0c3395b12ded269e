#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "hpl/error.hpp"
#include "hpl/rng.hpp"

namespace hpl {

/// Anything that can serve as a delay D(t): value and first two derivatives.
template <class D>
concept DelayFunction = requires(const D& d, double t) {
    { d.value(t) } -> std::convertible_to<double>;
    { d.rate(t) } -> std::convertible_to<double>;
    { d.curvature(t) } -> std::convertible_to<double>;
};

/// D(t) = a + b/(1+t) + alpha*sin(omega*t + varphi).
/// Defined for t > -1; negative times are used when the plant looks up histories.
struct DelayParams {
    double a = 0.0;
    double b = 0.0;
    double alpha = 0.0;
    double omega = 0.0;
    double varphi = 0.0;

    [[nodiscard]] double value(double t) const noexcept {
        return a + b / (1.0 + t) + alpha * std::sin(omega * t + varphi);
    }
    [[nodiscard]] double rate(double t) const noexcept {
        const double s = 1.0 + t;
        return -b / (s * s) + alpha * omega * std::cos(omega * t + varphi);
    }
    [[nodiscard]] double curvature(double t) const noexcept {
        const double s = 1.0 + t;
        return 2.0 * b / (s * s * s) - alpha * omega * omega * std::sin(omega * t + varphi);
    }

    /// Pointwise upper bound a + b + |alpha| on t >= 0.
    [[nodiscard]] double upper_bound() const noexcept { return a + std::max(b, 0.0) + std::abs(alpha); }

    /// Row order (a, b, alpha, omega, varphi), as stored in the "params" tensor.
    [[nodiscard]] std::array<double, 5> to_array() const noexcept { return {a, b, alpha, omega, varphi}; }
    static DelayParams from_array(const std::array<double, 5>& v) noexcept {
        return {v[0], v[1], v[2], v[3], v[4]};
    }

    friend bool operator==(const DelayParams&, const DelayParams&) = default;
};

/// D(t) = c + m*t. Closed-form test case: psi(t) = (m*t + c)/(1 - m).
struct AffineDelay {
    double c = 0.0;
    double m = 0.0;

    [[nodiscard]] double value(double t) const noexcept { return c + m * t; }
    [[nodiscard]] double rate(double) const noexcept { return m; }
    [[nodiscard]] double curvature(double) const noexcept { return 0.0; }
};

/// Delay given by samples on a uniform grid; value is linearly interpolated and
/// derivatives come from finite differences of the samples. Beyond the table the
/// end segment is extrapolated linearly.
class TabulatedDelay {
public:
    TabulatedDelay(double t0, double step, std::vector<double> values)
        : t0_(t0), step_(step), values_(std::move(values)) {
        if (!(step_ > 0.0) || values_.size() < 3) {
            throw Error(Errc::invalid_argument, "tabulated delay needs step > 0 and at least 3 samples");
        }
    }

    template <DelayFunction D>
    static TabulatedDelay sample(const D& d, double t0, double t1, double step) {
        const auto n = static_cast<std::size_t>(std::llround((t1 - t0) / step)) + 1;
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = d.value(t0 + static_cast<double>(i) * step);
        return TabulatedDelay(t0, step, std::move(v));
    }

    [[nodiscard]] double value(double t) const noexcept {
        auto [i, w] = locate(t);
        return (1.0 - w) * values_[i] + w * values_[i + 1];
    }
    [[nodiscard]] double rate(double t) const noexcept {
        auto [i, w] = locate(t);
        return (1.0 - w) * node_rate(i) + w * node_rate(i + 1);
    }
    [[nodiscard]] double curvature(double t) const noexcept {
        auto [i, w] = locate(t);
        return (1.0 - w) * node_curvature(i) + w * node_curvature(i + 1);
    }

    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double step() const noexcept { return step_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

private:
    struct Slot {
        std::size_t index;
        double weight;
    };

    [[nodiscard]] Slot locate(double t) const noexcept {
        const double x = (t - t0_) / step_;
        const auto last = static_cast<double>(values_.size() - 2);
        const double base = std::clamp(std::floor(x), 0.0, last);
        return {static_cast<std::size_t>(base), x - base};
    }
    [[nodiscard]] double node_rate(std::size_t i) const noexcept {
        const std::size_t n = values_.size();
        if (i == 0) return (values_[1] - values_[0]) / step_;
        if (i == n - 1) return (values_[n - 1] - values_[n - 2]) / step_;
        return (values_[i + 1] - values_[i - 1]) / (2.0 * step_);
    }
    [[nodiscard]] double node_curvature(std::size_t i) const noexcept {
        const std::size_t n = values_.size();
        const std::size_t c = std::clamp<std::size_t>(i, 1, n - 2);
        return (values_[c + 1] - 2.0 * values_[c] + values_[c - 1]) / (step_ * step_);
    }

    double t0_;
    double step_;
    std::vector<double> values_;
};

/// D(t).
template <DelayFunction D>
[[nodiscard]] double eval_delay(const D& d, double t) noexcept {
    return d.value(t);
}

/// Delay time phi(t) = t - D(t).
template <DelayFunction D>
[[nodiscard]] double eval_phi(const D& d, double t) noexcept {
    return t - d.value(t);
}

/// phi'(t) = 1 - D'(t).
template <DelayFunction D>
[[nodiscard]] double eval_phi_rate(const D& d, double t) noexcept {
    return 1.0 - d.rate(t);
}

/// Grid extrema of D and phi' over [t_begin, t_end].
///   pi0 = min D, pi1 = 1/max D, pi2 = min phi', pi3 = 1/max phi'.
/// valid iff min D > 0 and min phi' > 0; otherwise first_violation_time holds the
/// earliest grid point where either fails.
struct AssumptionReport {
    double pi0_star = 0.0;
    double pi1_star = 0.0;
    double pi2_star = 0.0;
    double pi3_star = 0.0;
    bool valid = false;
    std::optional<double> first_violation_time;
    double t_begin = 0.0;
    double t_end = 0.0;
    double grid_step = 0.0;

    /// Upper bound on the delay (and therefore on psi): 1/pi1.
    [[nodiscard]] double max_delay() const noexcept { return 1.0 / pi1_star; }
};

inline constexpr double default_assumption_step = 1e-3;

template <DelayFunction D>
[[nodiscard]] AssumptionReport check_assumptions(const D& d, double t_end,
                                                 double grid_step = default_assumption_step,
                                                 double t_begin = 0.0) {
    if (!(t_end > t_begin) || !(grid_step > 0.0)) {
        throw Error(Errc::invalid_argument, "check_assumptions needs T > 0 and grid_step > 0");
    }
    const auto n = static_cast<std::int64_t>(std::ceil((t_end - t_begin) / grid_step - 1e-9));
    double d_min = std::numeric_limits<double>::infinity();
    double d_max = -d_min;
    double s_min = d_min;
    double s_max = -d_min;
    std::optional<double> violation;
    for (std::int64_t k = 0; k <= n; ++k) {
        const double t = std::min(t_begin + static_cast<double>(k) * grid_step, t_end);
        const double dv = d.value(t);
        const double slope = 1.0 - d.rate(t);
        d_min = std::min(d_min, dv);
        d_max = std::max(d_max, dv);
        s_min = std::min(s_min, slope);
        s_max = std::max(s_max, slope);
        if (!violation && !(dv > 0.0 && slope > 0.0)) violation = t;
    }
    AssumptionReport r;
    r.pi0_star = d_min;
    r.pi1_star = 1.0 / d_max;
    r.pi2_star = s_min;
    r.pi3_star = 1.0 / s_max;
    r.valid = !violation.has_value();
    r.first_violation_time = violation;
    r.t_begin = t_begin;
    r.t_end = t_end;
    r.grid_step = grid_step;
    return r;
}

/// Constants valid for both delays at once (the sup over i in the assumptions).
[[nodiscard]] inline AssumptionReport merge(const AssumptionReport& x, const AssumptionReport& y) {
    AssumptionReport r;
    r.pi0_star = std::min(x.pi0_star, y.pi0_star);
    r.pi1_star = std::min(x.pi1_star, y.pi1_star);
    r.pi2_star = std::min(x.pi2_star, y.pi2_star);
    r.pi3_star = std::min(x.pi3_star, y.pi3_star);
    r.valid = x.valid && y.valid;
    if (x.first_violation_time && y.first_violation_time) {
        r.first_violation_time = std::min(*x.first_violation_time, *y.first_violation_time);
    } else {
        r.first_violation_time = x.first_violation_time ? x.first_violation_time : y.first_violation_time;
    }
    r.t_begin = std::max(x.t_begin, y.t_begin);
    r.t_end = std::min(x.t_end, y.t_end);
    r.grid_step = std::max(x.grid_step, y.grid_step);
    return r;
}

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Uniform sampling box for the five delay parameters.
struct SamplingRanges {
    Range a{0.2, 3.0};
    Range b{0.0, 10.0};
    Range alpha{-0.3, 0.3};
    Range omega{0.2, 3.0};
    Range varphi{0.0, 2.0 * std::numbers::pi};

    static SamplingRanges point(const DelayParams& p) noexcept {
        return {{p.a, p.a}, {p.b, p.b}, {p.alpha, p.alpha}, {p.omega, p.omega}, {p.varphi, p.varphi}};
    }
};

struct SampleOptions {
    double horizon = 12.0;
    double grid_step = default_assumption_step;
    std::uint64_t max_attempts = 10000;
};

struct DelaySample {
    DelayParams params;
    std::uint64_t rejections = 0;
};

/// Rejection-samples a delay that satisfies the assumptions on
/// [0, H + a + b + |alpha|], i.e. on [0, H] extended far enough that psi is
/// defined up to t = H. Draw order per attempt: a, b, alpha, omega, varphi.
[[nodiscard]] inline DelaySample sample_delay(std::uint64_t seed, const SamplingRanges& ranges = {},
                                              const SampleOptions& opts = {}) {
    SplitMix64 rng(seed);
    for (std::uint64_t attempt = 0; attempt < opts.max_attempts; ++attempt) {
        DelayParams p;
        p.a = rng.uniform(ranges.a.lo, ranges.a.hi);
        p.b = rng.uniform(ranges.b.lo, ranges.b.hi);
        p.alpha = rng.uniform(ranges.alpha.lo, ranges.alpha.hi);
        p.omega = rng.uniform(ranges.omega.lo, ranges.omega.hi);
        p.varphi = rng.uniform(ranges.varphi.lo, ranges.varphi.hi);
        const double t_end = opts.horizon + p.upper_bound();
        if (check_assumptions(p, t_end, opts.grid_step).valid) return {p, attempt};
    }
    throw Error(Errc::rejection_limit_exceeded,
                "no admissible delay after " + std::to_string(opts.max_attempts) + " attempts");
}

}  // namespace hpl
