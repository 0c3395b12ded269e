#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/linalg.hpp"
#include "hpl/plant.hpp"
#include "hpl/rng.hpp"

namespace hpl {

/// Solves P M + M' P = -Q through the Kronecker form (I (x) M' + M' (x) I) vec P = -vec Q.
[[nodiscard]] inline Matrix solve_lyapunov(const Matrix& M, const Matrix& Q, double residual_tol = 1e-8) {
    const auto n = M.rows();
    if (M.cols() != n || Q.rows() != n || Q.cols() != n) throw Error(Errc::invalid_argument, "lyapunov: shape mismatch");
    if (!is_hurwitz(M)) throw Error(Errc::not_hurwitz, "lyapunov: matrix is not Hurwitz");
    const Matrix I = Matrix::Identity(n, n);
    const Matrix Mt = M.transpose();
    Matrix kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            kron.block(i * n, j * n, n, n) = I(i, j) * Mt + Mt(i, j) * I;
        }
    }
    const Eigen::FullPivLU<Matrix> lu(kron);
    if (!lu.isInvertible()) throw Error(Errc::not_hurwitz, "lyapunov: singular Kronecker system");
    const Vector rhs = -Eigen::Map<const Vector>(Q.data(), n * n);
    const Vector x = lu.solve(rhs);
    Matrix P = Eigen::Map<const Matrix>(x.data(), n, n);
    P = 0.5 * (P + P.transpose()).eval();
    const double res = (P * M + Mt * P + Q).norm();
    if (!(res <= residual_tol * std::max(1.0, Q.norm()))) {
        throw Error(Errc::not_hurwitz, "lyapunov: residual " + std::to_string(res) + " too large");
    }
    if (!(min_eigenvalue_sym(P) > 0.0)) throw Error(Errc::not_hurwitz, "lyapunov: solution is not positive definite");
    return P;
}

/// Every constant of the robustness argument for a plant and a set of delay bounds.
struct MarginReport {
    Matrix P, S, Q, R;
    double residual_P = 0.0;
    double residual_S = 0.0;

    double pi0 = 0.0, pi1 = 0.0, pi2 = 0.0, pi3 = 0.0;
    double norm_A = 0.0, norm_B = 0.0, norm_K = 0.0, norm_ABK = 0.0, norm_PB = 0.0;
    double lambda_Q = 0.0, lambda_R = 0.0;

    double b = 0.0;
    double beta_star = 0.0;
    double Omega1 = 0.0;
    double Omega2 = 0.0;
    double alpha_bar1 = 0.0, alpha_bar2 = 0.0;
    double beta_bar1 = 0.0, beta_bar2 = 0.0;
    double mu_min = 0.0;
    double mu = 0.0;
    /// Weight of the transport functional in V.
    double transport_weight = 0.0;
    double eps_star = 0.0;
    bool feasible = true;
    /// Name of the first failing inequality when not feasible.
    std::string violation;

    [[nodiscard]] double delta1(double eps) const { return Omega1 * std::expm1(norm_A * eps); }

    [[nodiscard]] double perturbation(double eps) const { return Omega1 * eps + delta1(eps) / pi1; }

    [[nodiscard]] double c1(double eps) const {
        const double d = delta1(eps);
        const double g = perturbation(eps);
        return 0.5 * lambda_Q - Omega2 * (d * d + 3.0 * beta_bar2 * norm_B * norm_B * g * g);
    }
    [[nodiscard]] double c2(double eps) const {
        const double g = perturbation(eps);
        return 4.0 * norm_PB * norm_PB * beta_star / lambda_Q - 2.0 * Omega2 * beta_bar1 * norm_B * norm_B * g * g;
    }
    [[nodiscard]] double c3(double eps) const {
        const double s = Omega1 + delta1(eps);
        return mu * pi2 * lambda_R - Omega2 * s * s * std::exp(2.0 * norm_A / pi1);
    }
    /// Decay rate of V: min over the ratios of each dissipation term to its
    /// quadratic-form weight in V.
    [[nodiscard]] double c4(double eps) const {
        return std::min({c1(eps) / max_eigenvalue_sym(P), c2(eps) / transport_weight,
                         c3(eps) / (mu * max_eigenvalue_sym(S))});
    }

    /// Both sides of the smallness condition on eps.
    [[nodiscard]] double smallness_lhs(double eps) const {
        const double e = std::expm1(norm_A * eps);
        const double x = eps + e / pi1;
        return std::max(Omega2 * Omega1 * Omega1 * e * e, Omega1 * Omega1 * x * x);
    }
    [[nodiscard]] double smallness_rhs() const {
        const double bb = norm_B * norm_B;
        return std::min({lambda_Q / (12.0 * Omega2 * beta_bar2 * bb),
                         2.0 * norm_PB * norm_PB * beta_star / (Omega2 * beta_bar1 * bb * lambda_Q), 0.25 * lambda_Q});
    }
};

/// Evaluates all margin constants. `bounds` supplies the delay constants; when both
/// delays matter pass merge(report1, report2).
[[nodiscard]] inline MarginReport compute_margins(const PlantSpec& spec, const AssumptionReport& bounds,
                                                  const Matrix& Q = Matrix(), const Matrix& R = Matrix()) {
    spec.check_hurwitz();
    if (!bounds.valid) throw Error(Errc::invalid_argument, "margins need a valid assumption report");
    const auto n = spec.n();
    MarginReport r;
    r.Q = Q.size() == 0 ? Matrix::Identity(n, n) : Q;
    r.R = R.size() == 0 ? Matrix::Identity(n, n) : R;
    const Matrix Acl = spec.closed_loop();
    const Matrix Aob = spec.observer_matrix();
    r.P = solve_lyapunov(Acl, r.Q);
    r.S = solve_lyapunov(Aob, r.R);
    r.residual_P = (r.P * Acl + Acl.transpose() * r.P + r.Q).norm();
    r.residual_S = (r.S * Aob + Aob.transpose() * r.S + r.R).norm();

    r.pi0 = bounds.pi0_star;
    r.pi1 = bounds.pi1_star;
    r.pi2 = bounds.pi2_star;
    r.pi3 = bounds.pi3_star;
    r.norm_A = spectral_norm(spec.A);
    r.norm_B = spectral_norm(spec.B);
    r.norm_K = spectral_norm(spec.K);
    r.norm_ABK = spectral_norm(Acl);
    r.norm_PB = spectral_norm(r.P * spec.B);
    r.lambda_Q = min_eigenvalue_sym(r.Q);
    r.lambda_R = min_eigenvalue_sym(r.R);
    if (!(r.norm_A > 0.0) || !(r.norm_ABK > 0.0)) {
        throw Error(Errc::invalid_argument, "margins need nonzero A and A+BK");
    }

    r.b = (1.0 - r.pi3) * std::max(1.0, 1.0 / r.pi3) + 1e-6;
    r.beta_star = std::min(r.b - 1.0 + r.pi3, (r.b + 1.0) * r.pi3 - 1.0);
    r.Omega1 = r.norm_K * std::exp(r.norm_A / r.pi1);

    const double kk = r.norm_K * r.norm_K;
    const double bb = r.norm_B * r.norm_B;
    const double ea = std::expm1(2.0 * r.norm_A / r.pi1);
    const double ec = std::expm1(2.0 * r.norm_ABK / r.pi1);
    r.alpha_bar1 = 3.0 * (1.0 + kk * bb / (2.0 * r.pi1 * r.norm_A) * ea);
    r.alpha_bar2 = 3.0 * kk * r.pi1 / (2.0 * r.norm_A) * ea;
    r.beta_bar1 = 3.0 * (1.0 + kk * bb / (2.0 * r.pi1 * r.norm_ABK) * ec);
    r.beta_bar2 = 3.0 * kk * r.pi1 / (2.0 * r.norm_ABK) * ec;

    r.Omega2 = 6.0 * r.norm_PB * r.norm_PB * std::exp(r.b) / (r.pi0 * r.pi1 * r.pi2 * r.lambda_Q);
    r.mu_min = (2.0 * r.Omega2 * r.Omega1 * r.Omega1 + 0.5 * r.lambda_Q) * std::exp(2.0 * r.norm_A / r.pi1) /
               (r.pi2 * r.lambda_R);
    r.mu = r.mu_min * (1.0 + 1e-6);
    r.transport_weight = 4.0 * r.norm_PB * r.norm_PB / (r.pi1 * r.lambda_Q);

    if (!(r.beta_star > 0.0)) {
        r.feasible = false;
        r.violation = "beta_star > 0";
    } else if (!(r.c1(0.0) > 0.0)) {
        r.feasible = false;
        r.violation = "c1(0) > 0";
    } else if (!(r.c2(0.0) > 0.0)) {
        r.feasible = false;
        r.violation = "c2(0) > 0";
    } else if (!(r.c3(0.0) > 0.0)) {
        r.feasible = false;
        r.violation = "c3(0) > 0";
    }

    const double rhs = r.smallness_rhs();
    if (!(r.smallness_lhs(0.0) <= rhs)) {
        r.feasible = false;
        if (r.violation.empty()) r.violation = "smallness condition at eps = 0";
    } else if (r.smallness_lhs(1.0) <= rhs) {
        r.eps_star = 1.0;
    } else {
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            (r.smallness_lhs(mid) <= rhs ? lo : hi) = mid;
        }
        r.eps_star = lo;
    }
    return r;
}

struct NormEquivalence {
    double u_norm_sq = 0.0;
    double z_norm_sq = 0.0;
    double w_norm_sq = 0.0;
    double u_rebuilt_norm_sq = 0.0;
    /// max |u - inverse(forward(u))| on the grid.
    double inverse_error = 0.0;
    double forward_bound = 0.0;
    double inverse_bound = 0.0;
    bool holds = false;
};

namespace detail {

/// out(x) = g(x) + sign * K [e^{F x psi} Z + psi int_0^x e^{F (x - y) psi} B g(y) dy],
/// trapezoid on the uniform grid of `g`.
inline Matrix transport_transform(const Matrix& F, const Matrix& B, const Matrix& K, double psi, const Vector& Z,
                                  const Matrix& g, double sign) {
    const auto pts = g.cols();
    const double dx = 1.0 / static_cast<double>(pts - 1);
    const auto n = F.rows();
    std::vector<Matrix> kernel(static_cast<std::size_t>(pts));
    std::vector<Matrix> kernel_b(static_cast<std::size_t>(pts));
    const Matrix step = matrix_exponential(F, dx * psi);
    Matrix power = Matrix::Identity(n, n);
    for (std::size_t j = 0; j < kernel.size(); ++j) {
        kernel[j] = power;
        kernel_b[j] = power * B;
        power = (power * step).eval();
    }
    Matrix out = g;
    for (Eigen::Index i = 0; i < pts; ++i) {
        Vector acc = kernel[static_cast<std::size_t>(i)] * Z;
        for (Eigen::Index j = 0; i > 0 && j <= i; ++j) {
            const double w = (j == 0 || j == i) ? 0.5 : 1.0;
            acc += w * dx * psi * kernel_b[static_cast<std::size_t>(i - j)] * g.col(j);
        }
        out.col(i) += sign * K * acc;
    }
    return out;
}

inline double l2_sq(const Matrix& f) {
    const auto pts = f.cols();
    const double dx = 1.0 / static_cast<double>(pts - 1);
    double s = 0.0;
    for (Eigen::Index i = 0; i < pts; ++i) s += ((i == 0 || i == pts - 1) ? 0.5 : 1.0) * f.col(i).squaredNorm();
    return s * dx;
}

}  // namespace detail

/// Backstepping transform check at a frozen horizon psi. `u` is m x points on a uniform
/// grid of [0, 1]. Checks |w|^2 <= a1 |u|^2 + a2 |Z|^2 and the reverse bound with the
/// target-system kernel (A + BK).
[[nodiscard]] inline NormEquivalence norm_equivalence_check(const PlantSpec& spec, const MarginReport& m, double psi,
                                                            const Matrix& u, const Vector& Z, double tol = 1e-9) {
    if (u.rows() != spec.m() || u.cols() < 2 || Z.size() != spec.n()) {
        throw Error(Errc::invalid_argument, "norm equivalence: shape mismatch");
    }
    NormEquivalence r;
    const Matrix w = detail::transport_transform(spec.A, spec.B, spec.K, psi, Z, u, -1.0);
    const Matrix u_back = detail::transport_transform(spec.closed_loop(), spec.B, spec.K, psi, Z, w, 1.0);
    r.u_norm_sq = detail::l2_sq(u);
    r.z_norm_sq = Z.squaredNorm();
    r.w_norm_sq = detail::l2_sq(w);
    r.u_rebuilt_norm_sq = detail::l2_sq(u_back);
    r.inverse_error = (u_back - u).cwiseAbs().maxCoeff();
    r.forward_bound = m.alpha_bar1 * r.u_norm_sq + m.alpha_bar2 * r.z_norm_sq;
    r.inverse_bound = m.beta_bar1 * r.w_norm_sq + m.beta_bar2 * r.z_norm_sq;
    r.holds = r.w_norm_sq <= r.forward_bound * (1.0 + tol) + tol &&
              r.u_rebuilt_norm_sq <= r.inverse_bound * (1.0 + tol) + tol;
    return r;
}

/// Random smooth input on [0, 1]: a few Fourier modes with uniform coefficients.
[[nodiscard]] inline Matrix random_transport_state(SplitMix64& rng, Eigen::Index m, Eigen::Index points,
                                                   int modes = 6, double scale = 5.0) {
    Matrix u = Matrix::Zero(m, points);
    for (Eigen::Index r = 0; r < m; ++r) {
        for (int k = 0; k < modes; ++k) {
            const double a = rng.uniform(-scale, scale) / (1.0 + k);
            const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (Eigen::Index i = 0; i < points; ++i) {
                const double x = static_cast<double>(i) / static_cast<double>(points - 1);
                u(r, i) += a * std::cos(std::numbers::pi * k * x + ph);
            }
        }
    }
    return u;
}

inline void write_margin_report(std::ostream& os, const MarginReport& r) {
    const auto old = os.precision(10);
    os << "pi0_star " << r.pi0 << "\npi1_star " << r.pi1 << "\npi2_star " << r.pi2 << "\npi3_star " << r.pi3 << '\n';
    os << "norm_A " << r.norm_A << "\nnorm_B " << r.norm_B << "\nnorm_K " << r.norm_K << "\nnorm_A_plus_BK "
       << r.norm_ABK << "\nnorm_PB " << r.norm_PB << '\n';
    os << "lambda_min_Q " << r.lambda_Q << "\nlambda_min_R " << r.lambda_R << '\n';
    os << "residual_P " << r.residual_P << "\nresidual_S " << r.residual_S << '\n';
    os << "P\n" << r.P << "\nS\n" << r.S << '\n';
    os << "b " << r.b << "\nbeta_star " << r.beta_star << "\nOmega1 " << r.Omega1 << "\nOmega2 " << r.Omega2 << '\n';
    os << "alpha_bar1 " << r.alpha_bar1 << "\nalpha_bar2 " << r.alpha_bar2 << "\nbeta_bar1 " << r.beta_bar1
       << "\nbeta_bar2 " << r.beta_bar2 << '\n';
    os << "mu_min " << r.mu_min << "\nmu " << r.mu << "\ntransport_weight " << r.transport_weight << '\n';
    os << "smallness_rhs " << r.smallness_rhs() << "\neps_star " << r.eps_star << '\n';
    os << "c1(0) " << r.c1(0.0) << "\nc2(0) " << r.c2(0.0) << "\nc3(0) " << r.c3(0.0) << "\nc4(0) " << r.c4(0.0)
       << '\n';
    os << "feasible " << (r.feasible ? "yes" : "no") << '\n';
    if (!r.feasible) os << "violated " << r.violation << '\n';
    os.precision(old);
}

/// CSV eps,c1,c2,c3,c4 on `points` evenly spaced values of eps in [0, eps_max].
inline void write_margin_csv(std::ostream& os, const MarginReport& r, double eps_max, int points = 21) {
    os << "eps,c1,c2,c3,c4\n";
    const auto old = os.precision(17);
    for (int i = 0; i < points; ++i) {
        const double e = points == 1 ? 0.0 : eps_max * i / (points - 1);
        os << e << ',' << r.c1(e) << ',' << r.c2(e) << ',' << r.c3(e) << ',' << r.c4(e) << '\n';
    }
    os.precision(old);
}

}  // namespace hpl
