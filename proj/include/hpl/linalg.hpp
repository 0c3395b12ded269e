#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "hpl/error.hpp"

namespace hpl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double expm_norm_limit = 100.0;

/// e^{M t} by scaling and squaring around a [6/6] Pade approximant. The scaled
/// argument has 1-norm <= 1/2, where the approximant's truncation error is below
/// double rounding.
[[nodiscard]] inline Matrix matrix_exponential(const Matrix& M, double t = 1.0) {
    if (M.rows() != M.cols()) throw Error(Errc::invalid_argument, "matrix_exponential needs a square matrix");
    const Matrix X0 = M * t;
    const double norm = X0.cwiseAbs().colwise().sum().maxCoeff();
    if (X0.size() == 0 || norm == 0.0) return Matrix::Identity(M.rows(), M.cols());
    if (!std::isfinite(norm) || norm > expm_norm_limit) {
        throw Error(Errc::norm_too_large, "||M t||_1 = " + std::to_string(norm) + " exceeds " +
                                              std::to_string(expm_norm_limit));
    }
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix X = X0 / std::ldexp(1.0, squarings);

    // c_k = (2m-k)! m! / ((2m)! k! (m-k)!), m = 6.
    constexpr std::array<double, 7> c{1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0,
                                      1.0 / 665280.0};
    const auto n = M.rows();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix X2 = X * X;
    const Matrix X4 = X2 * X2;
    const Matrix X6 = X4 * X2;
    const Matrix even = c[0] * I + c[2] * X2 + c[4] * X4 + c[6] * X6;
    const Matrix odd = X * (c[1] * I + c[3] * X2 + c[5] * X4);
    Matrix E = (even - odd).partialPivLu().solve(even + odd);
    for (int s = 0; s < squarings; ++s) E = E * E;
    return E;
}

[[nodiscard]] inline double max_real_eigenvalue(const Matrix& M) {
    if (M.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Matrix> es(M, false);
    return es.eigenvalues().real().maxCoeff();
}

[[nodiscard]] inline bool is_hurwitz(const Matrix& M) { return max_real_eigenvalue(M) < 0.0; }

/// Induced 2-norm (largest singular value).
[[nodiscard]] inline double spectral_norm(const Matrix& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(M);
    return svd.singularValues()(0);
}

[[nodiscard]] inline double min_eigenvalue_sym(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

[[nodiscard]] inline double max_eigenvalue_sym(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

}  // namespace hpl
