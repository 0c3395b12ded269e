#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/horizon.hpp"
#include "hpl/tensor_container.hpp"

namespace hpl {

/// One hidden block: v -> gelu(W v + b + K v), K the truncated spectral convolution.
/// spectral_re/im[k] is the (in, out) complex mixing matrix of frequency k.
struct SpectralLayer {
    std::vector<Eigen::MatrixXd> spectral_re;
    std::vector<Eigen::MatrixXd> spectral_im;
    Eigen::MatrixXd pointwise_w;  // (out, in)
    Eigen::VectorXd pointwise_b;
};

/// Weights of a 1-D spectral neural operator on a fixed uniform grid of
/// `resolution` points over [0, H]. Input channels are (normalized D, x in [0,1]).
///
/// Container layout (all names exact):
///   lift.weight (channels, 2)        lift.bias (channels)
///   spectral.<l>.c (channels, channels, modes, 2)   indexed [in][out][mode][re/im]
///   pointwise.<l>.weight (channels, channels)       pointwise.<l>.bias (channels)
///   project.0.weight (hidden, channels)  project.0.bias (hidden)
///   project.1.weight (1, hidden)         project.1.bias (1)
///   in_mean, in_std, out_mean, out_std   shape (1) or (resolution)
struct OperatorWeights {
    std::size_t resolution = 0;
    std::size_t modes = 0;
    std::size_t channels = 0;
    std::size_t layers = 0;
    std::size_t in_channels = 2;
    double H = 12.0;
    double dt = 1e-3;

    Eigen::MatrixXd lift_w;
    Eigen::VectorXd lift_b;
    std::vector<SpectralLayer> blocks;
    Eigen::MatrixXd project0_w;
    Eigen::VectorXd project0_b;
    Eigen::MatrixXd project1_w;
    Eigen::VectorXd project1_b;
    Eigen::VectorXd in_mean, in_std, out_mean, out_std;

    /// Half-spectrum tables cos/sin(2 pi j k / n), j < n, k < modes.
    Eigen::MatrixXd cos_table;
    Eigen::MatrixXd sin_table;
    /// Inverse-transform weights: 1/n for DC and Nyquist, 2/n otherwise.
    Eigen::VectorXd inverse_scale;

    /// Builds the transform tables. Called by load; call again after editing shapes.
    void prepare() {
        const auto n = static_cast<Eigen::Index>(resolution);
        const auto m = static_cast<Eigen::Index>(modes);
        cos_table.resize(n, m);
        sin_table.resize(n, m);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = 0; k < m; ++k) {
                // Reduce j*k mod n first so the angle stays exact for large grids.
                const auto r = static_cast<double>((j * k) % n);
                const double a = 2.0 * std::numbers::pi * r / static_cast<double>(n);
                cos_table(j, k) = std::cos(a);
                sin_table(j, k) = std::sin(a);
            }
        }
        inverse_scale.resize(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const bool self_conjugate = k == 0 || (n % 2 == 0 && k == n / 2);
            inverse_scale(k) = (self_conjugate ? 1.0 : 2.0) / static_cast<double>(n);
        }
    }

    /// Grid time of sample j: j * H / (resolution - 1).
    [[nodiscard]] std::vector<double> grid() const {
        std::vector<double> g(resolution);
        for (std::size_t j = 0; j < resolution; ++j) {
            g[j] = H * static_cast<double>(j) / static_cast<double>(resolution - 1);
        }
        return g;
    }
};

[[nodiscard]] inline double gelu(double x) noexcept {
    return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
}

/// Broadcasts a (1) or (n) statistics vector over n grid points.
[[nodiscard]] inline double stat_at(const Eigen::VectorXd& v, Eigen::Index j) noexcept {
    return v.size() == 1 ? v(0) : v(j);
}

[[nodiscard]] inline Eigen::VectorXd normalize(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                               const Eigen::VectorXd& std) {
    Eigen::VectorXd y(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) y(j) = (x(j) - stat_at(mean, j)) / stat_at(std, j);
    return y;
}

[[nodiscard]] inline Eigen::VectorXd denormalize(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                                                 const Eigen::VectorXd& std) {
    Eigen::VectorXd x(y.size());
    for (Eigen::Index j = 0; j < y.size(); ++j) x(j) = y(j) * stat_at(std, j) + stat_at(mean, j);
    return x;
}

/// Truncated spectral convolution of a (channels, n) field: forward real DFT of
/// the lowest `modes` bins, per-mode channel mixing, inverse real DFT with all
/// higher bins zero. Imaginary parts of the DC/Nyquist bins are discarded on the
/// way back, as an inverse real FFT does.
[[nodiscard]] inline Eigen::MatrixXd spectral_convolution(const OperatorWeights& w, const SpectralLayer& layer,
                                                          const Eigen::MatrixXd& v) {
    const Eigen::MatrixXd x_re = v * w.cos_table;    // (in, modes)
    const Eigen::MatrixXd x_im = -(v * w.sin_table); // e^{-i theta}
    const auto out = layer.spectral_re.front().cols();
    Eigen::MatrixXd y_re(out, x_re.cols());
    Eigen::MatrixXd y_im(out, x_re.cols());
    for (Eigen::Index k = 0; k < x_re.cols(); ++k) {
        const auto& wr = layer.spectral_re[static_cast<std::size_t>(k)];
        const auto& wi = layer.spectral_im[static_cast<std::size_t>(k)];
        y_re.col(k) = wr.transpose() * x_re.col(k) - wi.transpose() * x_im.col(k);
        y_im.col(k) = wr.transpose() * x_im.col(k) + wi.transpose() * x_re.col(k);
    }
    const Eigen::MatrixXd scaled_re = y_re * w.inverse_scale.asDiagonal();
    const Eigen::MatrixXd scaled_im = y_im * w.inverse_scale.asDiagonal();
    return scaled_re * w.cos_table.transpose() - scaled_im * w.sin_table.transpose();
}

struct ForwardOptions {
    bool spectral_path = true;
    bool pointwise_path = true;
};

/// D samples on the operator grid -> psi samples on the same grid.
[[nodiscard]] inline std::vector<double> fno_forward(const OperatorWeights& w, std::span<const double> d_values,
                                                     const ForwardOptions& opts = {}) {
    if (d_values.size() != w.resolution) {
        throw Error(Errc::length_mismatch, "expected " + std::to_string(w.resolution) + " delay samples, got " +
                                               std::to_string(d_values.size()));
    }
    const auto n = static_cast<Eigen::Index>(w.resolution);
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(d_values.data(), n);

    Eigen::MatrixXd input(2, n);
    input.row(0) = normalize(d, w.in_mean, w.in_std).transpose();
    for (Eigen::Index j = 0; j < n; ++j) input(1, j) = static_cast<double>(j) / static_cast<double>(n - 1);

    Eigen::MatrixXd v = (w.lift_w * input).colwise() + w.lift_b;
    for (const auto& layer : w.blocks) {
        Eigen::MatrixXd z = Eigen::MatrixXd::Zero(v.rows(), n);
        if (opts.pointwise_path) z = (layer.pointwise_w * v).colwise() + layer.pointwise_b;
        if (opts.spectral_path) z += spectral_convolution(w, layer, v);
        v = z.unaryExpr([](double x) { return gelu(x); });
    }
    const Eigen::MatrixXd hidden =
        ((w.project0_w * v).colwise() + w.project0_b).unaryExpr([](double x) { return gelu(x); });
    const Eigen::VectorXd out = ((w.project1_w * hidden).colwise() + w.project1_b).row(0).transpose();
    const Eigen::VectorXd psi = denormalize(out, w.out_mean, w.out_std);
    return {psi.data(), psi.data() + psi.size()};
}

/// Evaluates D on the operator grid and runs one forward pass.
template <DelayFunction D>
[[nodiscard]] HorizonSeries neural_psi(const OperatorWeights& w, const D& delay) {
    HorizonSeries s;
    s.method = HorizonMethod::neural;
    s.grid = w.grid();
    s.step = w.H / static_cast<double>(w.resolution - 1);
    std::vector<double> dv(s.grid.size());
    for (std::size_t j = 0; j < dv.size(); ++j) dv[j] = delay.value(s.grid[j]);
    s.values = fno_forward(w, dv);
    return s;
}

struct ConsistencyReport {
    std::vector<double> grid;
    std::vector<double> residuals;
    double max_residual = 0.0;
    double mean_residual = 0.0;
};

/// |phi(psi_hat(t) + t) - t| at every grid point; no root finding involved.
template <DelayFunction D>
[[nodiscard]] ConsistencyReport consistency_error(const D& d, const HorizonSeries& s) {
    ConsistencyReport r;
    r.grid = s.grid;
    r.residuals = residuals(d, s);
    double sum = 0.0;
    for (double x : r.residuals) {
        r.max_residual = std::max(r.max_residual, x);
        sum += x;
    }
    r.mean_residual = r.residuals.empty() ? 0.0 : sum / static_cast<double>(r.residuals.size());
    return r;
}

namespace detail {

inline std::size_t meta_size(const nlohmann::json& meta, const char* key) {
    if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<std::int64_t>() <= 0) {
        throw Error(Errc::shape_mismatch, std::string("metadata field '") + key + "' missing or not a positive integer");
    }
    return meta[key].get<std::size_t>();
}

inline const Tensor& expect(const TensorContainer& c, const std::string& name, std::vector<std::uint64_t> dims) {
    const Tensor& t = c.at(name);
    if (t.dims != dims) {
        std::string want, got;
        for (auto d : dims) want += std::to_string(d) + ",";
        for (auto d : t.dims) got += std::to_string(d) + ",";
        throw Error(Errc::shape_mismatch, "tensor '" + name + "' has shape (" + got + ") expected (" + want + ")");
    }
    for (double v : t.data) {
        if (!std::isfinite(v)) throw Error(Errc::non_finite_weight, "tensor '" + name + "' contains NaN/Inf");
    }
    return t;
}

inline Eigen::MatrixXd as_matrix(const Tensor& t) {
    const auto rows = static_cast<Eigen::Index>(t.dims[0]);
    const auto cols = static_cast<Eigen::Index>(t.dims.size() > 1 ? t.dims[1] : 1);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(), rows,
                                                                                                    cols);
}

inline Eigen::VectorXd as_vector(const Tensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

inline Eigen::VectorXd expect_stat(const TensorContainer& c, const std::string& name, std::size_t n, bool positive) {
    const Tensor& t = c.at(name);
    if (t.dims.size() != 1 || (t.dims[0] != 1 && t.dims[0] != n)) {
        throw Error(Errc::shape_mismatch, "tensor '" + name + "' must have shape (1) or (" + std::to_string(n) + ")");
    }
    for (double v : t.data) {
        if (!std::isfinite(v)) throw Error(Errc::non_finite_weight, "tensor '" + name + "' contains NaN/Inf");
        if (positive && !(v > 0.0)) {
            throw Error(Errc::invalid_normalization, "tensor '" + name + "' must be strictly positive");
        }
    }
    return as_vector(t);
}

inline Tensor from_matrix(std::string name, const Eigen::MatrixXd& m, DType dtype) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
    return make_tensor(std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                       std::move(data), dtype);
}

inline Tensor from_vector(std::string name, const Eigen::VectorXd& v, DType dtype) {
    return make_tensor(std::move(name), {static_cast<std::uint64_t>(v.size())},
                       std::vector<double>(v.data(), v.data() + v.size()), dtype);
}

}  // namespace detail

/// Validates a container against its declared architecture and unpacks it.
[[nodiscard]] inline OperatorWeights weights_from_container(const TensorContainer& c) {
    const auto& meta = c.metadata;
    OperatorWeights w;
    w.resolution = detail::meta_size(meta, "resolution");
    w.modes = detail::meta_size(meta, "modes");
    w.channels = detail::meta_size(meta, "channels");
    w.layers = detail::meta_size(meta, "layers");
    if (meta.contains("in_channels")) w.in_channels = detail::meta_size(meta, "in_channels");
    if (w.in_channels != 2) throw Error(Errc::shape_mismatch, "in_channels must be 2 (delay, coordinate)");
    if (meta.contains("H")) w.H = meta["H"].get<double>();
    if (meta.contains("dt")) w.dt = meta["dt"].get<double>();
    if (w.resolution < 2) throw Error(Errc::shape_mismatch, "resolution must be at least 2");
    if (w.modes > w.resolution / 2 + 1) {
        throw Error(Errc::shape_mismatch, "modes=" + std::to_string(w.modes) + " exceeds resolution/2+1=" +
                                              std::to_string(w.resolution / 2 + 1));
    }
    const std::uint64_t C = w.channels;
    const std::uint64_t M = w.modes;

    w.lift_w = detail::as_matrix(detail::expect(c, "lift.weight", {C, w.in_channels}));
    w.lift_b = detail::as_vector(detail::expect(c, "lift.bias", {C}));
    for (std::size_t l = 0; l < w.layers; ++l) {
        const std::string p = std::to_string(l);
        const Tensor& sp = detail::expect(c, "spectral." + p + ".c", {C, C, M, 2});
        SpectralLayer layer;
        layer.spectral_re.assign(M, Eigen::MatrixXd(C, C));
        layer.spectral_im.assign(M, Eigen::MatrixXd(C, C));
        for (std::uint64_t i = 0; i < C; ++i) {
            for (std::uint64_t o = 0; o < C; ++o) {
                for (std::uint64_t k = 0; k < M; ++k) {
                    const std::size_t base = static_cast<std::size_t>(((i * C + o) * M + k) * 2);
                    layer.spectral_re[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) = sp.data[base];
                    layer.spectral_im[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) = sp.data[base + 1];
                }
            }
        }
        layer.pointwise_w = detail::as_matrix(detail::expect(c, "pointwise." + p + ".weight", {C, C}));
        layer.pointwise_b = detail::as_vector(detail::expect(c, "pointwise." + p + ".bias", {C}));
        w.blocks.push_back(std::move(layer));
    }
    const Tensor& p0 = c.at("project.0.weight");
    if (p0.dims.size() != 2) throw Error(Errc::shape_mismatch, "tensor 'project.0.weight' must be 2-D");
    const std::uint64_t P = p0.dims[0];
    w.project0_w = detail::as_matrix(detail::expect(c, "project.0.weight", {P, C}));
    w.project0_b = detail::as_vector(detail::expect(c, "project.0.bias", {P}));
    w.project1_w = detail::as_matrix(detail::expect(c, "project.1.weight", {1, P}));
    w.project1_b = detail::as_vector(detail::expect(c, "project.1.bias", {1}));
    w.in_mean = detail::expect_stat(c, "in_mean", w.resolution, false);
    w.in_std = detail::expect_stat(c, "in_std", w.resolution, true);
    w.out_mean = detail::expect_stat(c, "out_mean", w.resolution, false);
    w.out_std = detail::expect_stat(c, "out_std", w.resolution, true);
    w.prepare();
    return w;
}

[[nodiscard]] inline OperatorWeights load_weights(const std::string& path) {
    return weights_from_container(load_container(path));
}

/// Inverse of weights_from_container; metadata records the architecture contract.
[[nodiscard]] inline TensorContainer weights_to_container(const OperatorWeights& w, DType dtype = DType::f32) {
    TensorContainer c;
    c.metadata = {
        {"kind", "spectral_operator_1d"},
        {"resolution", w.resolution},
        {"modes", w.modes},
        {"channels", w.channels},
        {"layers", w.layers},
        {"in_channels", w.in_channels},
        {"input_encoding", "delay_normalized,coordinate_0_1"},
        {"activation", "gelu_erf"},
        {"activation_after_every_layer", true},
        {"spectral_layout", "in,out,mode,reim"},
        {"transform", "rfft_half_spectrum_unnormalized_forward"},
        {"H", w.H},
        {"dt", w.dt},
    };
    c.add(detail::from_matrix("lift.weight", w.lift_w, dtype));
    c.add(detail::from_vector("lift.bias", w.lift_b, dtype));
    const std::uint64_t C = w.channels;
    const std::uint64_t M = w.modes;
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const auto& layer = w.blocks[l];
        std::vector<double> sp(static_cast<std::size_t>(C * C * M * 2));
        for (std::uint64_t i = 0; i < C; ++i) {
            for (std::uint64_t o = 0; o < C; ++o) {
                for (std::uint64_t k = 0; k < M; ++k) {
                    const std::size_t base = static_cast<std::size_t>(((i * C + o) * M + k) * 2);
                    sp[base] = layer.spectral_re[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
                    sp[base + 1] = layer.spectral_im[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
                }
            }
        }
        const std::string p = std::to_string(l);
        c.add(make_tensor("spectral." + p + ".c", {C, C, M, 2}, std::move(sp), dtype));
        c.add(detail::from_matrix("pointwise." + p + ".weight", layer.pointwise_w, dtype));
        c.add(detail::from_vector("pointwise." + p + ".bias", layer.pointwise_b, dtype));
    }
    c.add(detail::from_matrix("project.0.weight", w.project0_w, dtype));
    c.add(detail::from_vector("project.0.bias", w.project0_b, dtype));
    c.add(detail::from_matrix("project.1.weight", w.project1_w, dtype));
    c.add(detail::from_vector("project.1.bias", w.project1_b, dtype));
    c.add(detail::from_vector("in_mean", w.in_mean, dtype));
    c.add(detail::from_vector("in_std", w.in_std, dtype));
    c.add(detail::from_vector("out_mean", w.out_mean, dtype));
    c.add(detail::from_vector("out_std", w.out_std, dtype));
    return c;
}

/// All-zero network of the given shape with unit normalization; the output is
/// the constant out_mean + out_std * project.1.bias.
[[nodiscard]] inline OperatorWeights zero_weights(std::size_t resolution, std::size_t modes, std::size_t channels,
                                                  std::size_t layers, double H = 12.0) {
    OperatorWeights w;
    w.resolution = resolution;
    w.modes = modes;
    w.channels = channels;
    w.layers = layers;
    w.H = H;
    const auto C = static_cast<Eigen::Index>(channels);
    w.lift_w = Eigen::MatrixXd::Zero(C, 2);
    w.lift_b = Eigen::VectorXd::Zero(C);
    for (std::size_t l = 0; l < layers; ++l) {
        SpectralLayer layer;
        layer.spectral_re.assign(modes, Eigen::MatrixXd::Zero(C, C));
        layer.spectral_im.assign(modes, Eigen::MatrixXd::Zero(C, C));
        layer.pointwise_w = Eigen::MatrixXd::Zero(C, C);
        layer.pointwise_b = Eigen::VectorXd::Zero(C);
        w.blocks.push_back(std::move(layer));
    }
    w.project0_w = Eigen::MatrixXd::Zero(C, C);
    w.project0_b = Eigen::VectorXd::Zero(C);
    w.project1_w = Eigen::MatrixXd::Zero(1, C);
    w.project1_b = Eigen::VectorXd::Zero(1);
    w.in_mean = Eigen::VectorXd::Zero(1);
    w.in_std = Eigen::VectorXd::Ones(1);
    w.out_mean = Eigen::VectorXd::Zero(1);
    w.out_std = Eigen::VectorXd::Ones(1);
    w.prepare();
    return w;
}

}  // namespace hpl
