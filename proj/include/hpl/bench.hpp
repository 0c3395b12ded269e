#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/horizon.hpp"
#include "hpl/neural_horizon.hpp"
#include "hpl/rng.hpp"
#include "hpl/tensor_container.hpp"

namespace hpl {

/// Worker count: HPL_THREADS if set, else `requested` if positive, else the number
/// of logical cores.
[[nodiscard]] inline unsigned resolve_threads(int requested = 0) {
    if (const char* env = std::getenv("HPL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    if (requested > 0) return static_cast<unsigned>(requested);
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on `threads` workers. Work is claimed by index, so
/// results depend only on i. The first exception (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr error;
    std::size_t error_index = count;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard lock(mu);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

struct DatasetOptions {
    std::size_t n_samples = 2000;
    double H = 12.0;
    double dt = 1e-3;
    std::size_t resolution = 1024;
    std::uint64_t seed = 0;
    SamplingRanges ranges{};
    int threads = 0;
};

namespace detail {

/// Fisher-Yates with SplitMix64, so the split is the same on every platform.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

inline Tensor index_tensor(std::string name, const std::vector<std::size_t>& idx) {
    std::vector<double> v(idx.begin(), idx.end());
    const auto n = static_cast<std::uint64_t>(v.size());
    return make_tensor(std::move(name), {n}, std::move(v));
}

}  // namespace detail

/// Stored grid j * H / (resolution - 1). When that spacing is a whole multiple of dt
/// the oracle runs on the dt grid and is decimated; otherwise it is evaluated at the
/// stored points directly. Either way every stored psi value is an oracle solve.
[[nodiscard]] inline std::vector<double> dataset_grid(double H, std::size_t resolution) {
    if (resolution < 2) throw Error(Errc::invalid_argument, "resolution must be at least 2");
    std::vector<double> g(resolution);
    for (std::size_t j = 0; j < resolution; ++j) g[j] = H * static_cast<double>(j) / static_cast<double>(resolution - 1);
    return g;
}

[[nodiscard]] inline std::optional<std::size_t> decimation_stride(double H, double dt, std::size_t resolution) {
    const double fine = H / dt;
    const auto fine_steps = std::llround(fine);
    if (std::abs(fine - static_cast<double>(fine_steps)) > 1e-9 * fine) return std::nullopt;
    const auto coarse = static_cast<long long>(resolution - 1);
    if (fine_steps % coarse != 0) return std::nullopt;
    return static_cast<std::size_t>(fine_steps / coarse);
}

[[nodiscard]] inline HorizonSeries dataset_horizon(const DelayParams& p, double H, double dt, std::size_t resolution) {
    const auto grid = dataset_grid(H, resolution);
    if (const auto stride = decimation_stride(H, dt, resolution)) {
        const HorizonSeries fine = oracle_psi(p, uniform_grid(0.0, H, dt));
        HorizonSeries s;
        s.method = HorizonMethod::oracle;
        s.grid = grid;
        s.step = H / static_cast<double>(resolution - 1);
        s.values.resize(resolution);
        for (std::size_t j = 0; j < resolution; ++j) s.values[j] = fine.values[j * *stride];
        return s;
    }
    return oracle_psi(p, grid);
}

/// Container with tensors params (N,5), D (N,n), psi (N,n), grid (n), and
/// train_idx / val_idx / test_idx from a seeded shuffle (80/10/10).
[[nodiscard]] inline TensorContainer gen_dataset(const DatasetOptions& opts) {
    const std::size_t N = opts.n_samples;
    const std::size_t n = opts.resolution;
    if (N == 0) throw Error(Errc::invalid_argument, "n_samples must be positive");
    const auto grid = dataset_grid(opts.H, n);

    std::vector<double> params(N * 5), D(N * n), psi(N * n);
    std::vector<std::uint64_t> rejections(N);
    const SampleOptions so{opts.H, opts.dt, 10000};
    parallel_for(N, resolve_threads(opts.threads), [&](std::size_t i) {
        try {
            const DelaySample ds = sample_delay(opts.seed + i, opts.ranges, so);
            rejections[i] = ds.rejections;
            const auto arr = ds.params.to_array();
            std::copy(arr.begin(), arr.end(), params.begin() + static_cast<std::ptrdiff_t>(i * 5));
            const HorizonSeries s = dataset_horizon(ds.params, opts.H, opts.dt, n);
            for (std::size_t j = 0; j < n; ++j) {
                D[i * n + j] = ds.params.value(grid[j]);
                psi[i * n + j] = s.values[j];
            }
        } catch (const Error& e) {
            throw Error(e.code(), "sample " + std::to_string(i) + ": " + e.what());
        }
    });

    const auto perm = detail::seeded_permutation(N, opts.seed ^ 0x5eed5eed5eed5eedULL);
    const std::size_t n_val = N / 10;
    const std::size_t n_test = N / 10;
    const std::size_t n_train = N - n_val - n_test;
    const std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    const std::vector<std::size_t> val(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                                       perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    const std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());

    std::uint64_t total_rejections = 0;
    for (auto r : rejections) total_rejections += r;

    TensorContainer c;
    c.metadata = {{"kind", "dataset"},
                  {"n_samples", N},
                  {"resolution", n},
                  {"H", opts.H},
                  {"dt", opts.dt},
                  {"seed", opts.seed},
                  {"grid", "t_j = j*H/(resolution-1)"},
                  {"params_order", {"a", "b", "alpha", "omega", "varphi"}},
                  {"ranges",
                   {{"a", {opts.ranges.a.lo, opts.ranges.a.hi}},
                    {"b", {opts.ranges.b.lo, opts.ranges.b.hi}},
                    {"alpha", {opts.ranges.alpha.lo, opts.ranges.alpha.hi}},
                    {"omega", {opts.ranges.omega.lo, opts.ranges.omega.hi}},
                    {"varphi", {opts.ranges.varphi.lo, opts.ranges.varphi.hi}}}},
                  {"rejections", total_rejections},
                  {"split", {n_train, n_val, n_test}}};
    const auto N64 = static_cast<std::uint64_t>(N);
    const auto n64 = static_cast<std::uint64_t>(n);
    c.add(make_tensor("params", {N64, 5}, std::move(params)));
    c.add(make_tensor("D", {N64, n64}, std::move(D)));
    c.add(make_tensor("psi", {N64, n64}, std::move(psi)));
    c.add(make_tensor("grid", {n64}, grid));
    c.add(detail::index_tensor("train_idx", train));
    c.add(detail::index_tensor("val_idx", val));
    c.add(detail::index_tensor("test_idx", test));
    return c;
}

/// Max fixed-point residual of every stored psi row.
[[nodiscard]] inline double dataset_max_residual(const TensorContainer& c) {
    const Tensor& params = c.at("params");
    const Tensor& psi = c.at("psi");
    const Tensor& grid = c.at("grid");
    const std::size_t N = params.dims.at(0);
    const std::size_t n = grid.numel();
    if (psi.numel() != N * n) throw Error(Errc::shape_mismatch, "psi does not match params x grid");
    double worst = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const DelayParams p = DelayParams::from_array({params.data[i * 5], params.data[i * 5 + 1],
                                                       params.data[i * 5 + 2], params.data[i * 5 + 3],
                                                       params.data[i * 5 + 4]});
        for (std::size_t j = 0; j < n; ++j) {
            worst = std::max(worst, std::abs(fixed_point_residual(p, grid.data[j], psi.data[i * n + j])));
        }
    }
    return worst;
}

struct BenchResult {
    HorizonMethod method = HorizonMethod::oracle;
    std::size_t n_evals = 0;
    std::size_t failures = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    /// Mean over samples of the max consistency residual on [0, T].
    double mean_residual = 0.0;
};

struct BenchOptions {
    double h = 1e-2;
    double T = 12.0;
    double window_H = 1.0;
    HorizonMethod windowed_inner = HorizonMethod::rk4;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(i);
    return i + 1 < v.size() ? (1.0 - w) * v[i] + w * v[i + 1] : v[i];
}

}  // namespace detail

/// Full-horizon evaluation of one method on one delay.
[[nodiscard]] inline HorizonSeries evaluate_horizon(HorizonMethod method, const DelayParams& p, const BenchOptions& o,
                                                    const OperatorWeights* weights = nullptr) {
    switch (method) {
        case HorizonMethod::oracle: return oracle_psi(p, uniform_grid(0.0, o.T, o.h));
        case HorizonMethod::euler: return euler_psi(p, o.h, o.T);
        case HorizonMethod::rk4: return rk4_psi(p, o.h, o.T);
        case HorizonMethod::windowed: return windowed_psi(p, o.window_H, o.windowed_inner, o.T, o.h);
        case HorizonMethod::neural:
            if (weights == nullptr) throw Error(Errc::invalid_argument, "neural method needs weights");
            return neural_psi(*weights, p);
    }
    throw Error(Errc::invalid_argument, "unknown horizon method");
}

/// Times each method sequentially on the calling thread. Failing samples are
/// counted and left out of the statistics.
[[nodiscard]] inline std::vector<BenchResult> bench_methods(const std::vector<DelayParams>& delays,
                                                            const std::vector<HorizonMethod>& methods,
                                                            const BenchOptions& opts = {},
                                                            const OperatorWeights* weights = nullptr) {
    std::vector<BenchResult> out;
    for (const HorizonMethod m : methods) {
        BenchResult r;
        r.method = m;
        std::vector<double> ms;
        double residual_sum = 0.0;
        for (const auto& p : delays) {
            try {
                const auto t0 = std::chrono::steady_clock::now();
                const HorizonSeries s = evaluate_horizon(m, p, opts, weights);
                const auto t1 = std::chrono::steady_clock::now();
                const double res = consistency_error(p, s).max_residual;
                if (!std::isfinite(res)) {
                    ++r.failures;
                    continue;
                }
                ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                residual_sum += res;
            } catch (const Error&) {
                ++r.failures;
            }
        }
        r.n_evals = ms.size();
        if (!ms.empty()) {
            double sum = 0.0;
            for (double x : ms) sum += x;
            r.mean_ms = sum / static_cast<double>(ms.size());
            r.p50_ms = detail::percentile(ms, 0.5);
            r.p95_ms = detail::percentile(ms, 0.95);
            r.mean_residual = residual_sum / static_cast<double>(ms.size());
        }
        out.push_back(r);
    }
    return out;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& rs) {
    os << "method,n,mean_ms,p50_ms,p95_ms,mean_residual\n";
    const auto old = os.precision(10);
    for (const auto& r : rs) {
        os << to_string(r.method) << ',' << r.n_evals << ',' << r.mean_ms << ',' << r.p50_ms << ',' << r.p95_ms
           << ',' << r.mean_residual << '\n';
    }
    os.precision(old);
}

}  // namespace hpl
