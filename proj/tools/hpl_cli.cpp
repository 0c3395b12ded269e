// hpl: delay checks, horizon computation, datasets, closed-loop simulation,
// stability margins and benchmarks from a scenario file.
//
// Exit codes: 0 ok, 1 config or usage, 2 assumption violation, 3 numeric failure, 4 I/O.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hpl/hpl.hpp"

namespace {

enum Exit { ok = 0, usage = 1, violation = 2, numeric = 3, io = 4 };

struct Failure {
    Exit code;
    std::string message;
};

int exit_code(hpl::Errc e) {
    using hpl::Errc;
    switch (e) {
        case Errc::config_error:
        case Errc::invalid_argument: return usage;
        case Errc::not_hurwitz:
        case Errc::rejection_limit_exceeded: return violation;
        case Errc::io_error:
        case Errc::bad_magic:
        case Errc::version_mismatch:
        case Errc::truncated_input:
        case Errc::shape_mismatch:
        case Errc::non_finite_weight:
        case Errc::invalid_normalization: return io;
        default: return numeric;
    }
}

/// Output stream: a file when a path is given, stdout otherwise.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw hpl::Error(hpl::Errc::io_error, "cannot write '" + path + "'");
        }
    }
    std::ostream& os() { return file_ ? *file_ : std::cout; }
    void close(const std::string& path) {
        if (file_) {
            file_->close();
            if (!*file_) throw hpl::Error(hpl::Errc::io_error, "failed writing '" + path + "'");
        }
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

const hpl::DelayParams& pick_delay(const hpl::ScenarioConfig& c, const std::string& which) {
    if (which == "d1") return c.require(c.d1, "delays.d1");
    if (which == "d2") return c.require(c.d2, "delays.d2");
    throw hpl::Error(hpl::Errc::config_error, "--delay must be d1 or d2");
}

void print_assumptions(std::ostream& os, const std::string& name, const hpl::AssumptionReport& r) {
    os << name << ".valid " << (r.valid ? "yes" : "no") << '\n';
    os << name << ".interval " << r.t_begin << ' ' << r.t_end << '\n';
    os << name << ".pi0_star " << r.pi0_star << '\n';
    os << name << ".pi1_star " << r.pi1_star << '\n';
    os << name << ".pi2_star " << r.pi2_star << '\n';
    os << name << ".pi3_star " << r.pi3_star << '\n';
    if (r.first_violation_time) os << name << ".first_violation_time " << *r.first_violation_time << '\n';
}

hpl::AssumptionReport checked(const hpl::DelayParams& d, double T, const std::string& name) {
    auto r = hpl::check_assumptions(d, T + d.upper_bound());
    if (!r.valid) {
        std::ostringstream ss;
        ss << name << " violates the delay assumptions";
        if (r.first_violation_time) ss << " at t=" << *r.first_violation_time;
        throw Failure{violation, ss.str()};
    }
    return r;
}

hpl::HorizonSeries compute_horizon(const hpl::HorizonConfig& hc, const hpl::DelayParams& d, double T,
                                   const std::optional<hpl::OperatorWeights>& weights) {
    using hpl::HorizonMethod;
    switch (hc.method) {
        case HorizonMethod::oracle: return hpl::oracle_psi(d, hpl::uniform_grid(0.0, T, hc.h));
        case HorizonMethod::euler: return hpl::euler_psi(d, hc.h, T);
        case HorizonMethod::rk4: return hpl::rk4_psi(d, hc.h, T);
        case HorizonMethod::windowed: return hpl::windowed_psi(d, hc.window_H, hc.windowed_inner, T, hc.h);
        case HorizonMethod::neural:
            if (!weights) throw Failure{usage, "method fno needs --weights"};
            return hpl::neural_psi(*weights, d);
    }
    throw Failure{usage, "unknown method"};
}

std::optional<hpl::OperatorWeights> weights_for(const hpl::HorizonConfig& hc) {
    if (hc.method != hpl::HorizonMethod::neural) return std::nullopt;
    if (hc.weights_path.empty()) throw Failure{usage, "method fno needs --weights"};
    return hpl::load_weights(hc.weights_path);
}

struct Options {
    std::string config;
    std::string out;
    std::string method;
    std::string weights;
    std::string delay = "d1";
    double h = 0.0;
    double T = 0.0;
    double window_H = 0.0;
    std::optional<double> error;
    std::string csv;
    // dataset / bench
    std::size_t n = 2000;
    std::uint64_t seed = 0;
    std::size_t resolution = 1024;
    double H = 12.0;
    double dt = 1e-3;
    int threads = 0;
    std::string methods = "oracle,euler,rk4";
};

void apply_overrides(hpl::ScenarioConfig& c, const Options& o) {
    if (!o.method.empty()) c.horizon.method = hpl::parse_horizon_method(o.method);
    if (o.h > 0.0) c.horizon.h = o.h;
    if (o.window_H > 0.0) c.horizon.window_H = o.window_H;
    if (!o.weights.empty()) c.horizon.weights_path = o.weights;
    if (o.error) c.horizon.error = *o.error;
    if (o.T > 0.0) c.sim.T = o.T;
}

int run_check_delay(const Options& o) {
    const auto c = hpl::load_config(o.config);
    const double T = o.T > 0.0 ? o.T : c.sim.T;
    bool all_valid = true;
    Sink sink(o.out);
    for (const char* name : {"d1", "d2"}) {
        const auto& d = std::string(name) == "d1" ? c.d1 : c.d2;
        if (!d) continue;
        const auto r = hpl::check_assumptions(*d, T + d->upper_bound());
        print_assumptions(sink.os(), name, r);
        all_valid = all_valid && r.valid;
    }
    if (!c.d1 && !c.d2) throw hpl::Error(hpl::Errc::config_error, "missing section 'delays'");
    sink.close(o.out);
    return all_valid ? ok : violation;
}

int run_horizon(const Options& o) {
    auto c = hpl::load_config(o.config);
    apply_overrides(c, o);
    const auto& d = pick_delay(c, o.delay);
    const double T = o.T > 0.0 ? o.T : c.sim.T;
    checked(d, T, o.delay);
    const auto weights = weights_for(c.horizon);
    const auto s = compute_horizon(c.horizon, d, T, weights);
    Sink sink(o.out);
    hpl::write_horizon_csv(sink.os(), d, s);
    sink.close(o.out);
    return ok;
}

int run_gen_dataset(const Options& o) {
    if (o.out.empty()) throw Failure{usage, "gen-dataset needs --out"};
    hpl::DatasetOptions d;
    d.n_samples = o.n;
    d.seed = o.seed;
    d.resolution = o.resolution;
    d.H = o.H;
    d.dt = o.dt;
    d.threads = o.threads;
    const auto c = hpl::gen_dataset(d);
    hpl::save_container(o.out, c);
    std::cout << "samples " << d.n_samples << "\nresolution " << d.resolution << "\nmax_residual "
              << hpl::dataset_max_residual(c) << '\n';
    return ok;
}

int run_simulate(const Options& o) {
    auto c = hpl::load_config(o.config);
    apply_overrides(c, o);
    const auto& spec = c.require(c.plant, "plant");
    const auto& d1 = c.require(c.d1, "delays.d1");
    const auto& d2 = c.require(c.d2, "delays.d2");
    const auto& init = c.require(c.init, "init");
    checked(d1, c.sim.T, "d1");
    checked(d2, c.sim.T, "d2");
    spec.check_hurwitz();
    const auto weights = weights_for(c.horizon);
    const auto psi = compute_horizon(c.horizon, d1, c.sim.T, weights);
    const auto trace = hpl::simulate(spec, d1, d2, init, hpl::series_provider(psi, c.horizon.error), c.sim);
    const std::string path = o.out.empty() ? c.trace_csv : o.out;
    if (!path.empty()) {
        Sink sink(path);
        hpl::write_trace_csv(sink.os(), trace);
        sink.close(path);
    }
    const auto fit = hpl::gamma_decay_fit(trace);
    std::cout.precision(10);
    std::cout << "M_fit " << fit.M_fit << "\nC_fit " << fit.C_fit << "\ngamma_ratio "
              << trace.gamma.back() / trace.gamma.front() << "\nclamped_lookups " << trace.clamp_count << '\n';
    return ok;
}

int run_margins(const Options& o) {
    const auto c = hpl::load_config(o.config);
    const auto& spec = c.require(c.plant, "plant");
    const auto& d1 = c.require(c.d1, "delays.d1");
    const double T = o.T > 0.0 ? o.T : c.sim.T;
    auto bounds = checked(d1, T, "d1");
    if (c.d2) bounds = hpl::merge(bounds, checked(*c.d2, T, "d2"));
    const auto r = hpl::compute_margins(spec, bounds, c.Q, c.R);
    Sink sink(o.out);
    hpl::write_margin_report(sink.os(), r);
    sink.close(o.out);
    if (!o.csv.empty()) {
        Sink csv(o.csv);
        const double eps_max = c.margin_eps_max > 0.0 ? c.margin_eps_max : (r.eps_star > 0.0 ? r.eps_star : 1e-3);
        hpl::write_margin_csv(csv.os(), r, eps_max);
        csv.close(o.csv);
    }
    return ok;
}

int run_bench(const Options& o) {
    std::vector<hpl::HorizonMethod> methods;
    {
        std::stringstream ss(o.methods);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) methods.push_back(hpl::parse_horizon_method(item));
        }
    }
    std::optional<hpl::OperatorWeights> weights;
    for (auto m : methods) {
        if (m == hpl::HorizonMethod::neural) {
            if (o.weights.empty()) throw Failure{usage, "method fno needs --weights"};
            weights = hpl::load_weights(o.weights);
        }
    }
    const hpl::SampleOptions so{o.H, o.dt, 10000};
    std::vector<hpl::DelayParams> delays(o.n);
    hpl::parallel_for(o.n, hpl::resolve_threads(o.threads),
                      [&](std::size_t i) { delays[i] = hpl::sample_delay(o.seed + i, {}, so).params; });
    hpl::BenchOptions bo;
    bo.h = o.h > 0.0 ? o.h : 1e-2;
    bo.T = o.H;
    if (o.window_H > 0.0) bo.window_H = o.window_H;
    const auto results = hpl::bench_methods(delays, methods, bo, weights ? &*weights : nullptr);
    Sink sink(o.out);
    hpl::write_bench_csv(sink.os(), results);
    sink.close(o.out);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prediction-horizon computation and predictor feedback under time-varying delays"};
    app.require_subcommand(1);
    // --h is the step size, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");
    app.option_defaults()->always_capture_default();
    Options o;

    auto* check = app.add_subcommand("check-delay", "Check the delay assumptions and print the bound constants");
    check->add_option("config", o.config, "Scenario file")->required();
    check->add_option("--T", o.T, "Horizon end (default: sim.T)");
    check->add_option("--out", o.out, "Report file (default: stdout)");

    auto* horizon = app.add_subcommand("horizon", "Compute psi on [0, T] and write t,psi,residual");
    horizon->add_option("config", o.config, "Scenario file")->required();
    horizon->add_option("--method", o.method, "oracle|euler|rk4|fno|windowed");
    horizon->add_option("--h", o.h, "Step size");
    horizon->add_option("--T", o.T, "Horizon end");
    horizon->add_option("--weights", o.weights, "Operator weights file (fno)");
    horizon->add_option("--window-H", o.window_H, "Re-anchoring window (windowed)");
    horizon->add_option("--delay", o.delay, "d1 or d2");
    horizon->add_option("--out", o.out, "CSV file (default: stdout)");

    auto* dataset = app.add_subcommand("gen-dataset", "Sample delays and write oracle horizons to a container");
    dataset->add_option("--n", o.n, "Number of samples");
    dataset->add_option("--seed", o.seed, "Base seed");
    dataset->add_option("--resolution", o.resolution, "Stored points per sample");
    dataset->add_option("--H", o.H, "Time horizon");
    dataset->add_option("--dt", o.dt, "Fine grid step");
    dataset->add_option("--threads", o.threads, "Worker threads (HPL_THREADS overrides)");
    dataset->add_option("--out", o.out, "Output container")->required();

    auto* simulate = app.add_subcommand("simulate", "Closed-loop simulation; prints M_fit and C_fit");
    simulate->add_option("config", o.config, "Scenario file")->required();
    simulate->add_option("--method", o.method, "Horizon method");
    simulate->add_option("--h", o.h, "Horizon step size");
    simulate->add_option("--weights", o.weights, "Operator weights file (fno)");
    simulate->add_option("--window-H", o.window_H, "Re-anchoring window (windowed)");
    simulate->add_option("--error", o.error, "Constant offset added to the horizon");
    simulate->add_option("--T", o.T, "Simulation length");
    simulate->add_option("--out", o.out, "Trace CSV (default: outputs.trace_csv)");

    auto* margins = app.add_subcommand("margins", "Evaluate the robustness margin constants");
    margins->add_option("config", o.config, "Scenario file")->required();
    margins->add_option("--T", o.T, "Interval for the delay bounds");
    margins->add_option("--out", o.out, "Report file (default: stdout)");
    margins->add_option("--csv", o.csv, "eps,c1,c2,c3,c4 table");

    auto* bench = app.add_subcommand("bench", "Time and score horizon methods on sampled delays");
    bench->add_option("--n", o.n, "Number of delays")->default_val(100);
    bench->add_option("--seed", o.seed, "Base seed");
    bench->add_option("--h", o.h, "Step size for oracle/euler/rk4");
    bench->add_option("--H", o.H, "Time horizon");
    bench->add_option("--methods", o.methods, "Comma-separated methods");
    bench->add_option("--weights", o.weights, "Operator weights file (fno)");
    bench->add_option("--window-H", o.window_H, "Re-anchoring window (windowed)");
    bench->add_option("--threads", o.threads, "Sampling threads (HPL_THREADS overrides)");
    bench->add_option("--out", o.out, "CSV file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : usage;
    }

    try {
        if (*check) return run_check_delay(o);
        if (*horizon) return run_horizon(o);
        if (*dataset) return run_gen_dataset(o);
        if (*simulate) return run_simulate(o);
        if (*margins) return run_margins(o);
        if (*bench) return run_bench(o);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return f.code;
    } catch (const hpl::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return numeric;
    }
    return usage;
}
