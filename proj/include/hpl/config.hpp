#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/horizon.hpp"
#include "hpl/linalg.hpp"
#include "hpl/plant.hpp"

namespace hpl {

struct HorizonConfig {
    HorizonMethod method = HorizonMethod::oracle;
    double h = 1e-3;
    double window_H = 1.0;
    HorizonMethod windowed_inner = HorizonMethod::rk4;
    std::string weights_path;
    /// Constant offset added to the computed horizon (robustness experiments).
    double error = 0.0;
};

/// One scenario file drives every subcommand; sections a command does not use may be absent.
struct ScenarioConfig {
    std::optional<PlantSpec> plant;
    std::optional<DelayParams> d1;
    std::optional<DelayParams> d2;
    std::optional<InitialData> init;
    HorizonConfig horizon;
    SimulationOptions sim;
    Matrix Q;
    Matrix R;
    double margin_eps_max = 0.0;
    std::string trace_csv;

    template <class T>
    const T& require(const std::optional<T>& v, const char* section) const {
        if (!v) throw Error(Errc::config_error, std::string("missing section '") + section + "'");
        return *v;
    }
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& field, const std::string& what) {
    throw Error(Errc::config_error, "field '" + field + "': " + what);
}

inline double get_number(const json& j, const std::string& field) {
    if (!j.is_number()) config_fail(field, "expected a number");
    return j.get<double>();
}

inline Vector get_vector(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) config_fail(field, "expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = get_number(j[i], field + "[" + std::to_string(i) + "]");
    }
    return v;
}

/// Nested rows [[..],[..]]; a flat array is read as a single row.
inline Matrix get_matrix(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) config_fail(field, "expected a matrix (array of rows)");
    if (!j.front().is_array()) {
        const Vector row = get_vector(j, field);
        return row.transpose();
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::string rf = field + "[" + std::to_string(r) + "]";
        const Vector row = get_vector(j[static_cast<std::size_t>(r)], rf);
        if (row.size() != cols) config_fail(rf, "ragged matrix row");
        m.row(r) = row.transpose();
    }
    return m;
}

inline const json& get_field(const json& j, const std::string& parent, const char* key) {
    const std::string field = parent.empty() ? key : parent + "." + key;
    if (!j.is_object() || !j.contains(key)) config_fail(field, "missing");
    return j.at(key);
}

inline DelayParams get_delay(const json& j, const std::string& field) {
    if (j.is_array()) {
        if (j.size() != 5) config_fail(field, "expected [a, b, alpha, omega, varphi]");
        return DelayParams::from_array({get_number(j[0], field + "[0]"), get_number(j[1], field + "[1]"),
                                        get_number(j[2], field + "[2]"), get_number(j[3], field + "[3]"),
                                        get_number(j[4], field + "[4]")});
    }
    DelayParams p;
    p.a = get_number(get_field(j, field, "a"), field + ".a");
    p.b = get_number(get_field(j, field, "b"), field + ".b");
    p.alpha = get_number(get_field(j, field, "alpha"), field + ".alpha");
    p.omega = get_number(get_field(j, field, "omega"), field + ".omega");
    p.varphi = get_number(get_field(j, field, "varphi"), field + ".varphi");
    return p;
}

/// {"const": [..]} or {"table": {"t": [..], "values": [[..], ..]}}.
inline HistorySource get_history(const json& j, const std::string& field) {
    if (j.is_object() && j.contains("const")) return HistorySource::constant(get_vector(j.at("const"), field + ".const"));
    if (j.is_object() && j.contains("table")) {
        const json& tb = j.at("table");
        const std::string tf = field + ".table";
        const Vector t = get_vector(get_field(tb, tf, "t"), tf + ".t");
        const Matrix v = get_matrix(get_field(tb, tf, "values"), tf + ".values");
        if (v.rows() != t.size()) config_fail(tf + ".values", "needs one row per time stamp");
        std::vector<double> times(t.data(), t.data() + t.size());
        std::vector<Vector> values;
        for (Eigen::Index r = 0; r < v.rows(); ++r) values.emplace_back(v.row(r).transpose());
        try {
            return HistorySource::table(std::move(times), std::move(values));
        } catch (const Error& e) {
            config_fail(tf, e.what());
        }
    }
    config_fail(field, "expected {\"const\": [...]} or {\"table\": {...}}");
}

inline std::string get_string(const json& j, const std::string& field) {
    if (!j.is_string()) config_fail(field, "expected a string");
    return j.get<std::string>();
}

}  // namespace detail

[[nodiscard]] inline ScenarioConfig parse_config(const nlohmann::json& j) {
    using detail::get_field;
    using detail::get_number;
    if (!j.is_object()) throw Error(Errc::config_error, "top level must be an object");
    ScenarioConfig c;
    if (j.contains("plant")) {
        const auto& p = j.at("plant");
        PlantSpec s;
        s.A = detail::get_matrix(get_field(p, "plant", "A"), "plant.A");
        s.B = detail::get_matrix(get_field(p, "plant", "B"), "plant.B");
        s.C = detail::get_matrix(get_field(p, "plant", "C"), "plant.C");
        s.K = detail::get_matrix(get_field(p, "plant", "K"), "plant.K");
        s.L = detail::get_matrix(get_field(p, "plant", "L"), "plant.L");
        // A flat B or L is a single column.
        if (s.B.rows() == 1 && s.A.rows() > 1) s.B = s.B.transpose().eval();
        if (s.L.rows() == 1 && s.A.rows() > 1) s.L = s.L.transpose().eval();
        try {
            s.check_dimensions();
        } catch (const Error& e) {
            detail::config_fail("plant", e.what());
        }
        c.plant = std::move(s);
    }
    if (j.contains("delays")) {
        const auto& d = j.at("delays");
        if (d.contains("d1")) c.d1 = detail::get_delay(d.at("d1"), "delays.d1");
        if (d.contains("d2")) c.d2 = detail::get_delay(d.at("d2"), "delays.d2");
    }
    if (j.contains("init")) {
        const auto& i = j.at("init");
        InitialData init;
        init.Z0 = detail::get_vector(get_field(i, "init", "Z0"), "init.Z0");
        init.xi0 = i.contains("xi0") ? detail::get_vector(i.at("xi0"), "init.xi0") : init.Z0;
        init.z_history = i.contains("z_history") ? detail::get_history(i.at("z_history"), "init.z_history")
                                                 : HistorySource::constant(init.Z0);
        if (i.contains("u_history")) {
            init.u_history = detail::get_history(i.at("u_history"), "init.u_history");
        } else {
            const Eigen::Index m = c.plant ? c.plant->m() : 1;
            init.u_history = HistorySource::constant(Vector::Zero(m));
        }
        c.init = std::move(init);
    }
    if (j.contains("horizon")) {
        const auto& h = j.at("horizon");
        if (h.contains("method")) {
            try {
                c.horizon.method = parse_horizon_method(detail::get_string(h.at("method"), "horizon.method"));
            } catch (const Error& e) {
                detail::config_fail("horizon.method", e.what());
            }
        }
        if (h.contains("h")) c.horizon.h = get_number(h.at("h"), "horizon.h");
        if (h.contains("window_H")) c.horizon.window_H = get_number(h.at("window_H"), "horizon.window_H");
        if (h.contains("inner")) {
            try {
                c.horizon.windowed_inner = parse_horizon_method(detail::get_string(h.at("inner"), "horizon.inner"));
            } catch (const Error& e) {
                detail::config_fail("horizon.inner", e.what());
            }
        }
        if (h.contains("weights_path")) c.horizon.weights_path = detail::get_string(h.at("weights_path"), "horizon.weights_path");
        if (h.contains("error")) c.horizon.error = get_number(h.at("error"), "horizon.error");
        if (!(c.horizon.h > 0.0)) detail::config_fail("horizon.h", "must be positive");
    }
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        if (s.contains("T")) c.sim.T = get_number(s.at("T"), "sim.T");
        if (s.contains("dt")) c.sim.dt = get_number(s.at("dt"), "sim.dt");
        if (s.contains("noise")) c.sim.measurement_noise = get_number(s.at("noise"), "sim.noise");
        if (s.contains("noise_seed")) {
            c.sim.noise_seed = static_cast<std::uint64_t>(get_number(s.at("noise_seed"), "sim.noise_seed"));
        }
        if (!(c.sim.T > 0.0)) detail::config_fail("sim.T", "must be positive");
        if (!(c.sim.dt > 0.0)) detail::config_fail("sim.dt", "must be positive");
    }
    if (j.contains("margins")) {
        const auto& m = j.at("margins");
        if (m.contains("Q")) c.Q = detail::get_matrix(m.at("Q"), "margins.Q");
        if (m.contains("R")) c.R = detail::get_matrix(m.at("R"), "margins.R");
        if (m.contains("eps_max")) c.margin_eps_max = get_number(m.at("eps_max"), "margins.eps_max");
    }
    if (j.contains("outputs")) {
        const auto& o = j.at("outputs");
        if (o.contains("trace_csv")) c.trace_csv = detail::get_string(o.at("trace_csv"), "outputs.trace_csv");
    }
    return c;
}

/// JSON text; syntax errors report line and column.
[[nodiscard]] inline ScenarioConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(Errc::config_error, "syntax error at line " + std::to_string(line) + ", column " +
                                            std::to_string(col) + ": " + e.what());
    }
    return parse_config(j);
}

[[nodiscard]] inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace hpl
