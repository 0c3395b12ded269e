#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hpl/config.hpp"
#include "hpl/neural_horizon.hpp"

using namespace hpl;
namespace fs = std::filesystem;

namespace {

const std::string cli = HPL_CLI_PATH;
const std::string reference_cfg = HPL_CONFIG_DIR "/reference.cfg";

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "hpl_cli_test";
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const fs::path& out = {}) {
    std::string cmd = cli + " " + args;
    cmd += out.empty() ? " > /dev/null 2>&1" : " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch() / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("config parser reads the packaged scenario", "[config]") {
    const auto c = load_config(reference_cfg);
    REQUIRE(c.plant);
    CHECK(c.plant->A(1, 1) == 2.0);
    CHECK(c.plant->L(1, 0) == -8.0);
    REQUIRE(c.d1);
    CHECK(*c.d1 == DelayParams{0.4, 0.31, -0.10, 4.95, 0.95});
    REQUIRE(c.init);
    CHECK(c.init->xi0(0) == 5.0);
    CHECK(c.sim.T == 12.0);
    CHECK(c.horizon.method == HorizonMethod::oracle);
}

TEST_CASE("config errors name the field or the line", "[config]") {
    auto message = [](const std::string& text) {
        try {
            (void)parse_config_text(text);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::config_error);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(R"({"delays": {"d1": {"a": 1, "b": 0, "alpha": 0, "omega": 1}}})").find("delays.d1.varphi") !=
          std::string::npos);
    CHECK(message(R"({"plant": {"A": [[0, 1], [1]], "B": [0, 1], "C": [1, 0], "K": [0, 0], "L": [0, 0]}})")
              .find("plant.A[1]") != std::string::npos);
    CHECK(message(R"({"sim": {"dt": "fast"}})").find("sim.dt") != std::string::npos);
    CHECK(message("{\n  \"sim\": {\n    \"T\": 12,,\n  }\n}").find("line 3") != std::string::npos);
    CHECK(message(R"({"horizon": {"method": "newton"}})").find("horizon.method") != std::string::npos);
    CHECK(message(R"({"init": {"Z0": [1], "u_history": {"sometimes": 1}}})").find("init.u_history") !=
          std::string::npos);
}

TEST_CASE("check-delay reports valid and violating delays", "[cli]") {
    const auto out = scratch() / "check.txt";
    CHECK(run("check-delay " + reference_cfg, out) == 0);
    CHECK(slurp(out).find("d1.valid yes") != std::string::npos);

    const auto bad = write_file("bad_delay.cfg", R"({"delays": {"d1": {"a": 1, "b": 0, "alpha": 0.3, "omega": 4, "varphi": 0}}})");
    CHECK(run("check-delay " + bad.string(), out) == 2);
    CHECK(slurp(out).find("first_violation_time") != std::string::npos);

    const auto malformed = write_file("malformed.cfg", R"({"delays": {"d1": {"a": "x"}}})");
    CHECK(run("check-delay " + malformed.string(), out) == 1);
    CHECK(slurp(out).find("delays.d1.a") != std::string::npos);
    CHECK(run("check-delay " + (scratch() / "missing.cfg").string()) == 4);
}

TEST_CASE("horizon subcommand writes t,psi,residual", "[cli]") {
    const auto csv = scratch() / "psi.csv";
    CHECK(run("horizon " + reference_cfg + " --method oracle --h 0.01 --out " + csv.string()) == 0);
    std::istringstream is(slurp(csv));
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,psi,residual");
    int rows = 0;
    double worst = 0.0;
    while (std::getline(is, line)) {
        ++rows;
        worst = std::max(worst, std::stod(line.substr(line.rfind(',') + 1)));
    }
    CHECK(rows == 1201);
    CHECK(worst <= 1e-12);

    const auto constant = write_file("const.cfg", R"({"delays": {"d1": [0.5, 0, 0, 1, 0]}, "sim": {"T": 2}})");
    for (const char* m : {"oracle", "euler", "rk4", "windowed"}) {
        CHECK(run("horizon " + constant.string() + " --method " + m + " --h 0.1 --out " + csv.string()) == 0);
        std::istringstream rows_in(slurp(csv));
        std::getline(rows_in, line);
        while (std::getline(rows_in, line)) {
            const auto a = line.find(',');
            REQUIRE(std::abs(std::stod(line.substr(a + 1)) - 0.5) < 1e-12);
        }
    }
}

TEST_CASE("fno needs weights and validates them", "[cli]") {
    CHECK(run("horizon " + reference_cfg + " --method fno") == 1);
    const auto bogus = write_file("bogus.nopc", "not a container");
    CHECK(run("horizon " + reference_cfg + " --method fno --weights " + bogus.string()) == 4);

    auto w = zero_weights(64, 8, 4, 2);
    w.project1_b(0) = 0.5;
    const auto path = scratch() / "zero.nopc";
    save_container(path.string(), weights_to_container(w));
    const auto csv = scratch() / "fno.csv";
    CHECK(run("horizon " + reference_cfg + " --method fno --weights " + path.string() + " --out " + csv.string()) == 0);
    std::istringstream is(slurp(csv));
    std::string line;
    std::getline(is, line);
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::stod(line.substr(line.find(',') + 1)) == 0.5);
    }
    CHECK(rows == 64);
}

TEST_CASE("gen-dataset is reproducible from the command line", "[cli]") {
    const auto a = scratch() / "a.nopc";
    const auto b = scratch() / "b.nopc";
    CHECK(run("gen-dataset --n 8 --seed 0 --resolution 129 --threads 2 --out " + a.string()) == 0);
    CHECK(run("gen-dataset --n 8 --seed 0 --resolution 129 --threads 1 --out " + b.string()) == 0);
    CHECK(slurp(a) == slurp(b));
    const auto c = load_container(a.string());
    CHECK(c.at("psi").dims == std::vector<std::uint64_t>{8, 129});
    CHECK(run("gen-dataset --n 8") == 1);
}

TEST_CASE("simulate prints the decay fit and writes the trace", "[cli]") {
    const auto out = scratch() / "sim.txt";
    const auto trace = scratch() / "trace.csv";
    CHECK(run("simulate " + reference_cfg + " --out " + trace.string(), out) == 0);
    const std::string text = slurp(out);
    CHECK(text.find("C_fit") != std::string::npos);
    const auto pos = text.find("gamma_ratio ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(text.substr(pos + 12)) < 1e-3);
    CHECK(slurp(trace).starts_with("t,Z_1,Z_2,xi_1,xi_2,Zhat_1,Zhat_2,Phat_1,Phat_2,U_1,Y_1,psi_hat,gamma\n"));

    const auto unstable = write_file("unstable.cfg", R"({
      "plant": {"A": [[0, 1], [1, 2]], "B": [[0], [1]], "C": [[1, -1]], "K": [[0, 0]], "L": [[-4], [-8]]},
      "delays": {"d1": [0.4, 0.31, -0.1, 4.95, 0.95], "d2": [0.28, 0.15, -0.06, 1.28, 0.82]},
      "init": {"Z0": [-1, 1]}})");
    CHECK(run("simulate " + unstable.string()) == 2);
    const auto no_plant = write_file("no_plant.cfg", R"({"delays": {"d1": [1, 0, 0, 1, 0]}})");
    CHECK(run("simulate " + no_plant.string()) == 1);
}

TEST_CASE("margins and bench subcommands", "[cli]") {
    const auto report = scratch() / "margins.txt";
    const auto csv = scratch() / "margins.csv";
    CHECK(run("margins " + reference_cfg + " --out " + report.string() + " --csv " + csv.string()) == 0);
    CHECK(slurp(report).find("eps_star") != std::string::npos);
    CHECK(slurp(csv).starts_with("eps,c1,c2,c3,c4\n"));

    const auto bench = scratch() / "bench.csv";
    CHECK(run("bench --n 5 --h 0.05 --methods oracle,euler,rk4 --out " + bench.string()) == 0);
    CHECK(slurp(bench).starts_with("method,n,mean_ms,p50_ms,p95_ms,mean_residual\n"));
    CHECK(run("bench --n 5 --methods fno") == 1);
    CHECK(run("frobnicate") == 1);
}
