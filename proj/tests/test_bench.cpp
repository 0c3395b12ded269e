#include <catch_amalgamated.hpp>

#include <atomic>
#include <sstream>

#include "hpl/bench.hpp"

using Catch::Matchers::WithinAbs;
using namespace hpl;

namespace {

const DelayParams d1{0.4, 0.31, -0.10, 4.95, 0.95};

DatasetOptions small_dataset(std::size_t n, std::uint64_t seed, int threads) {
    DatasetOptions o;
    o.n_samples = n;
    o.seed = seed;
    o.resolution = 65;
    o.threads = threads;
    return o;
}

}  // namespace

TEST_CASE("parallel_for visits every index once and rethrows the lowest failure", "[bench]") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    try {
        parallel_for(50, 3, [](std::size_t i) {
            if (i == 7 || i == 30) throw Error(Errc::invalid_argument, std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).ends_with(": 7"));
    }
}

TEST_CASE("dataset shapes, splits and metadata", "[bench][dataset]") {
    const auto c = gen_dataset(small_dataset(20, 3, 1));
    CHECK(c.at("params").dims == std::vector<std::uint64_t>{20, 5});
    CHECK(c.at("D").dims == std::vector<std::uint64_t>{20, 65});
    CHECK(c.at("psi").dims == std::vector<std::uint64_t>{20, 65});
    CHECK(c.at("grid").dims == std::vector<std::uint64_t>{65});
    CHECK(c.at("grid").data.back() == 12.0);
    CHECK(c.at("train_idx").numel() == 16);
    CHECK(c.at("val_idx").numel() == 2);
    CHECK(c.at("test_idx").numel() == 2);
    std::vector<int> seen(20, 0);
    for (const char* name : {"train_idx", "val_idx", "test_idx"}) {
        for (double v : c.at(name).data) seen[static_cast<std::size_t>(v)]++;
    }
    for (int s : seen) CHECK(s == 1);
    CHECK(c.metadata["n_samples"] == 20);
    CHECK(dataset_max_residual(c) <= 1e-12);

    // Row i is the sample drawn with seed + i.
    const auto p = sample_delay(3 + 4, {}, {12.0, 1e-3, 10000}).params.to_array();
    for (std::size_t k = 0; k < 5; ++k) CHECK(c.at("params").data[4 * 5 + k] == p[k]);
}

TEST_CASE("dataset bytes do not depend on the thread count", "[bench][dataset]") {
    std::stringstream a, b, c;
    write_container(a, gen_dataset(small_dataset(12, 9, 1)));
    write_container(b, gen_dataset(small_dataset(12, 9, 3)));
    write_container(c, gen_dataset(small_dataset(12, 10, 1)));
    CHECK(a.str() == b.str());
    CHECK(a.str() != c.str());
}

TEST_CASE("stored grid decimates the fine grid when the stride is whole", "[bench][dataset]") {
    CHECK(decimation_stride(12.0, 1e-3, 1001) == std::optional<std::size_t>(12));
    CHECK_FALSE(decimation_stride(12.0, 1e-3, 1024));
    const auto direct = oracle_psi(d1, dataset_grid(12.0, 1001));
    const auto decimated = dataset_horizon(d1, 12.0, 1e-3, 1001);
    for (std::size_t j = 0; j < direct.size(); ++j) CHECK_THAT(decimated.values[j], WithinAbs(direct.values[j], 1e-11));
}

TEST_CASE("single-point ranges give a one-sample dataset of that delay", "[bench][dataset]") {
    DatasetOptions o = small_dataset(1, 0, 1);
    o.ranges = SamplingRanges::point(d1);
    const auto c = gen_dataset(o);
    CHECK(DelayParams::from_array({c.at("params").data[0], c.at("params").data[1], c.at("params").data[2],
                                   c.at("params").data[3], c.at("params").data[4]}) == d1);
    CHECK(c.at("train_idx").numel() == 1);
    const auto psi = oracle_psi(d1, dataset_grid(12.0, 65));
    CHECK(c.at("psi").data == psi.values);
}

TEST_CASE("benchmark ranks methods by accuracy at equal step", "[bench]") {
    std::vector<DelayParams> delays;
    for (std::uint64_t i = 0; i < 30; ++i) delays.push_back(sample_delay(i).params);
    BenchOptions o;
    o.h = 1e-2;
    const auto rs = bench_methods(delays, {HorizonMethod::oracle, HorizonMethod::rk4, HorizonMethod::euler}, o);
    REQUIRE(rs.size() == 3);
    for (const auto& r : rs) {
        CHECK(r.n_evals + r.failures == 30);
        CHECK(r.mean_ms > 0.0);
        CHECK(r.p50_ms <= r.p95_ms);
    }
    CHECK(rs[0].mean_residual <= rs[1].mean_residual);
    CHECK(rs[1].mean_residual <= rs[2].mean_residual);

    std::ostringstream os;
    write_bench_csv(os, rs);
    CHECK(os.str().starts_with("method,n,mean_ms,p50_ms,p95_ms,mean_residual\noracle,"));
}

TEST_CASE("halving the Euler step halves its residual", "[bench]") {
    std::vector<DelayParams> delays;
    for (std::uint64_t i = 100; i < 130; ++i) delays.push_back(sample_delay(i).params);
    BenchOptions coarse;
    coarse.h = 2e-2;
    BenchOptions fine;
    fine.h = 1e-2;
    const double r1 = bench_methods(delays, {HorizonMethod::euler}, coarse)[0].mean_residual;
    const double r2 = bench_methods(delays, {HorizonMethod::euler}, fine)[0].mean_residual;
    CHECK_THAT(r1 / r2, WithinAbs(2.0, 0.3));
}

TEST_CASE("constant delays are exact for every method", "[bench]") {
    const auto w = zero_weights(65, 8, 2, 1);
    OperatorWeights wc = w;
    wc.project1_b(0) = 0.9;
    const std::vector<DelayParams> delays(30, DelayParams{0.9, 0.0, 0.0, 1.0, 0.0});
    const auto rs = bench_methods(delays, {HorizonMethod::oracle, HorizonMethod::euler, HorizonMethod::rk4,
                                           HorizonMethod::neural},
                                  {}, &wc);
    for (const auto& r : rs) CHECK(r.mean_residual < 1e-12);
    CHECK(bench_methods(delays, {HorizonMethod::neural})[0].failures == 30);
}
