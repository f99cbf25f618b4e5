// SPDX-License-Identifier: Apache-2.0
#include "hlm/bench.hpp"
#include "testutil.hpp"

using namespace hlm;
using Catch::Approx;

namespace {

ModelConfig bench_config(int64_t intra = 2, int64_t inter = 2) {
    ModelConfig cfg;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.intra_layers = intra;
    cfg.inter_layers = inter;
    cfg.head_layers = 1;
    cfg.intra_ff = 32;
    cfg.inter_ff = 32;
    cfg.vocab_size = 32;
    cfg.dropout = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("measured attention pair counts equal the closed forms exactly") {
    ModelConfig cfg = bench_config();
    for (auto [n, m] : std::vector<std::pair<int64_t, int64_t>>{{32, 4}, {64, 8}, {48, 4}, {64, 16}}) {
        CostReport r = count_attention_flops(cfg, n, m);
        INFO("N=" << n << " M=" << m);
        REQUIRE(r.measured_intra == r.predicted_intra);
        REQUIRE(r.measured_inter == r.predicted_inter);
        REQUIRE(r.measured_dense == r.predicted_dense);
        REQUIRE(r.predicted_intra == (n / m) * (m + 1) * (m + 1));
        REQUIRE(r.predicted_inter == (n / m + 2) * (n / m + 2));
        REQUIRE(r.predicted_dense == n * n);
        // CLS/SEP wrappers cost two 2x2 blocks at the intra level
        REQUIRE(r.measured_pseudo == 8);
    }
}

TEST_CASE("doubling N doubles the intra count and quadruples the dense count") {
    ModelConfig cfg = bench_config(1, 1);
    CostReport a = count_attention_flops(cfg, 64, 8);
    CostReport b = count_attention_flops(cfg, 128, 8);
    REQUIRE(b.measured_intra == 2 * a.measured_intra);
    REQUIRE(b.measured_dense == 4 * a.measured_dense);
}

TEST_CASE("one giant word degenerates to the dense count modulo WORD_CLS") {
    ModelConfig cfg = bench_config(1, 1);
    int64_t n = 24;
    CostReport r = count_attention_flops(cfg, n, n);
    REQUIRE(r.measured_intra == (n + 1) * (n + 1));
    REQUIRE(r.measured_dense == n * n);
    REQUIRE(r.measured_inter == 9);  // one word + CLS/SEP
}

TEST_CASE("N not divisible by M is rejected") {
    REQUIRE_THROWS_AS(count_attention_flops(bench_config(), 100, 8), UsageError);
}

TEST_CASE("log-log slopes of the leading-order series") {
    ModelConfig cfg = bench_config(1, 1);
    std::vector<int64_t> ns = {64, 128, 256, 512};
    for (int64_t m : {4, 8, 16}) {
        std::vector<int64_t> intra, inter_lead, dense;
        for (int64_t n : ns) {
            CostReport r = count_attention_flops(cfg, n, m);
            intra.push_back(r.measured_intra);
            // subtract the CLS/SEP cross terms: measured = (W+2)^2 -> W^2
            inter_lead.push_back((r.words) * (r.words));
            REQUIRE(r.measured_inter == (r.words + 2) * (r.words + 2));
            dense.push_back(r.measured_dense);
        }
        REQUIRE(loglog_slope(ns, intra) == Approx(1.0).margin(0.05));
        REQUIRE(loglog_slope(ns, inter_lead) == Approx(2.0).margin(0.05));
        REQUIRE(loglog_slope(ns, dense) == Approx(2.0).margin(0.05));
    }
}

TEST_CASE("ratio fields report measured over leading order") {
    ModelConfig cfg = bench_config(1, 1);
    CostReport r = count_attention_flops(cfg, 64, 8);
    REQUIRE(r.lead_intra == 64 * 8);
    REQUIRE(r.lead_inter == 8 * 8);
    REQUIRE(r.lead_dense == 64 * 64);
    REQUIRE(r.ratio_intra == Approx(static_cast<double>(r.measured_intra) / (64.0 * 8.0)));
    REQUIRE(r.ratio_dense == Approx(1.0));
}

TEST_CASE("throughput measurement is stable and rejects empty datasets") {
    volatile double sink = 0;
    auto work = [&] {
        double acc = 0;
        for (int i = 0; i < 2000000; ++i) acc += std::sqrt(static_cast<double>(i));
        sink = acc;
    };
    Timing t1 = measure_throughput(work, 8, 5);
    Timing t2 = measure_throughput(work, 8, 5);
    REQUIRE(t1.mean_sps > 0);
    REQUIRE(std::abs(t1.mean_sps - t2.mean_sps) / t1.mean_sps < 0.25);
    REQUIRE_THROWS_AS(measure_throughput(work, 0, 5), UsageError);
}

TEST_CASE("hierarchical forward beats the dense baseline at moderate length") {
    ModelConfig cfg = bench_config(1, 2);
    ThroughputReport r = bench_throughput(cfg, 512, 8, 4, 3, 123);
    INFO("hier " << r.hier.mean_sps << " dense " << r.dense.mean_sps);
    REQUIRE(r.hier.mean_sps > r.dense.mean_sps);
    REQUIRE(r.fingerprint.size() == 8);
    REQUIRE(r.build.size() == 8);
}
