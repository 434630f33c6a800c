#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hybridlm/cost.hpp"
#include "hybridlm/errors.hpp"
#include "hybridlm/model.hpp"

using namespace hybridlm;

namespace {

ModelConfig pattern_config(const std::string& pattern, bool mlp = false,
                           std::size_t d = 16) {
    ModelConfig cfg;
    cfg.layers = ModelConfig::layers_from_pattern(pattern, mlp);
    cfg.hidden_dim = d;
    cfg.ssm_state = 4;
    cfg.attn_heads = 2;
    cfg.mamba_heads = 2;
    cfg.vocab = 64;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("doubling T scales the attention quadratic term by exactly 4") {
    const ModelConfig cfg = pattern_config("A");
    const double d = static_cast<double>(cfg.hidden_dim);

    const CostReport small = analytic_cost(cfg, 4, 8, {});
    const CostReport big = analytic_cost(cfg, 11, 8, {});  // doubles the total length
    const double t_small = static_cast<double>(small.layers[0].tokens);
    const double t_big = static_cast<double>(big.layers[0].tokens);
    REQUIRE(t_big == 2.0 * t_small);

    const double quad_small = small.layers[0].macs - 4.0 * t_small * d * d;
    const double quad_big = big.layers[0].macs - 4.0 * t_big * d * d;
    CHECK(quad_big == 4.0 * quad_small);
}

TEST_CASE("compression strictly lowers total MACs when vision tokens exist") {
    const ModelConfig cfg = pattern_config("MMAMMAMM");
    const CompressionSchedule schedule = parse_schedule("uni_1_0.5-attn_5_0.9");
    const CostReport base = analytic_cost(cfg, 16, 16, {});
    const CostReport compressed = analytic_cost(cfg, 16, 16, schedule);
    CHECK(compressed.total_macs < base.total_macs);

    // with zero vision tokens the schedule changes nothing
    const CostReport none_base = analytic_cost(cfg, 0, 16, {});
    const CostReport none_sched = analytic_cost(cfg, 0, 16, schedule);
    CHECK(none_base.total_macs == none_sched.total_macs);
}

TEST_CASE("zero frames cost equals the instruction-only baseline") {
    const ModelConfig cfg = pattern_config("MAM");
    const CostReport r = analytic_cost(cfg, 0, 16, {});
    for (std::size_t t : r.token_trajectory) CHECK(t == 8 + 16);
    const CostReport again = analytic_cost(cfg, 0, 999, {});
    CHECK(r.total_macs == again.total_macs);
}

TEST_CASE("mamba MAC term is linear in T") {
    const ModelConfig cfg = pattern_config("M");
    const CostReport a = analytic_cost(cfg, 2, 8, {});
    const CostReport b = analytic_cost(cfg, 2 * (2 * 8) + 3, 8, {});  // t_b = 2 t_a + 24 - 24
    const double per_token_a = a.layers[0].macs / a.layers[0].tokens;
    const double per_token_b = b.layers[0].macs / b.layers[0].tokens;
    CHECK(per_token_a == doctest::Approx(per_token_b));
}

TEST_CASE("analytic trajectory matches the forward-pass captured counts") {
    const ModelConfig cfg = pattern_config("MMAMMAMM");
    const CompressionSchedule schedule = parse_schedule("uni_1_0.5-attn_5_0.9");
    const Model model(cfg);
    const TokenSequence seq = build_synthetic_sequence(model, 4, 8, 8, 16, cfg.seed);

    ForwardOptions opts;
    opts.schedule = &schedule;
    opts.strict = false;
    const ForwardResult fwd = model.forward(seq, opts);

    const CostReport cost = analytic_cost(cfg, 4, 8, schedule);
    REQUIRE(cost.token_trajectory.size() == fwd.trace.layers.size());
    for (std::size_t l = 0; l < cost.token_trajectory.size(); ++l) {
        CHECK(cost.token_trajectory[l] == fwd.trace.layers[l].counts.total());
    }
    CHECK(cost.peak_kv_rows == fwd.trace.layers[2].counts.total());
}

TEST_CASE("schedule layers out of range are rejected") {
    const ModelConfig cfg = pattern_config("MAM");
    const CompressionSchedule schedule = parse_schedule("uni_99_0.5");
    CHECK_THROWS_AS(analytic_cost(cfg, 2, 4, schedule), Error);
}

TEST_CASE("measured scaling validates repeats and emits both variants") {
    const ModelConfig cfg = pattern_config("MAM");
    CHECK_THROWS_AS(measured_scaling(cfg, {2}, 4, parse_schedule("uni_1_0.5"), 2, 0),
                    Error);

    const std::vector<MeasureRow> rows =
        measured_scaling(cfg, {2, 4}, 4, parse_schedule("uni_1_0.5"), 3, 1);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].variant == "schedule");
    CHECK(rows[1].variant == "none");
    CHECK(rows[0].frames == 2);
    CHECK(rows[2].frames == 4);
    for (const MeasureRow& r : rows) CHECK(r.median_prefill_ms > 0.0);
}

TEST_CASE("log-log slope recovers exact power laws") {
    const std::vector<std::size_t> frames{64, 128, 256, 512};
    std::vector<double> quad, lin;
    for (std::size_t f : frames) {
        quad.push_back(3.0 * static_cast<double>(f) * static_cast<double>(f));
        lin.push_back(0.5 * static_cast<double>(f));
    }
    CHECK(loglog_slope(frames, quad) == doctest::Approx(2.0));
    CHECK(loglog_slope(frames, lin) == doctest::Approx(1.0));
    CHECK_THROWS_AS(loglog_slope({1}, {1.0}), Error);
}

TEST_CASE("cost and measure CSVs carry the documented headers") {
    const ModelConfig cfg = pattern_config("MAM");
    const CostReport r = analytic_cost(cfg, 2, 4, {});
    const std::string cost_path = "cost_test.csv";
    write_cost_csv(cost_path, r);
    {
        std::ifstream in(cost_path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "layer,kind,tokens,macs");
    }
    std::remove(cost_path.c_str());

    const std::vector<MeasureRow> rows =
        measured_scaling(cfg, {2}, 4, {}, 3, 0);
    const std::string measure_path = "measure_test.csv";
    write_measure_csv(measure_path, rows);
    {
        std::ifstream in(measure_path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "frames,total_tokens,variant,median_prefill_ms,mean_decode_step_ms");
    }
    std::remove(measure_path.c_str());
}
