// Acceptance harness: one self-contained check per release criterion,
// printing a single PASS/FAIL line each. Exits non-zero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "hybridlm/cost.hpp"
#include "hybridlm/errors.hpp"
#include "hybridlm/flow.hpp"
#include "hybridlm/model.hpp"
#include "hybridlm/tome.hpp"

using namespace hybridlm;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool ok, const std::string& detail = "") {
    std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion, name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

ModelConfig make_config(const std::string& pattern, bool mlp, std::size_t d,
                        std::size_t n, std::size_t heads, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.layers = ModelConfig::layers_from_pattern(pattern, mlp);
    cfg.hidden_dim = d;
    cfg.ssm_state = n;
    cfg.attn_heads = heads;
    cfg.mamba_heads = heads;
    cfg.vocab = 64;
    cfg.seed = seed;
    return cfg;
}

SsmStepParams random_ssm_params(std::size_t t, std::size_t heads, std::size_t n,
                                Rng& rng) {
    SsmStepParams p;
    p.heads = heads;
    p.state = n;
    p.decay = Matrix(t, heads);
    for (std::size_t i = 0; i < p.decay.size(); ++i) {
        p.decay.data()[i] = rng.uniform(0.0, 1.0);
    }
    p.b = Matrix::random_init(t, heads * n, rng);
    p.c = Matrix::random_init(t, heads * n, rng);
    return p;
}

// --- criterion 1: Mamba pairwise-score reconstruction ------------------------

void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    Rng rng(1001);
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t t = 1 + rng.below(32);
        const std::size_t heads = 1 + rng.below(2);
        const std::size_t n = 1 + rng.below(8) / heads;
        const std::size_t dh = 1 + rng.below(8) / heads;

        SsmStepParams p = random_ssm_params(t, heads, n, rng);
        const Matrix x = Matrix::random_init(t, heads * dh, rng);
        SsmState state = SsmState::zeros(heads, n, dh);
        const Matrix y = ssm_scan(x, p, state);

        CaptureTrace trace;
        trace.captured = true;
        trace.layers.resize(1);
        trace.layers[0].kind = LayerKind::Mamba2;
        trace.layers[0].ssm_params = p;
        const std::vector<ScoreMatrix> scores = extract_mamba_scores(trace, 0, false);

        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < t; ++i) {
                for (std::size_t c = 0; c < dh; ++c) {
                    double want = 0.0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        want += scores[h].values(i, j) * x(j, h * dh + c);
                    }
                    worst = std::max(worst, std::fabs(want - y(i, h * dh + c)));
                }
            }
        }
    }
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max err %.3g over 100 instances, %.2f s",
                  worst, secs);
    report(1, "Mamba score reconstruction within 1e-9", worst < 1e-9 && secs < 10.0,
           detail);
}

// --- criterion 2: attention M*V recomposition --------------------------------

void criterion_2() {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        ModelConfig cfg = make_config("A", false, 8, 4, 2, seed);
        const Model model(cfg);
        Rng rng(seed * 17);
        const std::size_t frames = 1 + rng.below(4);  // totals stay <= 32
        const TokenSequence seq =
            build_synthetic_sequence(model, frames, 4, 2, 3, seed);

        ForwardOptions opts;
        opts.capture = true;
        const ForwardResult r = model.forward(seq, opts);
        const LayerTrace& lt = r.trace.layers[0];
        for (const ScoreMatrix& sm : extract_attention_scores(r.trace, 0)) {
            const Matrix recon = matmul(sm.values, lt.attn_values[sm.head]);
            for (std::size_t i = 0; i < recon.rows(); ++i) {
                for (std::size_t c = 0; c < recon.cols(); ++c) {
                    worst = std::max(worst, std::fabs(recon(i, c) -
                                                      lt.attn_mix[sm.head](i, c)));
                }
            }
        }
    }
    char detail[96];
    std::snprintf(detail, sizeof(detail), "max err %.3g over 100 instances", worst);
    report(2, "attention score reconstruction within 1e-12", worst < 1e-12, detail);
}

// --- criterion 3: Eq. 3 / Eq. 4 blocking exactness ---------------------------

void criterion_3() {
    bool ok = true;

    TokenSequence toy;
    toy.embeddings = Matrix(3, 16);
    Rng rng(3);
    for (std::size_t i = 0; i < toy.embeddings.size(); ++i) {
        toy.embeddings.data()[i] = rng.uniform(-0.5, 0.5);
    }
    toy.segments.system = {0, 0};
    toy.segments.vision = {0, 1};
    toy.segments.instruction = {1, 2};
    toy.segments.response = {2, 3};

    const double want_v2i[3][3] = {{1, 0, 0}, {0, 1, 0}, {1, 1, 1}};
    const double want_v2r[3][3] = {{1, 0, 0}, {1, 1, 0}, {0, 1, 1}};
    const Matrix v2i = build_blocking_mask(toy, BlockingConfig::Mode::V2I);
    const Matrix v2r = build_blocking_mask(toy, BlockingConfig::Mode::V2R);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            ok = ok && v2i(i, j) == want_v2i[i][j] && v2r(i, j) == want_v2r[i][j];
        }
    }

    // full sequence: blocked (span x span) score entries are exactly zero
    const Model model(make_config("AA", false, 16, 4, 2, 5));
    const TokenSequence seq = build_synthetic_sequence(model, 2, 3, 2, 3, 7);
    BlockingConfig blocking;
    blocking.mode = BlockingConfig::Mode::V2I;
    ForwardOptions opts;
    opts.capture = true;
    opts.blocking = &blocking;
    const ForwardResult r = model.forward(seq, opts);
    for (std::size_t layer = 0; layer < 2; ++layer) {
        for (const ScoreMatrix& sm : extract_attention_scores(r.trace, layer)) {
            for (std::size_t i = seq.segments.instruction.begin;
                 i < seq.segments.instruction.end; ++i) {
                for (std::size_t j = seq.segments.vision.begin;
                     j < seq.segments.vision.end; ++j) {
                    ok = ok && sm.values(i, j) == 0.0;
                }
            }
        }
    }
    report(3, "Eq. 3/4 blocking masks exact on toys and full sequences", ok);
}

// --- criterion 4: gate-zero identity and length law --------------------------

void criterion_4() {
    bool ok = true;
    const Model model(make_config("M", false, 16, 4, 2, 5));
    for (std::size_t t0 = 1; t0 <= 64 && ok; ++t0) {
        const TokenSequence seq = build_synthetic_sequence(model, 1, t0, 2, 3, t0);
        for (int pi = 0; pi <= 10 && ok; ++pi) {
            const double p = pi / 10.0;
            const TransferSpec spec{DropMode::Uniform, 0, p};
            const TokenSequence out =
                apply_transfer(seq, spec, model.transfer_params_for_layer(0));
            const std::size_t td = drop_count(p, t0);
            ok = ok && out.segments.total() == seq.segments.total() - td;
            // non-vision rows bit-identical
            for (std::size_t i = 0; i < seq.segments.system.length(); ++i) {
                for (std::size_t c = 0; c < 16; ++c) {
                    ok = ok && out.embeddings(i, c) == seq.embeddings(i, c);
                }
            }
            for (std::size_t i = 0; i < seq.segments.instruction.length(); ++i) {
                const std::size_t src = seq.segments.instruction.begin + i;
                const std::size_t dst = out.segments.instruction.begin + i;
                for (std::size_t c = 0; c < 16; ++c) {
                    ok = ok && out.embeddings(dst, c) == seq.embeddings(src, c);
                }
            }
        }
    }
    report(4, "gate-zero identity and exact length law over the (p, T0) grid", ok);
}

// --- criterion 5: schedule grammar goldens -----------------------------------

void criterion_5() {
    bool ok = true;
    const CompressionSchedule s = parse_schedule("uni_7_0.5-attn_39_0.9");
    ok = ok && s.specs.size() == 2;
    ok = ok && s.specs[0].mode == DropMode::Uniform && s.specs[0].layer == 7 &&
         s.specs[0].rate == 0.5;
    ok = ok && s.specs[1].mode == DropMode::Attention && s.specs[1].layer == 39 &&
         s.specs[1].rate == 0.9;

    struct Case {
        const char* text;
        ScheduleError::Kind kind;
    };
    const Case cases[] = {
        {"uni_7_1.5", ScheduleError::Kind::RateRange},
        {"attn_3_2", ScheduleError::Kind::RateRange},
        {"xyz_1_0.5", ScheduleError::Kind::UnknownMode},
        {"_1_0.5", ScheduleError::Kind::UnknownMode},
        {"uni_a_0.5", ScheduleError::Kind::Malformed},
        {"uni_1", ScheduleError::Kind::Malformed},
        {"uni_1_0.5_9", ScheduleError::Kind::Malformed},
        {"uni_1_zz", ScheduleError::Kind::Malformed},
        {"uni_5_0.5-uni_3_0.5", ScheduleError::Kind::LayerOrder},
        {"uni_5_0.5-uni_5_0.5", ScheduleError::Kind::LayerOrder},
    };
    for (const Case& c : cases) {
        bool threw_right = false;
        try {
            parse_schedule(c.text);
        } catch (const ScheduleError& e) {
            threw_right = e.kind() == c.kind;
        }
        ok = ok && threw_right;
    }
    report(5, "schedule grammar goldens and 10 malformed-string error classes", ok);
}

// --- criterion 6: causality and chunked-scan equivalence ---------------------

void criterion_6() {
    bool ok = true;
    Rng rng(6001);
    double worst_chunk = 0.0;

    for (int inst = 0; inst < 50 && ok; ++inst) {
        // chunked-scan equivalence
        const std::size_t t = 2 + rng.below(14);
        const std::size_t heads = 1 + rng.below(2);
        const std::size_t n = 1 + rng.below(4);
        const std::size_t dh = 1 + rng.below(4);
        SsmStepParams p = random_ssm_params(t, heads, n, rng);
        const Matrix x = Matrix::random_init(t, heads * dh, rng);

        SsmState whole = SsmState::zeros(heads, n, dh);
        const Matrix y = ssm_scan(x, p, whole);

        const std::size_t split = 1 + rng.below(t - 1);
        auto slice = [&](const Matrix& m, std::size_t b, std::size_t e) {
            Matrix out(e - b, m.cols());
            for (std::size_t i = b; i < e; ++i) {
                for (std::size_t j = 0; j < m.cols(); ++j) out(i - b, j) = m(i, j);
            }
            return out;
        };
        SsmStepParams p1{heads, n, slice(p.decay, 0, split), slice(p.b, 0, split),
                         slice(p.c, 0, split)};
        SsmStepParams p2{heads, n, slice(p.decay, split, t), slice(p.b, split, t),
                         slice(p.c, split, t)};
        SsmState carried = SsmState::zeros(heads, n, dh);
        const Matrix y1 = ssm_scan(slice(x, 0, split), p1, carried);
        const Matrix y2 = ssm_scan(slice(x, split, t), p2, carried);
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < heads * dh; ++j) {
                const double got = i < split ? y1(i, j) : y2(i - split, j);
                worst_chunk = std::max(worst_chunk, std::fabs(got - y(i, j)));
            }
        }

        // causality through the full hybrid stack
        const Model model(make_config("MAM", true, 16, 4, 2, 3));
        const TokenSequence seq = build_synthetic_sequence(model, 1, 3, 2, 3, inst);
        ForwardOptions opts;
        opts.capture = true;
        const ForwardResult base = model.forward(seq, opts);
        const std::size_t pos = 1 + rng.below(seq.segments.total() - 1);
        TokenSequence perturbed = seq;
        for (std::size_t c = 0; c < 16; ++c) {
            perturbed.embeddings(pos, c) += rng.uniform(-1.0, 1.0);
        }
        const ForwardResult got = model.forward(perturbed, opts);
        for (std::size_t i = 0; i < pos; ++i) {
            for (std::size_t c = 0; c < 16; ++c) {
                ok = ok && got.trace.final_hidden(i, c) == base.trace.final_hidden(i, c);
            }
        }
    }
    ok = ok && worst_chunk <= 1e-12;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "max chunk err %.3g", worst_chunk);
    report(6, "exact causality and chunked-scan equivalence over 50 instances", ok,
           detail);
}

// --- criterion 7: cache asymmetry over a 64-step generate --------------------

void criterion_7() {
    const Model model(make_config("MAM", true, 16, 4, 2, 3));
    const TokenSequence seq = build_synthetic_sequence(model, 1, 2, 2, 2, 1);
    const GenerateResult r = model.generate(seq, 64);

    bool ok = r.steps.size() == 64;
    const std::size_t t0 = seq.segments.total();
    for (std::size_t s = 0; s < r.steps.size() && ok; ++s) {
        for (std::size_t rows : r.steps[s].kv_rows) ok = ok && rows == t0 + s + 1;
        ok = ok && r.steps[s].ssm_state_bytes == r.steps[0].ssm_state_bytes;
    }
    ok = ok && !r.steps.empty() &&
         r.steps.back().kv_rows.front() == t0 + 64;
    report(7, "KV rows grow by exactly 64 while SSM state bytes stay constant", ok);
}

// --- criterion 8: redundancy sweep sanity ------------------------------------

void criterion_8() {
    const Model model(make_config("MAM", true, 16, 4, 2, 3));
    const TokenSequence seq = build_synthetic_sequence(model, 2, 4, 2, 3, 19);
    const std::size_t last = model.config().num_layers() - 1;

    bool ok = true;
    const std::vector<SweepRow> rows =
        redundancy_sweep(model, seq, {0, last}, {0.0, 0.5, 1.0}, DropMode::Uniform);
    for (const SweepRow& r : rows) {
        if (r.rate == 0.0) {
            ok = ok && r.divergence_logits == 0.0 && r.divergence_hidden == 0.0;
        }
        ok = ok && std::isfinite(r.divergence_logits);
    }

    // dropping every vision token at the deepest layer must still complete
    CompressionSchedule full_drop;
    full_drop.specs.push_back({DropMode::Uniform, last, 1.0});
    ForwardOptions opts;
    opts.schedule = &full_drop;
    opts.pure_drop = true;
    const ForwardResult r = model.forward(seq, opts);
    ok = ok && r.trace.layers[last].counts.vision == 0;
    report(8, "sweep sanity: zero-rate rows exact, full drop at depth completes", ok);
}

// --- criterion 9: efficiency direction at the large grid point ---------------

void criterion_9() {
    const auto start = std::chrono::steady_clock::now();
    const ModelConfig bench = make_config("MMAMMMMM", false, 16, 8, 2, 1);
    const CompressionSchedule schedule = parse_schedule("uni_1_0.5-attn_5_0.9");

    const CostReport base = analytic_cost(bench, 2048, 16, {});
    const CostReport compressed = analytic_cost(bench, 2048, 16, schedule);
    bool ok = compressed.total_macs < base.total_macs;

    const std::vector<MeasureRow> rows =
        measured_scaling(bench, {2048}, 16, schedule, 3, 0);
    double with = -1.0, without = -1.0;
    for (const MeasureRow& r : rows) {
        (r.variant == "schedule" ? with : without) = r.median_prefill_ms;
    }
    ok = ok && with > 0.0 && without > 0.0 && with < without;

    const ModelConfig mamba_only = make_config("MMMMMMMM", false, 16, 8, 2, 1);
    const std::vector<MeasureRow> grid =
        measured_scaling(mamba_only, {256, 512, 1024}, 16, {}, 3, 0);
    std::vector<std::size_t> frames;
    std::vector<double> times;
    for (const MeasureRow& r : grid) {
        frames.push_back(r.frames);
        times.push_back(r.median_prefill_ms);
    }
    const double slope = loglog_slope(frames, times);
    ok = ok && slope < 1.5;

    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    char detail[192];
    std::snprintf(detail, sizeof(detail),
                  "MACs %.4g < %.4g; prefill %.0f ms < %.0f ms; slope %.2f; %.0f s",
                  compressed.total_macs, base.total_macs, with, without, slope, secs);
    report(9, "compression lowers MACs and measured prefill; mamba slope < 1.5",
           ok && secs < 300.0, detail);
}

// --- criterion 10: ToMe budget -----------------------------------------------

void criterion_10() {
    FrameTokens frame;
    Rng rng(64);
    frame.tokens = Matrix(64, 64);
    for (std::size_t i = 0; i < frame.tokens.size(); ++i) {
        frame.tokens.data()[i] = rng.uniform(-1.0, 1.0);
    }
    frame.sizes.assign(64, 1.0);

    std::vector<std::vector<std::size_t>> groups;
    const FrameTokens out = tome_merge(frame, 16, &groups);

    bool ok = out.count() == 16 && groups.size() == 16;
    ok = ok && std::fabs(out.total_mass() - 64.0) < 1e-12;
    std::size_t covered = 0;
    for (std::size_t g = 0; g < groups.size() && ok; ++g) {
        covered += groups[g].size();
        double mass = 0.0;
        std::vector<double> mean(64, 0.0);
        for (std::size_t idx : groups[g]) {
            mass += frame.sizes[idx];
            for (std::size_t c = 0; c < 64; ++c) {
                mean[c] += frame.sizes[idx] * frame.tokens(idx, c);
            }
        }
        ok = ok && std::fabs(out.sizes[g] - mass) < 1e-12;
        for (std::size_t c = 0; c < 64; ++c) {
            ok = ok && std::fabs(out.tokens(g, c) - mean[c] / mass) < 1e-12;
        }
    }
    ok = ok && covered == 64;
    report(10, "ToMe reaches the 16-token budget with mass conserved (group oracle)",
           ok);
}

// --- criterion 11: category statistics vs. double-loop oracle ----------------

void criterion_11() {
    SegmentMap segs;
    segs.system = {0, 0};
    segs.vision = {0, 2};
    segs.instruction = {2, 3};
    segs.response = {3, 4};

    ScoreMatrix sm{0, 0, Matrix(4, 4)};
    const double rows[4][4] = {{1.0, 0, 0, 0},
                               {0.6, 0.4, 0, 0},
                               {0.1, 0.2, 0.7, 0},
                               {0.0, 0.0, 0.5, 0.5}};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) sm.values(i, j) = rows[i][j];
    }
    const CategoryStats stats = category_attention({sm}, segs, LayerKind::Attention);

    // independent double loop with the attending-count denominator rule
    auto category = [&](std::size_t pos) -> int {
        if (segs.vision.contains(pos)) return 0;
        if (segs.instruction.contains(pos)) return 1;
        if (segs.response.contains(pos)) return 2;
        return -1;
    };
    bool ok = true;
    for (int src = 0; src < 3; ++src) {
        for (int dst = 0; dst < 3; ++dst) {
            double sum = 0.0;
            std::size_t attending = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                if (category(i) != src) continue;
                double row_sum = 0.0;
                for (std::size_t j = 0; j < 4; ++j) {
                    if (category(j) == dst) row_sum += rows[i][j];
                }
                sum += row_sum;
                if (row_sum > 0.0) ++attending;  // masked/zero rows excluded
            }
            const auto& got = stats.pair[src][dst];
            if (attending == 0) {
                ok = ok && !got.has_value();
            } else {
                ok = ok && got.has_value() && *got == sum / attending;
            }
        }
    }
    // the response token reaches no vision token, so that pair must be absent
    ok = ok && !stats.pair[2][0].has_value();
    report(11, "category statistics equal the double-loop oracle exactly", ok);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    if (failures > 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all 11 criteria passed\n");
    return 0;
}
