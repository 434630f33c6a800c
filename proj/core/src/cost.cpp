#include "hybridlm/cost.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hybridlm/errors.hpp"
#include "hybridlm/model.hpp"

namespace hybridlm {

CostReport analytic_cost(const ModelConfig& config, std::size_t frames,
                         std::size_t tokens_per_frame,
                         const CompressionSchedule& schedule,
                         std::size_t system_tokens, std::size_t instruction_tokens) {
    config.validate();
    for (const TransferSpec& spec : schedule.specs) {
        if (spec.layer >= config.num_layers()) {
            throw Error("schedule: layer " + std::to_string(spec.layer) +
                        " out of range for " + std::to_string(config.num_layers()) +
                        "-layer stack");
        }
    }

    const double d = static_cast<double>(config.hidden_dim);
    const double n = static_cast<double>(config.ssm_state);
    const double hm = static_cast<double>(config.mamba_heads);

    std::size_t vision = frames * tokens_per_frame;
    std::size_t total = system_tokens + vision + instruction_tokens;

    CostReport report;
    for (const LayerSpec& spec : config.layers) {
        if (const TransferSpec* ts = schedule.at_layer(spec.index)) {
            const std::size_t dropped = drop_count(ts->rate, vision);
            vision -= dropped;
            total -= dropped;
        }
        const double t = static_cast<double>(total);
        LayerCost cost;
        cost.index = spec.index;
        cost.kind = spec.kind;
        cost.tokens = total;
        switch (spec.kind) {
            case LayerKind::Attention:
                cost.macs = 2.0 * t * t * d + 4.0 * t * d * d;
                report.peak_kv_rows = std::max(report.peak_kv_rows, total);
                break;
            case LayerKind::Mamba2:
                cost.macs = t * (hm * d * (1.0 + 2.0 * n) + 3.0 * n * d + d * d);
                report.ssm_state_bytes +=
                    config.mamba_heads * config.ssm_state *
                    (config.hidden_dim / config.mamba_heads) * sizeof(double);
                break;
            case LayerKind::Mlp:
                cost.macs = 8.0 * t * d * d;
                break;
        }
        report.total_macs += cost.macs;
        report.token_trajectory.push_back(total);
        report.layers.push_back(cost);
    }
    return report;
}

std::vector<MeasureRow> measured_scaling(const ModelConfig& config,
                                         const std::vector<std::size_t>& frame_grid,
                                         std::size_t tokens_per_frame,
                                         const CompressionSchedule& schedule,
                                         std::size_t repeats,
                                         std::size_t decode_steps) {
    if (repeats < 3) {
        throw Error("measured_scaling: repeats must be >= 3, got " +
                    std::to_string(repeats));
    }
    const Model model(config);

    std::vector<MeasureRow> rows;
    for (std::size_t frames : frame_grid) {
        const TokenSequence seq = build_synthetic_sequence(
            model, frames, tokens_per_frame, 8, 16, config.seed);

        for (int variant = 0; variant < 2; ++variant) {
            const bool with_schedule = variant == 0 && !schedule.empty();
            if (variant == 0 && schedule.empty()) continue;

            ForwardOptions opts;
            if (with_schedule) opts.schedule = &schedule;
            opts.strict = false;

            std::vector<double> times;
            for (std::size_t r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                (void)model.forward(seq, opts);
                times.push_back(std::chrono::duration<double, std::milli>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count());
            }
            std::sort(times.begin(), times.end());

            MeasureRow row;
            row.frames = frames;
            row.total_tokens = seq.segments.total();
            row.variant = with_schedule ? "schedule" : "none";
            row.median_prefill_ms = times[times.size() / 2];

            if (decode_steps > 0) {
                const GenerateResult gen = model.generate(seq, decode_steps, opts);
                double sum = 0.0;
                for (const DecodeStepStats& s : gen.steps) sum += s.step_ms;
                row.mean_decode_step_ms = sum / static_cast<double>(gen.steps.size());
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_cost_csv(const std::string& path, const CostReport& report) {
    std::ofstream out(path);
    if (!out) throw Error("cost csv: cannot open '" + path + "'");
    out << "layer,kind,tokens,macs\n";
    char buf[128];
    for (const LayerCost& c : report.layers) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%.12g\n", c.index,
                      layer_kind_name(c.kind), c.tokens, c.macs);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "total,,%zu,%.12g\n",
                  report.token_trajectory.empty() ? 0 : report.token_trajectory.back(),
                  report.total_macs);
    out << buf;
}

void write_measure_csv(const std::string& path, const std::vector<MeasureRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("measure csv: cannot open '" + path + "'");
    out << "frames,total_tokens,variant,median_prefill_ms,mean_decode_step_ms\n";
    char buf[160];
    for (const MeasureRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%s,%.6f,%.6f\n", r.frames,
                      r.total_tokens, r.variant.c_str(), r.median_prefill_ms,
                      r.mean_decode_step_ms);
        out << buf;
    }
}

double loglog_slope(const std::vector<std::size_t>& frames,
                    const std::vector<double>& times) {
    if (frames.size() != times.size() || frames.size() < 2) {
        throw Error("loglog_slope: need at least two matching points");
    }
    const std::size_t n = frames.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(static_cast<double>(frames[i]));
        const double y = std::log(times[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    return (n * sxy - sx * sy) / denom;
}

}  // namespace hybridlm
