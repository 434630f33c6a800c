#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hybridlm/config.hpp"
#include "hybridlm/transfer.hpp"

namespace hybridlm {

/// Multiply-accumulate counting convention, fixed across the project:
///   attention layer at length T:  2*T^2*D (scores + value mix, full T^2,
///                                 causality not discounted) + 4*T*D^2
///                                 (Q/K/V/output projections)
///   Mamba-2 layer at length T:    T * (Hm*D*(1 + 2*N) per-step parameter
///                                 generation + 3*N*D state update and
///                                 readout + D^2 output projection)
///   MLP layer at length T:        8*T*D^2 (two projections, hidden 4*D)
/// Normalization, softmax exponentials and activation functions are not
/// counted.
struct LayerCost {
    std::size_t index = 0;
    LayerKind kind = LayerKind::Mlp;
    std::size_t tokens = 0;  // sequence length entering the layer
    double macs = 0.0;
};

struct CostReport {
    std::vector<LayerCost> layers;
    double total_macs = 0.0;
    std::size_t peak_kv_rows = 0;        // max over attention layers
    std::size_t ssm_state_bytes = 0;     // total across Mamba layers, T-independent
    std::vector<std::size_t> token_trajectory;  // per-layer T (same as layers[i].tokens)
    double prefill_ms = 0.0;                    // filled by measured runs only
    std::vector<double> decode_step_ms;
};

/// Closed-form cost of one configuration: the token trajectory follows the
/// schedule's length law (T_d = round(p * T0) vision tokens dropped before
/// each scheduled layer); no model is executed.
CostReport analytic_cost(const ModelConfig& config, std::size_t frames,
                         std::size_t tokens_per_frame,
                         const CompressionSchedule& schedule,
                         std::size_t system_tokens = 8,
                         std::size_t instruction_tokens = 16);

struct MeasureRow {
    std::size_t frames = 0;
    std::size_t total_tokens = 0;
    std::string variant;  // "schedule" or "none"
    double median_prefill_ms = 0.0;
    double mean_decode_step_ms = 0.0;
};

/// Wall-clock prefill over a frame grid, with and without the schedule.
/// Median of `repeats` runs (repeats >= 3); decode timing from a short
/// greedy generation after one prefill per grid point.
std::vector<MeasureRow> measured_scaling(const ModelConfig& config,
                                         const std::vector<std::size_t>& frame_grid,
                                         std::size_t tokens_per_frame,
                                         const CompressionSchedule& schedule,
                                         std::size_t repeats,
                                         std::size_t decode_steps = 4);

void write_cost_csv(const std::string& path, const CostReport& report);
void write_measure_csv(const std::string& path, const std::vector<MeasureRow>& rows);

/// Least-squares slope of log(time) vs log(frames) over matching rows.
double loglog_slope(const std::vector<std::size_t>& frames,
                    const std::vector<double>& times);

}  // namespace hybridlm
