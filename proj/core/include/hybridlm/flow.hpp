#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hybridlm/model.hpp"

namespace hybridlm {

/// Per-layer, per-head lower-triangular scores, shared between attention
/// layers (softmax weights, rows sum to 1 over unmasked entries) and Mamba
/// layers (|C_i . (prod A) B_j| products).
struct ScoreMatrix {
    std::size_t layer = 0;
    std::size_t head = 0;
    Matrix values;  // T x T, zero above the diagonal
};

/// Softmax weight matrices actually used in the forward pass at `layer`.
/// Requires a capture-enabled trace and an attention layer.
std::vector<ScoreMatrix> extract_attention_scores(const CaptureTrace& trace,
                                                  std::size_t layer);

/// Mamba pairwise scores M'_{i,j} = (prod_{k=j+1}^{i} a_k) (C_i . B_j),
/// computed per head from the captured per-step parameters. Reported as
/// absolute values by default; pass absolute=false for the raw signed scores.
std::vector<ScoreMatrix> extract_mamba_scores(const CaptureTrace& trace,
                                              std::size_t layer,
                                              bool absolute = true);

enum class Category : std::size_t { Vision = 0, Instruction = 1, Response = 2 };

const char* category_name(Category c);

/// Mean scores between token categories. A pair is absent (not zero) when
/// the source category is empty or no source token reaches the target with
/// non-zero weight; the per-target overall mean is the arithmetic mean of
/// the three source categories and is present only when all three are.
struct CategoryStats {
    std::array<std::array<std::optional<double>, 3>, 3> pair;  // [source][target]
    std::array<std::optional<double>, 3> overall;              // [target]
};

/// Head-averaged category statistics. Mamba-layer scores are L1-normalized
/// per row per head before head averaging; attention rows already sum to 1.
CategoryStats category_attention(const std::vector<ScoreMatrix>& heads,
                                 const SegmentMap& segs, LayerKind kind);

struct SweepRow {
    std::size_t layer = 0;
    double rate = 0.0;
    DropMode mode = DropMode::Uniform;
    double divergence_logits = 0.0;  // max-abs vs. the unmodified run
    double divergence_hidden = 0.0;
    double cosine_logits = 0.0;  // cosine distance vs. the unmodified run
    double cosine_hidden = 0.0;
};

/// Drop-only sweep over (layer, rate) grid points: each run drops vision
/// tokens at one layer without any information transfer, and is compared to
/// the unmodified run on next-token logits and the final instruction-token
/// activation. Attention-guided drops with no preceding attention layer fall
/// back to uniform.
std::vector<SweepRow> redundancy_sweep(const Model& model, const TokenSequence& seq,
                                       const std::vector<std::size_t>& layers,
                                       const std::vector<double>& rates,
                                       DropMode mode);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

/// Central finite-difference sensitivity of probe-span final activations to
/// random perturbation directions in target-span inputs: mean over
/// `directions` of max-abs(f(x+eps u) - f(x-eps u)) / (2 eps).
/// Returns 0 for eps == 0.
double perturbation_flow(const Model& model, const TokenSequence& seq, Span target,
                         Span probe, const BlockingConfig* blocking = nullptr,
                         double eps = 1e-4, std::size_t directions = 4,
                         std::uint64_t seed = 0);

/// T x T score values as CSV plus a sidecar listing segment boundaries.
void write_score_csv(const std::string& path, const ScoreMatrix& scores);
void write_segments_sidecar(const std::string& path, const SegmentMap& segs);

}  // namespace hybridlm
