#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hybridlm/matrix.hpp"

namespace hybridlm {

/// One frame's tokens plus per-token merge weights. A freshly encoded frame
/// has all sizes 1; merging adds sizes, so the total mass stays constant.
struct FrameTokens {
    Matrix tokens;  // count x D
    std::vector<double> sizes;

    std::size_t count() const { return sizes.size(); }
    double total_mass() const;
};

/// Iterative bipartite soft matching down to exactly `target` tokens.
/// Each pass splits the surviving tokens alternately into sets A and B,
/// pairs every A token with its most cosine-similar B token, and merges the
/// r highest-similarity pairs by size-weighted average (r = half the smaller
/// set, capped so the target is not overshot). Surviving tokens keep their
/// original relative order.
FrameTokens tome_merge(const FrameTokens& frame, std::size_t target);

/// As above, additionally reporting which original token indices were merged
/// into each output token (ascending within each group).
FrameTokens tome_merge(const FrameTokens& frame, std::size_t target,
                       std::vector<std::vector<std::size_t>>* groups);

/// Synthetic uncompressed frames (all sizes 1) with the same sinusoidal
/// frame-position tag used for model inputs.
std::vector<FrameTokens> build_synthetic_frames(std::size_t frames,
                                                std::size_t tokens_per_frame,
                                                std::size_t hidden_dim,
                                                std::uint64_t seed);

/// JSONL ingestion, one frame per line:
///   {"frame_index": <int>, "tokens": [[<double>, ...], ...]}
/// Frames are returned sorted by frame_index. Throws Error on malformed
/// lines or inconsistent token widths.
std::vector<FrameTokens> load_frames_jsonl(const std::string& path);

}  // namespace hybridlm
