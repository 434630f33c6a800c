#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hybridlm/matrix.hpp"
#include "hybridlm/rng.hpp"
#include "hybridlm/sequence.hpp"

namespace hybridlm {

enum class DropMode { Uniform, Attention };

const char* drop_mode_name(DropMode m);

/// One in-model compression step: drop a fraction p of vision tokens before
/// layer `layer`, transferring retained-vision information into instruction
/// tokens via gated cross-attention.
struct TransferSpec {
    DropMode mode;
    std::size_t layer;
    double rate;  // p in [0, 1]
};

struct CompressionSchedule {
    std::vector<TransferSpec> specs;  // strictly increasing layer indices
    bool empty() const { return specs.empty(); }
    const TransferSpec* at_layer(std::size_t layer) const;
};

/// Grammar: spec ('-' spec)*, spec = mode '_' layer '_' rate,
/// mode in {uni, attn}. "none" or "" parses to the empty schedule.
/// Throws ScheduleError with the offending segment in the message.
CompressionSchedule parse_schedule(const std::string& text);

std::string schedule_to_string(const CompressionSchedule& schedule);

/// Number of tokens dropped at rate p from t0 tokens: round(p*t0),
/// half away from zero.
std::size_t drop_count(double rate, std::size_t t0);

struct DropResult {
    std::vector<std::size_t> kept;     // indices into [0, t0), ascending
    std::vector<std::size_t> dropped;  // ascending
};

/// The dropping operator over vision-token indices [0, t0).
/// Uniform mode keeps {floor(i*t0/(t0-td)) : i}; attention mode drops the td
/// lowest-score tokens, ties broken toward dropping the later index.
/// `scores` is required for attention mode (one score per vision token).
DropResult token_drop(std::size_t t0, double rate, DropMode mode,
                      const std::vector<double>* scores = nullptr);

/// Which side of the drop feeds the cross-attention keys/values. The default
/// attends to the retained subsequence; Dropped supports the alternative
/// reading where the removed tokens are the transfer source.
enum class TransferSource { Retained, Dropped };

struct TransferParams {
    Matrix wq, wk, wv, wo;  // D x D each
    std::size_t heads = 1;
    double alpha = 0.0;  // gate, used as tanh(alpha); initialized to 0

    static TransferParams init(std::size_t hidden_dim, std::size_t heads, Rng& rng);
};

/// Applies one compression step to a sequence: drops vision tokens per the
/// spec, updates instruction tokens with tanh(alpha)-gated cross-attention
/// over the source vision tokens, and rebuilds the segment map. Response and
/// system rows are untouched; with alpha == 0 every non-vision row is
/// bit-identical. With an empty source set the cross-attention is skipped.
TokenSequence apply_transfer(const TokenSequence& seq, const TransferSpec& spec,
                             const TransferParams& params,
                             const std::vector<double>* attn_scores = nullptr,
                             TransferSource source = TransferSource::Retained);

/// Drop-only variant (no information transfer), used by redundancy sweeps.
TokenSequence apply_drop_only(const TokenSequence& seq, const TransferSpec& spec,
                              const std::vector<double>* attn_scores = nullptr);

}  // namespace hybridlm
