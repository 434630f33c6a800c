#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "hybridlm/config.hpp"
#include "hybridlm/matrix.hpp"
#include "hybridlm/sequence.hpp"
#include "hybridlm/transfer.hpp"

namespace hybridlm {

/// Per-step selective-SSM parameters for a whole block of T steps.
/// decay is T x heads (scalar per head, in (0,1)); b and c are
/// T x (heads * state), one state-size vector per head per step.
struct SsmStepParams {
    std::size_t heads = 0;
    std::size_t state = 0;
    Matrix decay, b, c;
};

/// Recurrent hidden memory of one Mamba-2 layer: heads * state * head_dim
/// values. Size is independent of sequence length.
struct SsmState {
    std::size_t heads = 0, state = 0, head_dim = 0;
    std::vector<double> h;

    static SsmState zeros(std::size_t heads, std::size_t state, std::size_t head_dim);
    std::size_t bytes() const { return h.size() * sizeof(double); }
    double* head(std::size_t hd) { return h.data() + hd * state * head_dim; }
};

/// y_t = C_t^T h_t with h_t = a_t h_{t-1} + B_t x_t^T (outer product per
/// head over the head's slice of x). The state carries across calls, so
/// scanning a sequence in chunks equals scanning it whole.
Matrix ssm_scan(const Matrix& x, const SsmStepParams& params, SsmState& state);

/// Stored K/V rows of one attention layer, one row per processed position,
/// with the segment label each position had when it was cached.
struct KvCache {
    std::size_t dim = 0;
    std::vector<double> k, v;
    std::vector<SegKind> labels;

    std::size_t rows() const { return labels.size(); }
    void append(const double* krow, const double* vrow, SegKind label);
    const double* k_row(std::size_t i) const { return k.data() + i * dim; }
    const double* v_row(std::size_t i) const { return v.data() + i * dim; }
};

/// Information-blocking configuration (attention layers only). Applies to
/// every attention layer with index >= start_layer, or to exactly
/// only_layer when set.
struct BlockingConfig {
    enum class Mode { V2I, V2R };

    Mode mode = Mode::V2I;
    std::size_t start_layer = 0;
    std::optional<std::size_t> only_layer;
    bool strict = false;  // error if only_layer names a non-attention layer

    bool applies_to(std::size_t layer) const {
        if (only_layer) return layer == *only_layer;
        return layer >= start_layer;
    }
    bool blocks(SegKind query, SegKind key) const {
        if (key != SegKind::Vision) return false;
        return mode == Mode::V2I ? query == SegKind::Instruction
                                 : query == SegKind::Response;
    }
};

/// Causal T x T 0/1 mask for the given sequence with the blocking pattern
/// applied: (instruction query, vision key) entries zeroed for V2I,
/// (response query, vision key) for V2R.
Matrix build_blocking_mask(const TokenSequence& seq, BlockingConfig::Mode mode);

struct LayerTrace {
    LayerKind kind = LayerKind::Mlp;
    SegCounts counts;  // token counts entering the layer, after any compression at it

    // filled only when capture is on
    Matrix input;  // residual-stream input, T x D

    // attention layers
    std::vector<Matrix> attn_weights;  // per head, T x T softmax weights
    std::vector<Matrix> attn_values;   // per head, T x head_dim
    std::vector<Matrix> attn_mix;      // per head, T x head_dim, pre output projection

    // Mamba-2 layers
    SsmStepParams ssm_params;
    Matrix ssm_input;   // post-norm layer input, T x D
    Matrix ssm_output;  // scan output, pre output projection, T x D
};

struct CaptureTrace {
    std::vector<LayerTrace> layers;
    SegmentMap final_segments;
    Matrix final_hidden;  // post final-norm, capture only
    bool captured = false;
};

struct ForwardOptions {
    const CompressionSchedule* schedule = nullptr;
    const BlockingConfig* blocking = nullptr;
    bool capture = false;
    bool all_logits = false;  // emit T x V logits instead of the last row only
    bool strict = true;       // attn-mode drop with no preceding attention scores errors
    bool pure_drop = false;   // schedule drops tokens without cross-attention transfer
};

struct ForwardResult {
    Matrix logits;  // 1 x V (last position), or T x V with all_logits
    CaptureTrace trace;
    // post final-norm activation of the last instruction token (empty if none)
    std::vector<double> final_instruction_hidden;
};

/// Mutable per-run sequence state owned by one forward/generate call.
struct RunState {
    std::vector<SsmState> ssm;  // indexed by layer, empty for non-Mamba layers
    std::vector<KvCache> kv;    // indexed by layer, empty for non-attention layers
    std::size_t positions = 0;  // residual-stream positions processed so far

    // head-averaged attention row of the last instruction token from the most
    // recent attention layer, plus the sequence length it was computed at
    std::vector<double> last_instruction_attn;
    std::size_t last_instruction_attn_len = 0;

    std::size_t ssm_state_bytes() const;
    std::vector<std::size_t> kv_rows_per_attention_layer() const;
};

struct DecodeStepStats {
    std::size_t token_id = 0;
    std::vector<std::size_t> kv_rows;  // per attention layer, after the step
    std::size_t ssm_state_bytes = 0;
    double step_ms = 0.0;
};

struct GenerateResult {
    std::vector<std::size_t> tokens;
    std::vector<DecodeStepStats> steps;
    ForwardResult prefill;
};

/// The hybrid stack. Weights are built deterministically from the config
/// seed at construction; a constructed model is immutable and safe for
/// concurrent read-only use. Each forward/generate call owns its RunState.
class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const Matrix& embedding() const { return embedding_; }
    Matrix embed(const std::vector<std::size_t>& ids) const;

    RunState fresh_state() const;

    ForwardResult forward(const TokenSequence& seq, const ForwardOptions& opts = {}) const;
    ForwardResult forward(const TokenSequence& seq, const ForwardOptions& opts,
                          RunState& state) const;

    /// Greedy argmax decode of `steps` response tokens after prefilling seq.
    GenerateResult generate(const TokenSequence& seq, std::size_t steps,
                            const ForwardOptions& opts = {}) const;

    /// Cross-attention projections and gate for a transfer at `layer`,
    /// derived deterministically from the model seed. Gate starts at 0.
    TransferParams transfer_params_for_layer(std::size_t layer) const;

    /// Logits for the given hidden rows through the tied output embedding.
    Matrix output_logits(const Matrix& hidden) const;

private:
    struct AttentionWeights {
        Matrix wq, wk, wv, wo;
        std::vector<double> norm_gain;
    };
    struct MambaWeights {
        Matrix decay_w;  // D x heads
        std::vector<double> decay_b;
        Matrix b_proj, c_proj;  // D x (heads * state)
        Matrix out_proj;        // D x D
        std::vector<double> norm_gain;
    };
    struct MlpWeights {
        Matrix w1, w2;  // D x 4D, 4D x D
        std::vector<double> norm_gain;
    };

    SsmStepParams mamba_params(const MambaWeights& w, const Matrix& x_norm) const;
    void attention_block(std::size_t layer, const AttentionWeights& w, Matrix& x,
                         const std::vector<SegKind>& block_labels, KvCache& cache,
                         const BlockingConfig* blocking, LayerTrace* capture,
                         std::vector<double>* instr_row,
                         std::size_t instr_query) const;

    ModelConfig cfg_;
    Matrix embedding_;  // vocab x D, tied input/output
    std::vector<AttentionWeights> attn_;  // sparse, indexed by layer
    std::vector<MambaWeights> mamba_;
    std::vector<MlpWeights> mlp_;
    std::vector<double> final_norm_gain_;
};

/// Seeded synthetic input: BOS plus random system token ids, per-frame
/// vision embeddings with a sinusoidal frame-position tag, random
/// instruction token ids, empty response span.
TokenSequence build_synthetic_sequence(const Model& model, std::size_t frames,
                                       std::size_t tokens_per_frame,
                                       std::size_t system_tokens,
                                       std::size_t instruction_tokens,
                                       std::uint64_t seed);

}  // namespace hybridlm
