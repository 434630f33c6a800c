#include "hybridlm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "hybridlm/errors.hpp"

namespace hybridlm {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double silu(double v) { return v * sigmoid(v); }

void add_inplace(Matrix& x, const Matrix& delta) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += delta.data()[i];
}

}  // namespace

SsmState SsmState::zeros(std::size_t heads, std::size_t state, std::size_t head_dim) {
    SsmState s;
    s.heads = heads;
    s.state = state;
    s.head_dim = head_dim;
    s.h.assign(heads * state * head_dim, 0.0);
    return s;
}

Matrix ssm_scan(const Matrix& x, const SsmStepParams& params, SsmState& state) {
    const std::size_t t_len = x.rows();
    const std::size_t heads = params.heads;
    const std::size_t n = params.state;
    if (heads == 0 || x.cols() % heads != 0) {
        throw ShapeError("ssm_scan: input width " + std::to_string(x.cols()) +
                         " not divisible by " + std::to_string(heads) + " heads");
    }
    const std::size_t dh = x.cols() / heads;
    if (params.decay.rows() != t_len || params.decay.cols() != heads ||
        params.b.rows() != t_len || params.b.cols() != heads * n ||
        params.c.rows() != t_len || params.c.cols() != heads * n) {
        throw ShapeError("ssm_scan: parameter shapes do not match input T=" +
                         std::to_string(t_len) + ", heads=" + std::to_string(heads) +
                         ", state=" + std::to_string(n));
    }
    if (state.heads != heads || state.state != n || state.head_dim != dh) {
        throw ShapeError("ssm_scan: carried state shape does not match parameters");
    }

    Matrix y(t_len, x.cols());
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const double a = params.decay(t, hd);
            double* hs = state.head(hd);
            const double* xt = x.row(t) + hd * dh;
            const double* bt = params.b.row(t) + hd * n;
            const double* ct = params.c.row(t) + hd * n;
            double* yt = y.row(t) + hd * dh;
            for (std::size_t s = 0; s < n; ++s) {
                double* hrow = hs + s * dh;
                const double bs = bt[s];
                const double cs = ct[s];
                for (std::size_t c = 0; c < dh; ++c) {
                    hrow[c] = a * hrow[c] + bs * xt[c];
                    yt[c] += cs * hrow[c];
                }
            }
        }
    }
    return y;
}

void KvCache::append(const double* krow, const double* vrow, SegKind label) {
    k.insert(k.end(), krow, krow + dim);
    v.insert(v.end(), vrow, vrow + dim);
    labels.push_back(label);
}

Matrix build_blocking_mask(const TokenSequence& seq, BlockingConfig::Mode mode) {
    const SegmentMap& segs = seq.segments;
    const std::size_t t_len = segs.total();
    const std::vector<SegKind> labels = segment_labels(segs);
    BlockingConfig cfg{mode, 0, std::nullopt, false};

    Matrix mask(t_len, t_len);
    for (std::size_t i = 0; i < t_len; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            mask(i, j) = cfg.blocks(labels[i], labels[j]) ? 0.0 : 1.0;
        }
    }
    return mask;
}

std::size_t RunState::ssm_state_bytes() const {
    std::size_t total = 0;
    for (const SsmState& s : ssm) total += s.bytes();
    return total;
}

std::vector<std::size_t> RunState::kv_rows_per_attention_layer() const {
    std::vector<std::size_t> rows;
    for (const KvCache& c : kv) {
        if (c.dim != 0) rows.push_back(c.rows());
    }
    return rows;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t d = cfg_.hidden_dim;
    Rng rng(cfg_.seed);
    embedding_ = Matrix::random_init(cfg_.vocab, d, rng);

    attn_.resize(cfg_.num_layers());
    mamba_.resize(cfg_.num_layers());
    mlp_.resize(cfg_.num_layers());
    for (const LayerSpec& spec : cfg_.layers) {
        switch (spec.kind) {
            case LayerKind::Attention: {
                AttentionWeights& w = attn_[spec.index];
                w.wq = Matrix::random_init(d, d, rng);
                w.wk = Matrix::random_init(d, d, rng);
                w.wv = Matrix::random_init(d, d, rng);
                w.wo = Matrix::random_init(d, d, rng);
                w.norm_gain.assign(d, 1.0);
                break;
            }
            case LayerKind::Mamba2: {
                MambaWeights& w = mamba_[spec.index];
                const std::size_t hn = cfg_.mamba_heads * cfg_.ssm_state;
                w.decay_w = Matrix::random_init(d, cfg_.mamba_heads, rng);
                w.decay_b.resize(cfg_.mamba_heads);
                for (double& b : w.decay_b) b = rng.uniform(-1.0, 1.0);
                w.b_proj = Matrix::random_init(d, hn, rng);
                w.c_proj = Matrix::random_init(d, hn, rng);
                w.out_proj = Matrix::random_init(d, d, rng);
                w.norm_gain.assign(d, 1.0);
                break;
            }
            case LayerKind::Mlp: {
                MlpWeights& w = mlp_[spec.index];
                w.w1 = Matrix::random_init(d, 4 * d, rng);
                w.w2 = Matrix::random_init(4 * d, d, rng);
                w.norm_gain.assign(d, 1.0);
                break;
            }
        }
    }
    final_norm_gain_.assign(d, 1.0);
}

Matrix Model::embed(const std::vector<std::size_t>& ids) const {
    Matrix out(ids.size(), cfg_.hidden_dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= cfg_.vocab) {
            throw Error("embed: token id " + std::to_string(ids[i]) +
                        " outside vocab " + std::to_string(cfg_.vocab));
        }
        std::copy(embedding_.row(ids[i]), embedding_.row(ids[i]) + cfg_.hidden_dim,
                  out.row(i));
    }
    return out;
}

RunState Model::fresh_state() const {
    RunState state;
    state.ssm.resize(cfg_.num_layers());
    state.kv.resize(cfg_.num_layers());
    const std::size_t dh = cfg_.hidden_dim / cfg_.mamba_heads;
    for (const LayerSpec& spec : cfg_.layers) {
        if (spec.kind == LayerKind::Mamba2) {
            state.ssm[spec.index] =
                SsmState::zeros(cfg_.mamba_heads, cfg_.ssm_state, dh);
        } else if (spec.kind == LayerKind::Attention) {
            state.kv[spec.index].dim = cfg_.hidden_dim;
        }
    }
    return state;
}

TransferParams Model::transfer_params_for_layer(std::size_t layer) const {
    Rng rng(cfg_.seed ^ (0x9e3779b97f4a7c15ULL * (layer + 1)));
    return TransferParams::init(cfg_.hidden_dim, cfg_.attn_heads, rng);
}

Matrix Model::output_logits(const Matrix& hidden) const {
    Matrix logits(hidden.rows(), cfg_.vocab);
    for (std::size_t i = 0; i < hidden.rows(); ++i) {
        const double* hr = hidden.row(i);
        double* lr = logits.row(i);
        for (std::size_t t = 0; t < cfg_.vocab; ++t) {
            lr[t] = dot(hr, embedding_.row(t), cfg_.hidden_dim);
        }
    }
    return logits;
}

SsmStepParams Model::mamba_params(const MambaWeights& w, const Matrix& x_norm) const {
    SsmStepParams p;
    p.heads = cfg_.mamba_heads;
    p.state = cfg_.ssm_state;
    p.decay = matmul(x_norm, w.decay_w);
    for (std::size_t i = 0; i < p.decay.size(); ++i) {
        p.decay.data()[i] =
            sigmoid(p.decay.data()[i] + w.decay_b[i % cfg_.mamba_heads]);
    }
    p.b = matmul(x_norm, w.b_proj);
    p.c = matmul(x_norm, w.c_proj);
    return p;
}

void Model::attention_block(std::size_t layer, const AttentionWeights& w, Matrix& x,
                            const std::vector<SegKind>& block_labels, KvCache& cache,
                            const BlockingConfig* blocking, LayerTrace* capture,
                            std::vector<double>* instr_row,
                            std::size_t instr_query) const {
    const std::size_t t_len = x.rows();
    const std::size_t d = cfg_.hidden_dim;
    const std::size_t heads = cfg_.attn_heads;
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Matrix xn = rms_norm(x, w.norm_gain);
    const Matrix q = matmul(xn, w.wq);
    const Matrix k = matmul(xn, w.wk);
    const Matrix v = matmul(xn, w.wv);

    const std::size_t prev = cache.rows();
    for (std::size_t i = 0; i < t_len; ++i) {
        cache.append(k.row(i), v.row(i), block_labels[i]);
    }
    const std::size_t total = cache.rows();

    const bool blocked_layer = blocking != nullptr && blocking->applies_to(layer);
    if (instr_row != nullptr) instr_row->assign(total, 0.0);

    if (capture != nullptr) {
        capture->attn_weights.assign(heads, Matrix(t_len, total));
        capture->attn_values.assign(heads, Matrix(total, dh));
        capture->attn_mix.assign(heads, Matrix(t_len, dh));
    }

    Matrix mix(t_len, d);
    std::vector<double> weights(total);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        if (capture != nullptr) {
            Matrix& vals = capture->attn_values[h];
            for (std::size_t j = 0; j < total; ++j) {
                std::copy(cache.v_row(j) + off, cache.v_row(j) + off + dh, vals.row(j));
            }
        }
        for (std::size_t i = 0; i < t_len; ++i) {
            const std::size_t gi = prev + i;
            const double* qr = q.row(i) + off;
            double maxv = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= gi; ++j) {
                if (blocked_layer && blocking->blocks(block_labels[i], cache.labels[j])) {
                    weights[j] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                weights[j] = dot(qr, cache.k_row(j) + off, dh) * scale;
                maxv = std::max(maxv, weights[j]);
            }
            if (maxv == -std::numeric_limits<double>::infinity()) {
                throw DegenerateRowError(gi, "attention: fully masked query row " +
                                                 std::to_string(gi));
            }
            double sum = 0.0;
            for (std::size_t j = 0; j <= gi; ++j) {
                if (weights[j] == -std::numeric_limits<double>::infinity()) {
                    weights[j] = 0.0;
                } else {
                    weights[j] = std::exp(weights[j] - maxv);
                    sum += weights[j];
                }
            }
            double* out = mix.row(i) + off;
            for (std::size_t j = 0; j <= gi; ++j) {
                const double wj = weights[j] / sum;
                if (wj == 0.0) continue;
                const double* vr = cache.v_row(j) + off;
                for (std::size_t c = 0; c < dh; ++c) out[c] += wj * vr[c];
            }
            if (capture != nullptr) {
                Matrix& cw = capture->attn_weights[h];
                for (std::size_t j = 0; j <= gi; ++j) cw(i, j) = weights[j] / sum;
                std::copy(out, out + dh, capture->attn_mix[h].row(i));
            }
            if (instr_row != nullptr && gi == instr_query) {
                for (std::size_t j = 0; j <= gi; ++j) {
                    (*instr_row)[j] += weights[j] / sum / static_cast<double>(heads);
                }
            }
        }
    }
    add_inplace(x, matmul(mix, w.wo));
}

namespace {

void validate_forward_inputs(const ModelConfig& cfg, const ForwardOptions& opts) {
    if (opts.schedule != nullptr) {
        for (const TransferSpec& spec : opts.schedule->specs) {
            if (spec.layer >= cfg.num_layers()) {
                throw Error("schedule: layer " + std::to_string(spec.layer) +
                            " out of range for " + std::to_string(cfg.num_layers()) +
                            "-layer stack");
            }
        }
    }
    if (opts.blocking != nullptr) {
        const BlockingConfig& b = *opts.blocking;
        if (cfg.count(LayerKind::Attention) == 0) {
            throw Error("blocking: config has no attention layers");
        }
        if (b.start_layer >= cfg.num_layers()) {
            throw Error("blocking: start layer " + std::to_string(b.start_layer) +
                        " out of range");
        }
        if (b.only_layer) {
            if (*b.only_layer >= cfg.num_layers()) {
                throw Error("blocking: layer " + std::to_string(*b.only_layer) +
                            " out of range");
            }
            if (b.strict && cfg.layers[*b.only_layer].kind != LayerKind::Attention) {
                throw Error("blocking: layer " + std::to_string(*b.only_layer) +
                            " is not an attention layer");
            }
        }
    }
}

}  // namespace

ForwardResult Model::forward(const TokenSequence& seq, const ForwardOptions& opts) const {
    RunState state = fresh_state();
    return forward(seq, opts, state);
}

ForwardResult Model::forward(const TokenSequence& seq, const ForwardOptions& opts,
                             RunState& state) const {
    seq.segments.validate();
    validate_forward_inputs(cfg_, opts);
    if (seq.embeddings.cols() != cfg_.hidden_dim) {
        throw ShapeError("forward: sequence width " +
                         std::to_string(seq.embeddings.cols()) + " vs hidden_dim " +
                         std::to_string(cfg_.hidden_dim));
    }

    Matrix x = seq.embeddings;
    SegmentMap segs = seq.segments;
    std::vector<SegKind> labels = segment_labels(segs);

    ForwardResult result;
    result.trace.captured = opts.capture;
    result.trace.layers.resize(cfg_.num_layers());

    for (const LayerSpec& spec : cfg_.layers) {
        const std::size_t l = spec.index;

        if (opts.schedule != nullptr) {
            if (const TransferSpec* ts = opts.schedule->at_layer(l)) {
                TransferSpec effective = *ts;
                std::vector<double> scores;
                const std::vector<double>* scores_ptr = nullptr;
                if (ts->mode == DropMode::Attention) {
                    if (state.last_instruction_attn_len == segs.total() &&
                        !state.last_instruction_attn.empty()) {
                        scores.assign(
                            state.last_instruction_attn.begin() + segs.vision.begin,
                            state.last_instruction_attn.begin() + segs.vision.end);
                        scores_ptr = &scores;
                    } else if (opts.strict) {
                        throw Error("schedule: attn-mode drop at layer " +
                                    std::to_string(l) +
                                    " has no preceding attention scores");
                    } else {
                        effective.mode = DropMode::Uniform;
                    }
                }
                TokenSequence cur{std::move(x), segs};
                TokenSequence next =
                    opts.pure_drop
                        ? apply_drop_only(cur, effective, scores_ptr)
                        : apply_transfer(cur, effective, transfer_params_for_layer(l),
                                         scores_ptr);
                x = std::move(next.embeddings);
                segs = next.segments;
                labels = segment_labels(segs);
            }
        }

        LayerTrace& lt = result.trace.layers[l];
        lt.kind = spec.kind;
        lt.counts = count_segments(segs);
        if (opts.capture) lt.input = x;
        LayerTrace* cap = opts.capture ? &lt : nullptr;

        switch (spec.kind) {
            case LayerKind::Mamba2: {
                const MambaWeights& w = mamba_[l];
                const Matrix xn = rms_norm(x, w.norm_gain);
                SsmStepParams params = mamba_params(w, xn);
                Matrix y = ssm_scan(xn, params, state.ssm[l]);
                if (cap != nullptr) {
                    cap->ssm_params = params;
                    cap->ssm_input = xn;
                    cap->ssm_output = y;
                }
                add_inplace(x, matmul(y, w.out_proj));
                break;
            }
            case LayerKind::Attention: {
                const bool want_row = !segs.instruction.empty();
                std::vector<double> row;
                attention_block(l, attn_[l], x, labels, state.kv[l], opts.blocking,
                                cap, want_row ? &row : nullptr,
                                want_row ? segs.instruction.end - 1 : 0);
                if (want_row) {
                    state.last_instruction_attn = std::move(row);
                    state.last_instruction_attn_len = segs.total();
                }
                break;
            }
            case LayerKind::Mlp: {
                const MlpWeights& w = mlp_[l];
                const Matrix xn = rms_norm(x, w.norm_gain);
                Matrix hidden = matmul(xn, w.w1);
                for (std::size_t i = 0; i < hidden.size(); ++i) {
                    hidden.data()[i] = silu(hidden.data()[i]);
                }
                add_inplace(x, matmul(hidden, w.w2));
                break;
            }
        }
    }

    const Matrix xf = rms_norm(x, final_norm_gain_);
    if (opts.all_logits) {
        result.logits = output_logits(xf);
    } else {
        Matrix last(1, cfg_.hidden_dim);
        std::copy(xf.row(xf.rows() - 1), xf.row(xf.rows() - 1) + cfg_.hidden_dim,
                  last.row(0));
        result.logits = output_logits(last);
    }
    if (!segs.instruction.empty()) {
        const double* r = xf.row(segs.instruction.end - 1);
        result.final_instruction_hidden.assign(r, r + cfg_.hidden_dim);
    }
    result.trace.final_segments = segs;
    if (opts.capture) result.trace.final_hidden = xf;
    state.positions = segs.total();
    return result;
}

GenerateResult Model::generate(const TokenSequence& seq, std::size_t steps,
                               const ForwardOptions& opts) const {
    if (steps < 1) throw Error("generate: steps must be >= 1");

    RunState state = fresh_state();
    GenerateResult result;
    result.prefill = forward(seq, opts, state);

    const std::size_t d = cfg_.hidden_dim;
    Matrix logits = result.prefill.logits;  // 1 x V unless all_logits
    for (std::size_t step = 0; step < steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const double* lr = logits.row(logits.rows() - 1);
        std::size_t best = 0;
        for (std::size_t t = 1; t < cfg_.vocab; ++t) {
            if (lr[t] > lr[best]) best = t;
        }
        result.tokens.push_back(best);

        Matrix x = embed({best});
        for (const LayerSpec& spec : cfg_.layers) {
            const std::size_t l = spec.index;
            switch (spec.kind) {
                case LayerKind::Mamba2: {
                    const MambaWeights& w = mamba_[l];
                    const Matrix xn = rms_norm(x, w.norm_gain);
                    SsmStepParams params = mamba_params(w, xn);
                    Matrix y = ssm_scan(xn, params, state.ssm[l]);
                    add_inplace(x, matmul(y, w.out_proj));
                    break;
                }
                case LayerKind::Attention: {
                    std::vector<SegKind> label{SegKind::Response};
                    attention_block(l, attn_[l], x, label, state.kv[l], opts.blocking,
                                    nullptr, nullptr, 0);
                    break;
                }
                case LayerKind::Mlp: {
                    const MlpWeights& w = mlp_[l];
                    const Matrix xn = rms_norm(x, w.norm_gain);
                    Matrix hidden = matmul(xn, w.w1);
                    for (std::size_t i = 0; i < hidden.size(); ++i) {
                        hidden.data()[i] = silu(hidden.data()[i]);
                    }
                    add_inplace(x, matmul(hidden, w.w2));
                    break;
                }
            }
        }
        const Matrix xf = rms_norm(x, final_norm_gain_);
        logits = output_logits(xf);

        DecodeStepStats stats;
        stats.token_id = best;
        stats.kv_rows = state.kv_rows_per_attention_layer();
        stats.ssm_state_bytes = state.ssm_state_bytes();
        stats.step_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        result.steps.push_back(stats);
        (void)d;
    }
    return result;
}

TokenSequence build_synthetic_sequence(const Model& model, std::size_t frames,
                                       std::size_t tokens_per_frame,
                                       std::size_t system_tokens,
                                       std::size_t instruction_tokens,
                                       std::uint64_t seed) {
    const ModelConfig& cfg = model.config();
    const std::size_t d = cfg.hidden_dim;
    if (system_tokens < 1) {
        throw Error("synthetic sequence: need at least the BOS system token");
    }
    Rng rng(seed);

    std::vector<std::size_t> sys_ids{0};  // BOS
    for (std::size_t i = 1; i < system_tokens; ++i) sys_ids.push_back(rng.below(cfg.vocab));
    std::vector<std::size_t> ins_ids;
    for (std::size_t i = 0; i < instruction_tokens; ++i) ins_ids.push_back(rng.below(cfg.vocab));

    const std::size_t vis_tokens = frames * tokens_per_frame;
    const std::size_t total = system_tokens + vis_tokens + instruction_tokens;

    TokenSequence seq;
    seq.embeddings = Matrix(total, d);

    const Matrix sys_emb = model.embed(sys_ids);
    for (std::size_t i = 0; i < system_tokens; ++i) {
        std::copy(sys_emb.row(i), sys_emb.row(i) + d, seq.embeddings.row(i));
    }

    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::size_t row = system_tokens;
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t frame_begin = row;
        for (std::size_t t = 0; t < tokens_per_frame; ++t) {
            double* r = seq.embeddings.row(row++);
            for (std::size_t c = 0; c < d; ++c) r[c] = rng.uniform(-bound, bound);
            // sinusoidal frame-position tag, the only temporal cue in the input
            for (std::size_t c = 0; c < d; ++c) {
                const double freq =
                    std::pow(10000.0, -2.0 * static_cast<double>(c / 2) /
                                          static_cast<double>(d));
                const double angle = static_cast<double>(f) * freq;
                r[c] += 0.1 * (c % 2 == 0 ? std::sin(angle) : std::cos(angle));
            }
        }
        seq.segments.frames.push_back({frame_begin, row});
    }

    const Matrix ins_emb = model.embed(ins_ids);
    for (std::size_t i = 0; i < instruction_tokens; ++i) {
        std::copy(ins_emb.row(i), ins_emb.row(i) + d, seq.embeddings.row(row++));
    }

    seq.segments.system = {0, system_tokens};
    seq.segments.vision = {system_tokens, system_tokens + vis_tokens};
    seq.segments.instruction = {system_tokens + vis_tokens, total};
    seq.segments.response = {total, total};
    return seq;
}

}  // namespace hybridlm
