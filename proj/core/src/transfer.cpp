#include "hybridlm/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hybridlm/errors.hpp"

namespace hybridlm {

const char* drop_mode_name(DropMode m) {
    return m == DropMode::Uniform ? "uni" : "attn";
}

const TransferSpec* CompressionSchedule::at_layer(std::size_t layer) const {
    for (const TransferSpec& s : specs) {
        if (s.layer == layer) return &s;
    }
    return nullptr;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

CompressionSchedule parse_schedule(const std::string& text) {
    CompressionSchedule schedule;
    if (text.empty() || text == "none") return schedule;

    for (const std::string& segment : split(text, '-')) {
        const std::vector<std::string> fields = split(segment, '_');
        if (fields.size() != 3) {
            throw ScheduleError(ScheduleError::Kind::Malformed,
                                "schedule: segment '" + segment +
                                "' malformed, expected mode_layer_rate");
        }
        TransferSpec spec{};
        if (fields[0] == "uni") {
            spec.mode = DropMode::Uniform;
        } else if (fields[0] == "attn") {
            spec.mode = DropMode::Attention;
        } else {
            throw ScheduleError(ScheduleError::Kind::UnknownMode,
                                "schedule: unknown mode '" + fields[0] +
                                "' in segment '" + segment + "'");
        }
        try {
            std::size_t pos = 0;
            spec.layer = std::stoull(fields[1], &pos);
            if (pos != fields[1].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ScheduleError(ScheduleError::Kind::Malformed,
                                "schedule: bad layer index '" + fields[1] +
                                "' in segment '" + segment + "'");
        }
        try {
            std::size_t pos = 0;
            spec.rate = std::stod(fields[2], &pos);
            if (pos != fields[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ScheduleError(ScheduleError::Kind::Malformed,
                                "schedule: bad rate '" + fields[2] +
                                "' in segment '" + segment + "'");
        }
        if (spec.rate < 0.0 || spec.rate > 1.0) {
            throw ScheduleError(ScheduleError::Kind::RateRange,
                                "schedule: rate " + fields[2] + " outside [0, 1] in segment '" +
                                segment + "'");
        }
        if (!schedule.specs.empty() && spec.layer <= schedule.specs.back().layer) {
            throw ScheduleError(ScheduleError::Kind::LayerOrder,
                                "schedule: layer indices must be strictly increasing, "
                                "segment '" + segment + "' does not follow layer " +
                                std::to_string(schedule.specs.back().layer));
        }
        schedule.specs.push_back(spec);
    }
    return schedule;
}

std::string schedule_to_string(const CompressionSchedule& schedule) {
    if (schedule.empty()) return "none";
    std::ostringstream out;
    for (std::size_t i = 0; i < schedule.specs.size(); ++i) {
        const TransferSpec& s = schedule.specs[i];
        if (i) out << '-';
        out << drop_mode_name(s.mode) << '_' << s.layer << '_' << s.rate;
    }
    return out.str();
}

std::size_t drop_count(double rate, std::size_t t0) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(t0)));
}

DropResult token_drop(std::size_t t0, double rate, DropMode mode,
                      const std::vector<double>* scores) {
    if (rate < 0.0 || rate > 1.0) {
        throw Error("token_drop: rate " + std::to_string(rate) + " outside [0, 1]");
    }
    const std::size_t td = drop_count(rate, t0);
    const std::size_t keep = t0 - td;

    DropResult result;
    if (mode == DropMode::Uniform) {
        std::vector<bool> kept_mask(t0, false);
        for (std::size_t i = 0; i < keep; ++i) {
            kept_mask[i * t0 / keep] = true;  // keep == 0 never reaches here
        }
        for (std::size_t i = 0; i < t0; ++i) {
            (kept_mask[i] ? result.kept : result.dropped).push_back(i);
        }
    } else {
        if (scores == nullptr) {
            throw Error("token_drop: attn mode requires attention scores");
        }
        if (scores->size() != t0) {
            throw ShapeError("token_drop: got " + std::to_string(scores->size()) +
                             " scores for " + std::to_string(t0) + " vision tokens");
        }
        std::vector<std::size_t> order(t0);
        std::iota(order.begin(), order.end(), 0);
        // lowest score first; ties drop the later index first
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if ((*scores)[a] != (*scores)[b]) return (*scores)[a] < (*scores)[b];
            return a > b;
        });
        std::vector<bool> drop_mask(t0, false);
        for (std::size_t i = 0; i < td; ++i) drop_mask[order[i]] = true;
        for (std::size_t i = 0; i < t0; ++i) {
            (drop_mask[i] ? result.dropped : result.kept).push_back(i);
        }
    }
    return result;
}

TransferParams TransferParams::init(std::size_t hidden_dim, std::size_t heads, Rng& rng) {
    TransferParams p;
    p.wq = Matrix::random_init(hidden_dim, hidden_dim, rng);
    p.wk = Matrix::random_init(hidden_dim, hidden_dim, rng);
    p.wv = Matrix::random_init(hidden_dim, hidden_dim, rng);
    p.wo = Matrix::random_init(hidden_dim, hidden_dim, rng);
    p.heads = heads;
    p.alpha = 0.0;
    return p;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(m.row(rows[i]), m.row(rows[i]) + m.cols(), out.row(i));
    }
    return out;
}

/// Multi-head cross-attention: queries attend to all source rows (no mask).
Matrix cross_attention(const Matrix& queries, const Matrix& source,
                       const TransferParams& p) {
    const std::size_t d = queries.cols();
    const std::size_t heads = p.heads;
    const std::size_t dh = d / heads;
    const Matrix q = matmul(queries, p.wq);
    const Matrix k = matmul(source, p.wk);
    const Matrix v = matmul(source, p.wv);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix mixed(queries.rows(), d);
    std::vector<double> weights(source.rows());
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < q.rows(); ++i) {
            double maxv = -1e308;
            for (std::size_t j = 0; j < k.rows(); ++j) {
                weights[j] = dot(q.row(i) + off, k.row(j) + off, dh) * scale;
                maxv = std::max(maxv, weights[j]);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < k.rows(); ++j) {
                weights[j] = std::exp(weights[j] - maxv);
                sum += weights[j];
            }
            double* out = mixed.row(i) + off;
            for (std::size_t j = 0; j < k.rows(); ++j) {
                const double w = weights[j] / sum;
                const double* vr = v.row(j) + off;
                for (std::size_t c = 0; c < dh; ++c) out[c] += w * vr[c];
            }
        }
    }
    return matmul(mixed, p.wo);
}

}  // namespace

TokenSequence apply_transfer(const TokenSequence& seq, const TransferSpec& spec,
                             const TransferParams& params,
                             const std::vector<double>* attn_scores,
                             TransferSource source) {
    const SegmentMap& segs = seq.segments;
    if (segs.instruction.empty()) {
        throw Error("apply_transfer: empty instruction span");
    }
    const std::size_t t0 = segs.vision.length();
    if (t0 == 0) return seq;

    const DropResult drop = token_drop(t0, spec.rate, spec.mode, attn_scores);

    const std::vector<std::size_t>& source_rel =
        source == TransferSource::Retained ? drop.kept : drop.dropped;

    TokenSequence updated = seq;
    const double gate = std::tanh(params.alpha);
    if (gate != 0.0 && !source_rel.empty()) {
        std::vector<std::size_t> source_abs(source_rel);
        for (std::size_t& i : source_abs) i += segs.vision.begin;
        std::vector<std::size_t> instr_abs(segs.instruction.length());
        std::iota(instr_abs.begin(), instr_abs.end(), segs.instruction.begin);

        const Matrix queries = gather_rows(seq.embeddings, instr_abs);
        const Matrix src = gather_rows(seq.embeddings, source_abs);
        const Matrix transferred = cross_attention(queries, src, params);

        for (std::size_t i = 0; i < instr_abs.size(); ++i) {
            double* row = updated.embeddings.row(instr_abs[i]);
            for (std::size_t c = 0; c < transferred.cols(); ++c) {
                row[c] += gate * transferred(i, c);
            }
        }
    }

    std::vector<std::size_t> kept_abs(drop.kept);
    for (std::size_t& i : kept_abs) i += segs.vision.begin;
    return drop_vision_tokens(updated, kept_abs);
}

TokenSequence apply_drop_only(const TokenSequence& seq, const TransferSpec& spec,
                              const std::vector<double>* attn_scores) {
    const std::size_t t0 = seq.segments.vision.length();
    if (t0 == 0) return seq;
    const DropResult drop = token_drop(t0, spec.rate, spec.mode, attn_scores);
    std::vector<std::size_t> kept_abs(drop.kept);
    for (std::size_t& i : kept_abs) i += seq.segments.vision.begin;
    return drop_vision_tokens(seq, kept_abs);
}

}  // namespace hybridlm
