#include "hybridlm/flow.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "hybridlm/errors.hpp"
#include "hybridlm/rng.hpp"

namespace hybridlm {

namespace {

const LayerTrace& checked_layer(const CaptureTrace& trace, std::size_t layer,
                                LayerKind want) {
    if (!trace.captured) {
        throw Error("score extraction: trace was recorded without capture");
    }
    if (layer >= trace.layers.size()) {
        throw Error("score extraction: layer " + std::to_string(layer) +
                    " out of range");
    }
    const LayerTrace& lt = trace.layers[layer];
    if (lt.kind != want) {
        throw Error("score extraction: layer " + std::to_string(layer) + " is " +
                    layer_kind_name(lt.kind) + ", expected " + layer_kind_name(want));
    }
    return lt;
}

}  // namespace

std::vector<ScoreMatrix> extract_attention_scores(const CaptureTrace& trace,
                                                  std::size_t layer) {
    const LayerTrace& lt = checked_layer(trace, layer, LayerKind::Attention);
    std::vector<ScoreMatrix> out;
    for (std::size_t h = 0; h < lt.attn_weights.size(); ++h) {
        out.push_back({layer, h, lt.attn_weights[h]});
    }
    return out;
}

std::vector<ScoreMatrix> extract_mamba_scores(const CaptureTrace& trace,
                                              std::size_t layer, bool absolute) {
    const LayerTrace& lt = checked_layer(trace, layer, LayerKind::Mamba2);
    const SsmStepParams& p = lt.ssm_params;
    const std::size_t t_len = p.decay.rows();
    const std::size_t n = p.state;

    std::vector<ScoreMatrix> out;
    for (std::size_t h = 0; h < p.heads; ++h) {
        ScoreMatrix sm{layer, h, Matrix(t_len, t_len)};
        // prod[j] maintained as prod_{k=j+1}^{i} a_k while i advances
        std::vector<double> prod(t_len, 0.0);
        for (std::size_t i = 0; i < t_len; ++i) {
            const double a_i = p.decay(i, h);
            for (std::size_t j = 0; j < i; ++j) prod[j] *= a_i;
            prod[i] = 1.0;
            const double* ci = p.c.row(i) + h * n;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* bj = p.b.row(j) + h * n;
                double v = prod[j] * dot(ci, bj, n);
                sm.values(i, j) = absolute ? std::fabs(v) : v;
            }
        }
        out.push_back(std::move(sm));
    }
    return out;
}

const char* category_name(Category c) {
    switch (c) {
        case Category::Vision: return "vision";
        case Category::Instruction: return "instruction";
        case Category::Response: return "response";
    }
    return "?";
}

namespace {

std::optional<Category> category_of(const SegmentMap& segs, std::size_t pos) {
    const SegKind k = segs.kind_of(pos);
    switch (k) {
        case SegKind::Vision: return Category::Vision;
        case SegKind::Instruction: return Category::Instruction;
        case SegKind::Response: return Category::Response;
        case SegKind::System: return std::nullopt;  // outside the three categories
    }
    return std::nullopt;
}

}  // namespace

CategoryStats category_attention(const std::vector<ScoreMatrix>& heads,
                                 const SegmentMap& segs, LayerKind kind) {
    if (heads.empty()) throw Error("category_attention: no score matrices");
    const std::size_t t_len = heads[0].values.rows();
    if (segs.total() != t_len) {
        throw ShapeError("category_attention: segment map covers " +
                         std::to_string(segs.total()) + " tokens, scores are " +
                         std::to_string(t_len) + " wide");
    }

    // head-average; Mamba rows are L1-normalized per head first
    Matrix avg(t_len, t_len);
    for (const ScoreMatrix& sm : heads) {
        for (std::size_t i = 0; i < t_len; ++i) {
            double norm = 1.0;
            if (kind == LayerKind::Mamba2) {
                double s = 0.0;
                for (std::size_t j = 0; j <= i; ++j) s += std::fabs(sm.values(i, j));
                norm = s > 0.0 ? s : 1.0;
            }
            for (std::size_t j = 0; j <= i; ++j) {
                avg(i, j) += sm.values(i, j) / norm / static_cast<double>(heads.size());
            }
        }
    }

    CategoryStats stats;
    for (std::size_t src = 0; src < 3; ++src) {
        for (std::size_t dst = 0; dst < 3; ++dst) {
            double sum = 0.0;
            std::size_t attending = 0;
            for (std::size_t i = 0; i < t_len; ++i) {
                if (category_of(segs, i) != static_cast<Category>(src)) continue;
                double row_sum = 0.0;
                for (std::size_t j = 0; j < t_len; ++j) {
                    if (category_of(segs, j) != static_cast<Category>(dst)) continue;
                    row_sum += avg(i, j);
                }
                sum += row_sum;
                if (row_sum > 0.0) ++attending;
            }
            if (attending > 0) stats.pair[src][dst] = sum / static_cast<double>(attending);
        }
    }
    for (std::size_t dst = 0; dst < 3; ++dst) {
        if (stats.pair[0][dst] && stats.pair[1][dst] && stats.pair[2][dst]) {
            stats.overall[dst] =
                (*stats.pair[0][dst] + *stats.pair[1][dst] + *stats.pair[2][dst]) / 3.0;
        }
    }
    return stats;
}

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? 1.0 - num / denom : 0.0;
}

std::vector<double> logits_row(const ForwardResult& r) {
    const double* row = r.logits.row(r.logits.rows() - 1);
    return std::vector<double>(row, row + r.logits.cols());
}

}  // namespace

std::vector<SweepRow> redundancy_sweep(const Model& model, const TokenSequence& seq,
                                       const std::vector<std::size_t>& layers,
                                       const std::vector<double>& rates,
                                       DropMode mode) {
    const ForwardResult base = model.forward(seq, {});
    const std::vector<double> base_logits = logits_row(base);

    std::vector<SweepRow> rows;
    for (std::size_t layer : layers) {
        for (double rate : rates) {
            CompressionSchedule schedule;
            schedule.specs.push_back({mode, layer, rate});
            ForwardOptions opts;
            opts.schedule = &schedule;
            opts.pure_drop = true;
            opts.strict = false;  // attn mode before the first attention layer falls back to uni
            const ForwardResult run = model.forward(seq, opts);

            SweepRow row;
            row.layer = layer;
            row.rate = rate;
            row.mode = mode;
            const std::vector<double> run_logits = logits_row(run);
            row.divergence_logits = max_abs_diff(base_logits, run_logits);
            row.cosine_logits = cosine_distance(base_logits, run_logits);
            row.divergence_hidden = max_abs_diff(base.final_instruction_hidden,
                                                 run.final_instruction_hidden);
            row.cosine_hidden = cosine_distance(base.final_instruction_hidden,
                                                run.final_instruction_hidden);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("sweep csv: cannot open '" + path + "'");
    out << "layer,rate,mode,divergence_logits,divergence_hidden,"
           "cosine_logits,cosine_hidden\n";
    char buf[256];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%s,%.12g,%.12g,%.12g,%.12g\n",
                      r.layer, r.rate, drop_mode_name(r.mode), r.divergence_logits,
                      r.divergence_hidden, r.cosine_logits, r.cosine_hidden);
        out << buf;
    }
}

double perturbation_flow(const Model& model, const TokenSequence& seq, Span target,
                         Span probe, const BlockingConfig* blocking, double eps,
                         std::size_t directions, std::uint64_t seed) {
    if (eps == 0.0) return 0.0;
    if (target.end > seq.segments.total() || probe.end > seq.segments.total() ||
        target.begin > target.end || probe.begin > probe.end) {
        throw Error("perturbation_flow: span outside sequence");
    }
    ForwardOptions opts;
    opts.blocking = blocking;
    opts.capture = true;

    const std::size_t d = seq.embeddings.cols();
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t dir = 0; dir < directions; ++dir) {
        Matrix direction(target.length(), d);
        for (std::size_t i = 0; i < direction.size(); ++i) {
            direction.data()[i] = rng.uniform(-1.0, 1.0);
        }
        auto perturbed = [&](double sign) {
            TokenSequence p = seq;
            for (std::size_t i = 0; i < target.length(); ++i) {
                double* row = p.embeddings.row(target.begin + i);
                for (std::size_t c = 0; c < d; ++c) {
                    row[c] += sign * eps * direction(i, c);
                }
            }
            return model.forward(p, opts);
        };
        const ForwardResult plus = perturbed(1.0);
        const ForwardResult minus = perturbed(-1.0);

        double diff = 0.0;
        for (std::size_t i = probe.begin; i < probe.end; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                diff = std::max(diff, std::fabs(plus.trace.final_hidden(i, c) -
                                                minus.trace.final_hidden(i, c)));
            }
        }
        total += diff / (2.0 * eps);
    }
    return total / static_cast<double>(directions);
}

void write_score_csv(const std::string& path, const ScoreMatrix& scores) {
    std::ofstream out(path);
    if (!out) throw Error("score csv: cannot open '" + path + "'");
    char buf[64];
    for (std::size_t i = 0; i < scores.values.rows(); ++i) {
        for (std::size_t j = 0; j < scores.values.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.12g", scores.values(i, j));
            out << buf << (j + 1 == scores.values.cols() ? '\n' : ',');
        }
    }
}

void write_segments_sidecar(const std::string& path, const SegmentMap& segs) {
    std::ofstream out(path);
    if (!out) throw Error("segments sidecar: cannot open '" + path + "'");
    out << "segment,begin,end\n";
    out << "system," << segs.system.begin << ',' << segs.system.end << '\n';
    out << "vision," << segs.vision.begin << ',' << segs.vision.end << '\n';
    out << "instruction," << segs.instruction.begin << ',' << segs.instruction.end << '\n';
    out << "response," << segs.response.begin << ',' << segs.response.end << '\n';
}

}  // namespace hybridlm
