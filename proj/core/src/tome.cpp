#include "hybridlm/tome.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hybridlm/errors.hpp"
#include "hybridlm/rng.hpp"

namespace hybridlm {

double FrameTokens::total_mass() const {
    return std::accumulate(sizes.begin(), sizes.end(), 0.0);
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? num / denom : 0.0;
}

struct Token {
    std::vector<double> value;
    double size;
    std::vector<std::size_t> group;  // original indices merged into this token
};

}  // namespace

FrameTokens tome_merge(const FrameTokens& frame, std::size_t target,
                       std::vector<std::vector<std::size_t>>* groups);

FrameTokens tome_merge(const FrameTokens& frame, std::size_t target) {
    return tome_merge(frame, target, nullptr);
}

FrameTokens tome_merge(const FrameTokens& frame, std::size_t target,
                       std::vector<std::vector<std::size_t>>* groups) {
    if (frame.count() == 0) throw Error("tome_merge: empty frame");
    if (target < 1) throw Error("tome_merge: target must be >= 1");
    if (target > frame.count()) {
        throw Error("tome_merge: target " + std::to_string(target) +
                    " exceeds token count " + std::to_string(frame.count()));
    }
    if (frame.tokens.rows() != frame.count()) {
        throw ShapeError("tome_merge: sizes length does not match token rows");
    }

    const std::size_t d = frame.tokens.cols();
    std::vector<Token> tokens(frame.count());
    for (std::size_t i = 0; i < frame.count(); ++i) {
        tokens[i].value.assign(frame.tokens.row(i), frame.tokens.row(i) + d);
        tokens[i].size = frame.sizes[i];
        tokens[i].group = {i};
    }

    while (tokens.size() > target) {
        // alternate split over the current ordering
        std::vector<std::size_t> set_a, set_b;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            (i % 2 == 0 ? set_a : set_b).push_back(i);
        }
        const std::size_t smaller = std::min(set_a.size(), set_b.size());
        std::size_t r = std::max<std::size_t>(1, smaller / 2);
        r = std::min(r, tokens.size() - target);

        struct Pair {
            std::size_t a, b;
            double sim;
        };
        std::vector<Pair> pairs;
        for (std::size_t a : set_a) {
            double best = -2.0;
            std::size_t best_b = set_b.empty() ? a : set_b[0];
            for (std::size_t b : set_b) {
                const double s = cosine(tokens[a].value, tokens[b].value);
                if (s > best) {
                    best = s;
                    best_b = b;
                }
            }
            if (!set_b.empty()) pairs.push_back({a, best_b, best});
        }
        std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
            if (x.sim != y.sim) return x.sim > y.sim;
            return x.a < y.a;
        });

        std::vector<bool> merged(tokens.size(), false);
        for (std::size_t i = 0; i < r && i < pairs.size(); ++i) {
            const Pair& p = pairs[i];
            Token& dst = tokens[p.b];
            const Token& src = tokens[p.a];
            const double total = src.size + dst.size;
            for (std::size_t c = 0; c < d; ++c) {
                dst.value[c] = (src.size * src.value[c] + dst.size * dst.value[c]) / total;
            }
            dst.size = total;
            dst.group.insert(dst.group.end(), src.group.begin(), src.group.end());
            merged[p.a] = true;
        }

        std::vector<Token> next;
        next.reserve(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (!merged[i]) next.push_back(std::move(tokens[i]));
        }
        tokens = std::move(next);
    }

    FrameTokens out;
    out.tokens = Matrix(tokens.size(), d);
    out.sizes.resize(tokens.size());
    if (groups != nullptr) groups->clear();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        std::copy(tokens[i].value.begin(), tokens[i].value.end(), out.tokens.row(i));
        out.sizes[i] = tokens[i].size;
        if (groups != nullptr) {
            std::sort(tokens[i].group.begin(), tokens[i].group.end());
            groups->push_back(tokens[i].group);
        }
    }
    return out;
}

std::vector<FrameTokens> build_synthetic_frames(std::size_t frames,
                                                std::size_t tokens_per_frame,
                                                std::size_t hidden_dim,
                                                std::uint64_t seed) {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::vector<FrameTokens> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        FrameTokens& frame = out[f];
        frame.tokens = Matrix(tokens_per_frame, hidden_dim);
        frame.sizes.assign(tokens_per_frame, 1.0);
        for (std::size_t t = 0; t < tokens_per_frame; ++t) {
            double* r = frame.tokens.row(t);
            for (std::size_t c = 0; c < hidden_dim; ++c) {
                r[c] = rng.uniform(-bound, bound);
                const double freq =
                    std::pow(10000.0, -2.0 * static_cast<double>(c / 2) /
                                          static_cast<double>(hidden_dim));
                const double angle = static_cast<double>(f) * freq;
                r[c] += 0.1 * (c % 2 == 0 ? std::sin(angle) : std::cos(angle));
            }
        }
    }
    return out;
}

std::vector<FrameTokens> load_frames_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("jsonl: cannot open '" + path + "'");

    struct Indexed {
        std::size_t index;
        FrameTokens frame;
    };
    std::vector<Indexed> frames;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("jsonl: line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("frame_index") || !j.contains("tokens") ||
            !j["tokens"].is_array() || j["tokens"].empty()) {
            throw Error("jsonl: line " + std::to_string(lineno) +
                        ": need frame_index and a non-empty tokens array");
        }
        const auto& toks = j["tokens"];
        const std::size_t n = toks.size();
        const std::size_t w = toks[0].size();
        if (width == 0) width = w;
        if (w != width) {
            throw Error("jsonl: line " + std::to_string(lineno) +
                        ": token width " + std::to_string(w) +
                        " differs from earlier width " + std::to_string(width));
        }
        Indexed entry;
        entry.index = j["frame_index"].get<std::size_t>();
        entry.frame.tokens = Matrix(n, w);
        entry.frame.sizes.assign(n, 1.0);
        for (std::size_t t = 0; t < n; ++t) {
            if (toks[t].size() != width) {
                throw Error("jsonl: line " + std::to_string(lineno) +
                            ": ragged token vectors");
            }
            for (std::size_t c = 0; c < width; ++c) {
                entry.frame.tokens(t, c) = toks[t][c].get<double>();
            }
        }
        frames.push_back(std::move(entry));
    }
    std::sort(frames.begin(), frames.end(),
              [](const Indexed& a, const Indexed& b) { return a.index < b.index; });
    std::vector<FrameTokens> out;
    out.reserve(frames.size());
    for (Indexed& f : frames) out.push_back(std::move(f.frame));
    return out;
}

}  // namespace hybridlm
