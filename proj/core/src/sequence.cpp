#include "hybridlm/sequence.hpp"

#include <algorithm>
#include <string>

#include "hybridlm/errors.hpp"

namespace hybridlm {

const char* seg_name(SegKind k) {
    switch (k) {
        case SegKind::System: return "system";
        case SegKind::Vision: return "vision";
        case SegKind::Instruction: return "instruction";
        case SegKind::Response: return "response";
    }
    return "?";
}

SegKind SegmentMap::kind_of(std::size_t pos) const {
    if (system.contains(pos)) return SegKind::System;
    if (vision.contains(pos)) return SegKind::Vision;
    if (instruction.contains(pos)) return SegKind::Instruction;
    if (response.contains(pos)) return SegKind::Response;
    throw ConfigError("segment map: position " + std::to_string(pos) +
                      " outside all spans");
}

void SegmentMap::validate() const {
    if (system.begin != 0 || system.end != vision.begin ||
        vision.end != instruction.begin || instruction.end != response.begin) {
        throw ConfigError("segment map: spans must be contiguous and ordered "
                          "system, vision, instruction, response");
    }
    for (const Span& f : frames) {
        if (f.begin < vision.begin || f.end > vision.end || f.begin > f.end) {
            throw ConfigError("segment map: frame span outside vision span");
        }
    }
}

SegCounts count_segments(const SegmentMap& segs) {
    SegCounts c;
    c.system = segs.system.length();
    c.vision = segs.vision.length();
    c.instruction = segs.instruction.length();
    c.response = segs.response.length();
    return c;
}

std::vector<SegKind> segment_labels(const SegmentMap& segs) {
    std::vector<SegKind> labels(segs.total());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = segs.kind_of(i);
    return labels;
}

TokenSequence drop_vision_tokens(const TokenSequence& seq,
                                 const std::vector<std::size_t>& kept_vision) {
    const SegmentMap& old = seq.segments;
    const std::size_t d = seq.embeddings.cols();
    const std::size_t dropped = old.vision.length() - kept_vision.size();

    TokenSequence out;
    out.embeddings = Matrix(old.total() - dropped, d);

    std::size_t row = 0;
    auto copy_range = [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            std::copy(seq.embeddings.row(i), seq.embeddings.row(i) + d,
                      out.embeddings.row(row++));
        }
    };
    copy_range(old.system.begin, old.system.end);

    const std::size_t vis_begin = row;
    // old absolute index -> new absolute index, for frame-span remapping
    std::vector<std::size_t> new_index(old.vision.length(), static_cast<std::size_t>(-1));
    for (std::size_t idx : kept_vision) {
        new_index[idx - old.vision.begin] = row;
        std::copy(seq.embeddings.row(idx), seq.embeddings.row(idx) + d,
                  out.embeddings.row(row++));
    }
    const std::size_t vis_end = row;

    copy_range(old.instruction.begin, old.instruction.end);
    const std::size_t ins_end = row;
    copy_range(old.response.begin, old.response.end);

    out.segments.system = {0, old.system.length()};
    out.segments.vision = {vis_begin, vis_end};
    out.segments.instruction = {vis_end, ins_end};
    out.segments.response = {ins_end, row};

    for (const Span& f : old.frames) {
        Span nf{static_cast<std::size_t>(-1), 0};
        for (std::size_t i = f.begin; i < f.end; ++i) {
            const std::size_t ni = new_index[i - old.vision.begin];
            if (ni == static_cast<std::size_t>(-1)) continue;
            nf.begin = std::min(nf.begin, ni);
            nf.end = std::max(nf.end, ni + 1);
        }
        if (nf.end > 0) out.segments.frames.push_back(nf);
    }
    return out;
}

}  // namespace hybridlm
