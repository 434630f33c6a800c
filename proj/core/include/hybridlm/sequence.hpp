#pragma once

#include <cstddef>
#include <vector>

#include "hybridlm/matrix.hpp"

namespace hybridlm {

enum class SegKind { System, Vision, Instruction, Response };

const char* seg_name(SegKind k);

/// Half-open index range [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    bool empty() const { return begin == end; }
};

/// Segment layout of one sequence. Spans are contiguous, ordered
/// system -> vision -> instruction -> response, and cover [0, T).
/// Any span may be empty. Position 0, when the system span is non-empty,
/// is the BOS token.
struct SegmentMap {
    Span system, vision, instruction, response;
    std::vector<Span> frames;  // sub-spans inside the vision span

    std::size_t total() const { return response.end; }
    SegKind kind_of(std::size_t pos) const;
    void validate() const;  // throws ConfigError on overlap/order violations
};

struct SegCounts {
    std::size_t system = 0, vision = 0, instruction = 0, response = 0;
    std::size_t total() const { return system + vision + instruction + response; }
};

SegCounts count_segments(const SegmentMap& segs);

struct TokenSequence {
    Matrix embeddings;  // T x D
    SegmentMap segments;
};

/// Per-position segment labels, used by the decode path where cached
/// positions must keep their original category.
std::vector<SegKind> segment_labels(const SegmentMap& segs);

/// Rebuilds a sequence after dropping the vision positions NOT listed in
/// `kept_vision` (absolute indices into the old sequence, ascending).
/// Frame sub-spans are recomputed from the survivors.
TokenSequence drop_vision_tokens(const TokenSequence& seq,
                                 const std::vector<std::size_t>& kept_vision);

}  // namespace hybridlm
