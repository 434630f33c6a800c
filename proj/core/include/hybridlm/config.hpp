#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hybridlm {

enum class LayerKind { Mamba2, Attention, Mlp };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind;
    std::size_t index;  // position in the stack, 0-based, contiguous
};

struct ModelConfig {
    std::vector<LayerSpec> layers;
    std::size_t hidden_dim = 64;
    std::size_t ssm_state = 16;
    std::size_t attn_heads = 4;
    std::size_t mamba_heads = 4;
    std::size_t vocab = 256;
    std::uint64_t seed = 1;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t count(LayerKind k) const;

    /// Throws ConfigError: non-contiguous indices, head-divisibility
    /// violations, empty stack.
    void validate() const;

    /// Builds the stack from a mixing pattern, e.g. "MMMAMMMMMMAMMM":
    /// one Mamba-2 ('M') or attention ('A') layer per character, each
    /// followed by an MLP layer when interleave_mlp is set.
    static std::vector<LayerSpec> layers_from_pattern(const std::string& pattern,
                                                      bool interleave_mlp);

    /// 14-layer pattern [M M M A M M M M M M A M M M] with an MLP after every
    /// mixing layer (28 stack entries), D=64, N=16, 4+4 heads, vocab 256.
    static ModelConfig desk_default();

    /// Key-value text format, one `key = value` per line, '#' comments.
    /// Keys: pattern, interleave_mlp, hidden_dim, ssm_state, attn_heads,
    /// mamba_heads, vocab, seed.
    static ModelConfig from_string(const std::string& text);
    static ModelConfig from_file(const std::string& path);
};

}  // namespace hybridlm
