#include "hybridlm/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "hybridlm/errors.hpp"

namespace hybridlm {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Mamba2: return "mamba2";
        case LayerKind::Attention: return "attention";
        case LayerKind::Mlp: return "mlp";
    }
    return "?";
}

std::size_t ModelConfig::count(LayerKind k) const {
    return static_cast<std::size_t>(
        std::count_if(layers.begin(), layers.end(),
                      [k](const LayerSpec& l) { return l.kind == k; }));
}

void ModelConfig::validate() const {
    if (layers.empty()) throw ConfigError("config: empty layer stack");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].index != i) {
            throw ConfigError("config: layer indices must be contiguous, found index " +
                              std::to_string(layers[i].index) + " at position " +
                              std::to_string(i));
        }
    }
    if (hidden_dim == 0 || vocab == 0 || ssm_state == 0) {
        throw ConfigError("config: hidden_dim, ssm_state and vocab must be positive");
    }
    if (attn_heads == 0 || hidden_dim % attn_heads != 0) {
        throw ConfigError("config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by attn_heads " + std::to_string(attn_heads));
    }
    if (mamba_heads == 0 || hidden_dim % mamba_heads != 0) {
        throw ConfigError("config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by mamba_heads " + std::to_string(mamba_heads));
    }
}

std::vector<LayerSpec> ModelConfig::layers_from_pattern(const std::string& pattern,
                                                        bool interleave_mlp) {
    std::vector<LayerSpec> out;
    for (char c : pattern) {
        LayerKind kind;
        if (c == 'M' || c == 'm') {
            kind = LayerKind::Mamba2;
        } else if (c == 'A' || c == 'a') {
            kind = LayerKind::Attention;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            continue;
        } else {
            throw ConfigError(std::string("config: pattern character '") + c +
                              "' is not 'M' or 'A'");
        }
        out.push_back({kind, out.size()});
        if (interleave_mlp) out.push_back({LayerKind::Mlp, out.size()});
    }
    return out;
}

ModelConfig ModelConfig::desk_default() {
    ModelConfig cfg;
    cfg.layers = layers_from_pattern("MMMAMMMMMMAMMM", true);
    return cfg;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has non-integer value '" + value + "'");
    }
}

}  // namespace

ModelConfig ModelConfig::from_string(const std::string& text) {
    ModelConfig cfg;
    std::string pattern = "MMMAMMMMMMAMMM";
    bool interleave = true;

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line without '=': '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "pattern") {
            pattern = value;
        } else if (key == "interleave_mlp") {
            if (value == "true" || value == "1") interleave = true;
            else if (value == "false" || value == "0") interleave = false;
            else throw ConfigError("config: interleave_mlp must be true/false, got '" + value + "'");
        } else if (key == "hidden_dim") {
            cfg.hidden_dim = parse_uint(key, value);
        } else if (key == "ssm_state") {
            cfg.ssm_state = parse_uint(key, value);
        } else if (key == "attn_heads") {
            cfg.attn_heads = parse_uint(key, value);
        } else if (key == "mamba_heads") {
            cfg.mamba_heads = parse_uint(key, value);
        } else if (key == "vocab") {
            cfg.vocab = parse_uint(key, value);
        } else if (key == "seed") {
            cfg.seed = parse_uint(key, value);
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    cfg.layers = layers_from_pattern(pattern, interleave);
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
}

}  // namespace hybridlm
