#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/core/errors.hpp"
#include "fosm/core/types.hpp"

namespace fosm {

enum class MatcherKind { bica, ca, sn, owp, minitransformer };

inline const std::vector<std::pair<MatcherKind, std::string>>& matcher_kind_names() {
    static const std::vector<std::pair<MatcherKind, std::string>> names = {
        {MatcherKind::bica, "bica"},
        {MatcherKind::ca, "ca"},
        {MatcherKind::sn, "sn"},
        {MatcherKind::owp, "owp"},
        {MatcherKind::minitransformer, "minitransformer"},
    };
    return names;
}

inline std::string to_string(MatcherKind k) {
    for (const auto& [kind, name] : matcher_kind_names())
        if (kind == k) return name;
    throw ConfigError("unknown matcher kind");
}

inline MatcherKind matcher_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : matcher_kind_names())
        if (name == s) return kind;
    std::string valid;
    for (const auto& [kind, name] : matcher_kind_names()) valid += (valid.empty() ? "" : ", ") + name;
    throw ConfigError("invalid matcher '" + s + "' (valid kinds: " + valid + ")");
}

struct TransformerConfig {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_ff = 128;
    double dropout = 0.1;
    int max_positions = 130; // must hold [CLS] + reference + [SEP] + candidate

    void validate() const {
        if (layers < 0) throw ConfigError("transformer layers must be >= 0");
        if (heads < 1 || d_model < 1) throw ConfigError("transformer heads/d_model must be >= 1");
        if (d_model % heads != 0)
            throw ConfigError("heads (" + std::to_string(heads) + ") must divide d_model (" +
                              std::to_string(d_model) + ")");
        if (d_ff < 1) throw ConfigError("transformer d_ff must be >= 1");
    }
};

struct MatcherConfig {
    MatcherKind kind = MatcherKind::bica;
    int embed_dim = 50;                        // d_e; overwritten by the vocabulary's dimension
    int hidden_dim = 50;                       // d_h of the gated encoder
    int conv_channels = 50;                    // aggregation CNN channels (in == out)
    std::vector<int> kernel_widths = {1, 2, 3, 4, 5};
    double dropout = 0.1;
    TransformerConfig tf;
    Eigen::Index vocab_size = 0; // filled when parameters are created

    int feature_dim() const {
        const int agg = conv_channels * static_cast<int>(kernel_widths.size());
        switch (kind) {
        case MatcherKind::bica: return 2 * agg;
        case MatcherKind::ca: return agg;
        case MatcherKind::sn: return 2 * hidden_dim;
        case MatcherKind::owp: return hidden_dim;
        case MatcherKind::minitransformer: return tf.d_model;
        }
        throw ConfigError("unknown matcher kind");
    }

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1 || conv_channels < 1)
            throw ConfigError("matcher dimensions must be >= 1");
        if (kernel_widths.empty()) throw ConfigError("at least one kernel width required");
        for (std::size_t i = 1; i < kernel_widths.size(); ++i)
            if (kernel_widths[i] <= kernel_widths[i - 1])
                throw ConfigError("kernel widths must be strictly increasing");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
        if (kind == MatcherKind::minitransformer) tf.validate();
    }
};

inline void to_json(nlohmann::json& j, const TransformerConfig& c) {
    j = {{"layers", c.layers},   {"heads", c.heads},     {"d_model", c.d_model},
         {"d_ff", c.d_ff},       {"dropout", c.dropout}, {"max_positions", c.max_positions}};
}

inline void from_json(const nlohmann::json& j, TransformerConfig& c) {
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.dropout = j.value("dropout", c.dropout);
    c.max_positions = j.value("max_positions", c.max_positions);
}

inline void to_json(nlohmann::json& j, const MatcherConfig& c) {
    j = {{"kind", to_string(c.kind)},
         {"embed_dim", c.embed_dim},
         {"hidden_dim", c.hidden_dim},
         {"conv_channels", c.conv_channels},
         {"kernel_widths", c.kernel_widths},
         {"dropout", c.dropout},
         {"transformer", c.tf},
         {"vocab_size", c.vocab_size}};
}

inline void from_json(const nlohmann::json& j, MatcherConfig& c) {
    if (j.contains("kind")) c.kind = matcher_kind_from_string(j["kind"].get<std::string>());
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    if (j.contains("kernel_widths")) c.kernel_widths = j["kernel_widths"].get<std::vector<int>>();
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("transformer")) c.tf = j["transformer"].get<TransformerConfig>();
    c.vocab_size = j.value("vocab_size", c.vocab_size);
}

} // namespace fosm
