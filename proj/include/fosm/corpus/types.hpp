#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fosm {

struct LabeledInstance {
    std::string text;
    std::string label;
    std::optional<int> num_aspects;
};

// Class identifiers partitioned into train/validation/test; the sets are
// pairwise disjoint and each kept sorted for reproducible iteration.
struct ClassSplit {
    std::vector<std::string> train_classes;
    std::vector<std::string> val_classes;
    std::vector<std::string> test_classes;
};

// A tokenized, index-encoded sentence. `indices` is padded to a fixed width;
// the first `length` positions are real tokens and the rest PAD.
struct TokenSequence {
    std::vector<std::int32_t> indices;
    std::int32_t length = 0;

    bool masked(std::size_t pos) const { return pos >= static_cast<std::size_t>(length); }

    std::vector<std::uint8_t> mask() const {
        std::vector<std::uint8_t> m(indices.size(), 0);
        for (std::int32_t i = 0; i < length; ++i) m[static_cast<std::size_t>(i)] = 1;
        return m;
    }

    bool operator==(const TokenSequence& other) const = default;
};

} // namespace fosm
