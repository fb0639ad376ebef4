#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fosm/core/errors.hpp"
#include "fosm/core/rng.hpp"
#include "fosm/core/types.hpp"
#include "fosm/corpus/types.hpp"

namespace fosm {

// Lowercase; split on whitespace; punctuation becomes its own token.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

// Token-to-index map plus the d_e x V vector table (one column per token).
// Index 0 is PAD with an all-zero column; index 1 is a shared trainable UNK.
class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;

    std::int32_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    Index dim() const { return table_.rows(); }
    Index size() const { return table_.cols(); }
    const Mat<double>& table() const { return table_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    static Vocabulary build(const std::vector<std::string>& corpus_tokens,
                            const std::string& embeddings_path, std::uint64_t unk_seed = 7) {
        std::unordered_set<std::string> wanted(corpus_tokens.begin(), corpus_tokens.end());
        std::ifstream in(embeddings_path);
        if (!in) throw DataError("cannot open embeddings file: " + embeddings_path);

        std::vector<std::pair<std::string, std::vector<double>>> found;
        std::string line;
        std::size_t lineno = 0;
        Index dim = -1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string tok;
            ls >> tok;
            std::vector<double> vec;
            double v;
            while (ls >> v) vec.push_back(v);
            if (vec.empty())
                throw DataError(embeddings_path + ":" + std::to_string(lineno) +
                                ": no vector entries");
            if (dim < 0) dim = static_cast<Index>(vec.size());
            if (static_cast<Index>(vec.size()) != dim)
                throw DataError(embeddings_path + ":" + std::to_string(lineno) +
                                ": inconsistent vector dimension (" + std::to_string(vec.size()) +
                                " vs " + std::to_string(dim) + ")");
            if (wanted.count(tok)) {
                found.emplace_back(tok, std::move(vec));
                wanted.erase(tok);
            }
        }
        if (dim < 0) throw DataError("embeddings file has no vectors: " + embeddings_path);

        Vocabulary vocab;
        vocab.table_.resize(dim, static_cast<Index>(found.size()) + 2);
        vocab.table_.col(kPad).setZero();
        Rng rng(unk_seed);
        for (Index i = 0; i < dim; ++i) vocab.table_(i, kUnk) = rng.uniform(-0.1, 0.1);
        vocab.tokens_ = {"<pad>", "<unk>"};
        // preserve the corpus' first-seen order, not file order
        std::unordered_map<std::string, std::vector<double>> by_tok;
        for (auto& [t, v] : found) by_tok.emplace(std::move(t), std::move(v));
        for (const auto& tok : corpus_tokens) {
            auto it = by_tok.find(tok);
            if (it == by_tok.end() || vocab.index_.count(tok)) continue;
            const auto col = static_cast<Index>(vocab.tokens_.size());
            for (Index i = 0; i < dim; ++i) vocab.table_(i, col) = it->second[static_cast<std::size_t>(i)];
            vocab.index_[tok] = static_cast<std::int32_t>(col);
            vocab.tokens_.push_back(tok);
        }
        vocab.table_.conservativeResize(dim, static_cast<Index>(vocab.tokens_.size()));
        return vocab;
    }

    // Reassemble from a manifest (token order + table values).
    static Vocabulary from_parts(std::vector<std::string> tokens, Mat<double> table) {
        if (static_cast<Index>(tokens.size()) != table.cols())
            throw DataError("vocabulary manifest: token count does not match table");
        Vocabulary v;
        v.tokens_ = std::move(tokens);
        v.table_ = std::move(table);
        for (std::size_t i = 2; i < v.tokens_.size(); ++i)
            v.index_[v.tokens_[i]] = static_cast<std::int32_t>(i);
        return v;
    }

private:
    std::unordered_map<std::string, std::int32_t> index_;
    std::vector<std::string> tokens_;
    Mat<double> table_;
};

// Collects the distinct tokens of a corpus in first-seen order, looking only
// at the prefix of each text that could survive truncation.
inline std::vector<std::string> corpus_token_order(const std::vector<LabeledInstance>& instances,
                                                   std::size_t max_len) {
    std::vector<std::string> order;
    std::unordered_set<std::string> seen;
    for (const auto& inst : instances) {
        auto toks = tokenize(inst.text);
        if (toks.size() > max_len) toks.resize(max_len);
        for (auto& t : toks)
            if (seen.insert(t).second) order.push_back(std::move(t));
    }
    return order;
}

inline Vocabulary build_vocab(const std::vector<LabeledInstance>& instances,
                              const std::string& embeddings_path, std::size_t max_len,
                              std::uint64_t unk_seed = 7) {
    return Vocabulary::build(corpus_token_order(instances, max_len), embeddings_path, unk_seed);
}

// Lowercased punctuation-splitting tokenization, truncation to max_len, PAD
// to max_len. Pure function of (text, vocab, max_len).
inline TokenSequence encode_text(const std::string& text, const Vocabulary& vocab,
                                 std::size_t max_len) {
    if (max_len < 1) throw ConfigError("encode_text: max_len must be >= 1");
    auto toks = tokenize(text);
    if (toks.empty()) throw DataError("text is empty after tokenization");
    if (toks.size() > max_len) toks.resize(max_len);
    TokenSequence seq;
    seq.indices.assign(max_len, Vocabulary::kPad);
    seq.length = static_cast<std::int32_t>(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) seq.indices[i] = vocab.lookup(toks[i]);
    return seq;
}

} // namespace fosm
