#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/core/errors.hpp"
#include "fosm/core/rng.hpp"

namespace fosm {

// Deterministic keyword-matching corpus for desk-scale experiments. Each
// class owns a small keyword set drawn from a shared pool (so classes
// overlap and a lone reference sentence is genuinely ambiguous); sentences
// mix class keywords with filler words. Instances that pick up a foreign
// keyword are marked multi-aspect.
struct ToyCorpusSpec {
    int n_classes = 20;
    int instances_per_class = 200;
    int keyword_pool = 24;
    int keywords_per_class = 4;
    int filler_pool = 80;
    int min_tokens = 6;
    int max_tokens = 10;
    int keywords_per_sentence = 2;
    int embed_dim = 16;
    double foreign_keyword_prob = 0.35;
    std::vector<double> split_ratio = {10, 4, 6};
    std::uint64_t seed = 20240601;
};

struct ToyCorpusPaths {
    std::string corpus;
    std::string embeddings;
    std::string split;
};

inline ToyCorpusPaths generate_toy_corpus(const ToyCorpusSpec& spec, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Rng rng(spec.seed);

    std::vector<std::string> keywords, fillers;
    for (int i = 0; i < spec.keyword_pool; ++i) keywords.push_back("kw" + std::to_string(i));
    for (int i = 0; i < spec.filler_pool; ++i) fillers.push_back("w" + std::to_string(i));

    // class keyword sets: sampled from the shared pool, overlap allowed
    std::vector<std::vector<std::string>> class_keywords;
    Rng kw_rng = rng.derive("class-keywords");
    for (int c = 0; c < spec.n_classes; ++c) {
        auto picks = kw_rng.sample_without_replacement(keywords.size(),
                                                       static_cast<std::size_t>(spec.keywords_per_class));
        std::vector<std::string> set;
        for (auto i : picks) set.push_back(keywords[i]);
        class_keywords.push_back(std::move(set));
    }

    ToyCorpusPaths paths;
    paths.corpus = (fs::path(dir) / "corpus.jsonl").string();
    paths.embeddings = (fs::path(dir) / "embeddings.txt").string();
    paths.split = (fs::path(dir) / "split.json").string();

    std::ofstream corpus(paths.corpus, std::ios::trunc);
    if (!corpus) throw DataError("cannot write " + paths.corpus);
    Rng gen = rng.derive("instances");
    for (int c = 0; c < spec.n_classes; ++c) {
        const std::string label =
            "topic" + std::string(c < 10 ? "0" : "") + std::to_string(c);
        for (int i = 0; i < spec.instances_per_class; ++i) {
            const int len = spec.min_tokens +
                            static_cast<int>(gen.uniform_index(
                                static_cast<std::uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
            std::vector<std::string> toks;
            int n_keywords = spec.keywords_per_sentence +
                             static_cast<int>(gen.uniform_index(2)); // 2 or 3 class keywords
            for (int k = 0; k < n_keywords; ++k)
                toks.push_back(class_keywords[static_cast<std::size_t>(c)][gen.uniform_index(
                    class_keywords[static_cast<std::size_t>(c)].size())]);
            int aspects = 1;
            if (gen.uniform() < spec.foreign_keyword_prob) {
                // borrow a keyword from another class: a noisier, multi-aspect sentence
                const auto other =
                    (static_cast<std::size_t>(c) + 1 + gen.uniform_index(spec.n_classes - 1)) %
                    static_cast<std::size_t>(spec.n_classes);
                toks.push_back(class_keywords[other][gen.uniform_index(
                    class_keywords[other].size())]);
                aspects = 2;
            }
            while (static_cast<int>(toks.size()) < len)
                toks.push_back(fillers[gen.uniform_index(fillers.size())]);
            gen.shuffle(toks);
            std::string text;
            for (std::size_t t = 0; t < toks.size(); ++t)
                text += (t ? " " : "") + toks[t];
            nlohmann::json j = {{"text", text}, {"label", label}, {"num_aspects", aspects}};
            corpus << j.dump() << "\n";
        }
    }
    corpus.close();

    std::ofstream emb(paths.embeddings, std::ios::trunc);
    if (!emb) throw DataError("cannot write " + paths.embeddings);
    emb.precision(8);
    Rng emb_rng = rng.derive("embeddings");
    auto write_vec = [&](const std::string& tok) {
        emb << tok;
        for (int d = 0; d < spec.embed_dim; ++d) emb << " " << emb_rng.uniform(-0.5, 0.5);
        emb << "\n";
    };
    for (const auto& t : keywords) write_vec(t);
    for (const auto& t : fillers) write_vec(t);
    emb.close();

    std::ofstream split(paths.split, std::ios::trunc);
    if (!split) throw DataError("cannot write " + paths.split);
    split << nlohmann::json{{"ratio", spec.split_ratio}, {"seed", spec.seed % 1000}}.dump(2)
          << "\n";
    split.close();
    return paths;
}

} // namespace fosm
