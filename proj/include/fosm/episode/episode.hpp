#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/core/errors.hpp"
#include "fosm/core/rng.hpp"
#include "fosm/corpus/types.hpp"
#include "fosm/corpus/vocab.hpp"

namespace fosm {

struct EncodedInstance {
    std::size_t id = 0; // corpus-order index, the identity used for exclusion checks
    TokenSequence seq;
    int num_aspects = 0; // 0 when unannotated
};

// class -> encoded instances; std::map keeps iteration order deterministic.
using Pool = std::map<std::string, std::vector<EncodedInstance>>;

inline Pool build_pool(const std::vector<LabeledInstance>& instances, const Vocabulary& vocab,
                       std::size_t max_len) {
    Pool pool;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        EncodedInstance enc;
        enc.id = i;
        enc.seq = encode_text(instances[i].text, vocab, max_len);
        enc.num_aspects = instances[i].num_aspects.value_or(0);
        pool[instances[i].label].push_back(std::move(enc));
    }
    return pool;
}

inline Pool subset_pool(const Pool& pool, const std::vector<std::string>& classes) {
    Pool out;
    for (const auto& c : classes) {
        auto it = pool.find(c);
        if (it == pool.end()) throw DataError("split names class with no instances: " + c);
        out[c] = it->second;
    }
    return out;
}

enum class ReferenceMode { any, single_aspect, multi_aspect };

inline ReferenceMode reference_mode_from_string(const std::string& s) {
    if (s == "any") return ReferenceMode::any;
    if (s == "single_aspect") return ReferenceMode::single_aspect;
    if (s == "multi_aspect") return ReferenceMode::multi_aspect;
    throw ConfigError("unknown reference mode: " + s);
}

struct EpisodeItem {
    EncodedInstance instance;
    int label = 0; // 1 = same class as the reference
};

// One meta-task: a reference sentence, a labeled support set, and a labeled
// query set. Positives share the reference's class; negatives come from the
// batch's disjoint negative classes.
struct Episode {
    EncodedInstance reference;
    std::vector<EpisodeItem> support;
    std::vector<EpisodeItem> query;
    std::string positive_class;
    std::vector<std::string> negative_classes;
};

struct EpisodeBatch {
    std::vector<Episode> episodes;
    std::uint64_t seed = 0;
};

struct EpisodeSizes {
    int support = 10;
    int query = 10;
};

namespace detail {

// The aspect-split protocol draws support/query items from multi-aspect
// sentences and constrains only the reference by mode; `any` disables all
// aspect filtering.
inline std::vector<const EncodedInstance*> eligible(const std::vector<EncodedInstance>& v,
                                                    bool multi_only) {
    std::vector<const EncodedInstance*> out;
    for (const auto& e : v)
        if (!multi_only || e.num_aspects >= 2) out.push_back(&e);
    return out;
}

inline std::vector<const EncodedInstance*> reference_candidates(
    const std::vector<EncodedInstance>& v, ReferenceMode mode) {
    std::vector<const EncodedInstance*> out;
    for (const auto& e : v) {
        bool ok = mode == ReferenceMode::any ||
                  (mode == ReferenceMode::single_aspect ? e.num_aspects == 1 : e.num_aspects >= 2);
        if (ok) out.push_back(&e);
    }
    return out;
}

} // namespace detail

// Draws one meta-task. The reference and the positive items come from
// positive_class without replacement; negatives come from the pooled
// instances of negative_classes. With `stratify` the positive/negative split
// of each of the two sets is as even as possible (odd remainders placed by
// coin flip); without it the combined draw is shuffled and cut.
inline Episode sample_episode(const Pool& pool, const std::string& positive_class,
                              const std::vector<std::string>& negative_classes,
                              EpisodeSizes sizes, ReferenceMode mode, bool stratify, Rng& rng) {
    auto pit = pool.find(positive_class);
    if (pit == pool.end()) throw DataError("unknown positive class: " + positive_class);
    const bool multi_only = mode != ReferenceMode::any;

    auto ref_cands = detail::reference_candidates(pit->second, mode);
    if (ref_cands.empty())
        throw DataError("no reference matching reference_mode in class " + positive_class);
    auto pos_cands = detail::eligible(pit->second, multi_only);

    std::vector<const EncodedInstance*> neg_cands;
    for (const auto& nc : negative_classes) {
        if (nc == positive_class)
            throw DataError("negative classes must not contain the positive class");
        auto it = pool.find(nc);
        if (it == pool.end()) throw DataError("unknown negative class: " + nc);
        for (const auto* e : detail::eligible(it->second, multi_only)) neg_cands.push_back(e);
    }

    const int total = sizes.support + sizes.query;
    int n_pos_support, n_pos_query;
    if (stratify) {
        int n_pos = total / 2 + (total % 2 ? static_cast<int>(rng.uniform_index(2)) : 0);
        n_pos_support = sizes.support / 2 +
                        (sizes.support % 2 ? static_cast<int>(rng.uniform_index(2)) : 0);
        n_pos_query = std::clamp(n_pos - n_pos_support, 0, sizes.query);
        n_pos_support = std::clamp(n_pos - n_pos_query, 0, sizes.support);
    } else {
        n_pos_support = -1; // decided after the shuffle
        n_pos_query = -1;
    }
    const int n_pos_total = stratify ? n_pos_support + n_pos_query
                                     : total / 2 + (total % 2 ? static_cast<int>(rng.uniform_index(2)) : 0);
    const int n_neg_total = total - n_pos_total;

    // Reference first, then positives excluding it.
    const EncodedInstance* reference =
        ref_cands[static_cast<std::size_t>(rng.uniform_index(ref_cands.size()))];
    std::vector<const EncodedInstance*> pos_pool;
    for (const auto* e : pos_cands)
        if (e->id != reference->id) pos_pool.push_back(e);
    if (static_cast<int>(pos_pool.size()) < n_pos_total)
        throw DataError("class " + positive_class + " has too few instances for an episode (" +
                        std::to_string(pos_pool.size() + 1) + " available, " +
                        std::to_string(n_pos_total + 1) + " needed)");
    if (static_cast<int>(neg_cands.size()) < n_neg_total)
        throw DataError("negative pool too small (" + std::to_string(neg_cands.size()) +
                        " available, " + std::to_string(n_neg_total) + " needed)");

    std::vector<EpisodeItem> items;
    for (auto i : rng.sample_without_replacement(pos_pool.size(), static_cast<std::size_t>(n_pos_total)))
        items.push_back({*pos_pool[i], 1});
    for (auto i : rng.sample_without_replacement(neg_cands.size(), static_cast<std::size_t>(n_neg_total)))
        items.push_back({*neg_cands[i], 0});

    Episode ep;
    ep.reference = *reference;
    ep.positive_class = positive_class;
    ep.negative_classes = negative_classes;
    if (stratify) {
        std::vector<EpisodeItem> pos(items.begin(), items.begin() + n_pos_total);
        std::vector<EpisodeItem> neg(items.begin() + n_pos_total, items.end());
        ep.support.assign(pos.begin(), pos.begin() + n_pos_support);
        ep.support.insert(ep.support.end(), neg.begin(),
                          neg.begin() + (sizes.support - n_pos_support));
        ep.query.assign(pos.begin() + n_pos_support, pos.end());
        ep.query.insert(ep.query.end(), neg.begin() + (sizes.support - n_pos_support), neg.end());
        rng.shuffle(ep.support);
        rng.shuffle(ep.query);
    } else {
        rng.shuffle(items);
        ep.support.assign(items.begin(), items.begin() + sizes.support);
        ep.query.assign(items.begin() + sizes.support, items.end());
    }
    return ep;
}

// One batch: |C_p| distinct positive classes, a disjoint set C_n of negative
// classes shared across the batch, one episode per positive class.
inline EpisodeBatch sample_batch(const Pool& pool, const std::vector<std::string>& classes,
                                 int batch_size, int n_negative_classes, EpisodeSizes sizes,
                                 ReferenceMode mode, bool stratify, std::uint64_t seed) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (static_cast<int>(classes.size()) < batch_size + 1)
        throw DataError("too few classes for batch size " + std::to_string(batch_size) + " (" +
                        std::to_string(classes.size()) + " available, need at least " +
                        std::to_string(batch_size + 1) + ")");
    Rng rng(seed);
    auto picks = rng.sample_without_replacement(classes.size(),
                                                static_cast<std::size_t>(batch_size));
    std::set<std::size_t> taken(picks.begin(), picks.end());
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (!taken.count(i)) rest.push_back(i);
    rng.shuffle(rest);
    const auto n_neg = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, n_negative_classes)),
                                             rest.size());
    std::vector<std::string> negatives;
    for (std::size_t i = 0; i < n_neg; ++i) negatives.push_back(classes[rest[i]]);
    std::sort(negatives.begin(), negatives.end());

    EpisodeBatch batch;
    batch.seed = seed;
    for (auto ci : picks)
        batch.episodes.push_back(
            sample_episode(pool, classes[ci], negatives, sizes, mode, stratify, rng));
    return batch;
}

struct StreamConfig {
    std::vector<std::string> classes;
    int batches_per_epoch = 0;
    int batch_size = 5;        // |C_p|
    int negative_classes = 5;  // |C_n|
    EpisodeSizes sizes;
    ReferenceMode mode = ReferenceMode::any;
    bool stratify = true;
    std::uint64_t master_seed = 0;
    std::string tag; // "train" / "val" / "test"
};

// Deterministic batch source: batch (epoch, index) is a pure function of the
// master seed and tag, so two methods evaluated with the same master seed see
// identical episodes.
class EpisodeStream {
public:
    EpisodeStream(const Pool& pool, StreamConfig cfg) : pool_(&pool), cfg_(std::move(cfg)) {}

    const StreamConfig& config() const { return cfg_; }

    EpisodeBatch batch(int epoch, int index) const {
        std::uint64_t seed = hash_combine(
            hash_combine(hash_combine(cfg_.master_seed, hash_str(cfg_.tag)),
                         static_cast<std::uint64_t>(epoch)),
            static_cast<std::uint64_t>(index));
        return sample_batch(*pool_, cfg_.classes, cfg_.batch_size, cfg_.negative_classes,
                            cfg_.sizes, cfg_.mode, cfg_.stratify, seed);
    }

    std::vector<EpisodeBatch> epoch(int e) const {
        std::vector<EpisodeBatch> out;
        out.reserve(static_cast<std::size_t>(cfg_.batches_per_epoch));
        for (int i = 0; i < cfg_.batches_per_epoch; ++i) out.push_back(batch(e, i));
        return out;
    }

private:
    const Pool* pool_;
    StreamConfig cfg_;
};

// Audit dump: one episode per line with class ids, instance ids, and labels.
inline nlohmann::json episode_to_json(const Episode& ep) {
    nlohmann::json j;
    j["positive_class"] = ep.positive_class;
    j["negative_classes"] = ep.negative_classes;
    j["reference_id"] = ep.reference.id;
    auto items = [](const std::vector<EpisodeItem>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& it : v) arr.push_back({{"id", it.instance.id}, {"label", it.label}});
        return arr;
    };
    j["support"] = items(ep.support);
    j["query"] = items(ep.query);
    return j;
}

} // namespace fosm
