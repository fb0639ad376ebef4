#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/core/errors.hpp"
#include "fosm/core/rng.hpp"
#include "fosm/corpus/types.hpp"

namespace fosm {

// Reads a UTF-8 JSONL corpus: one {"text": ..., "label": ..., "num_aspects": n}
// object per line. Blank lines are skipped; anything else malformed is an
// error naming the line.
inline std::vector<LabeledInstance> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    std::vector<LabeledInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON (" + e.what() +
                            ")");
        }
        if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
            throw DataError(path + ":" + std::to_string(lineno) + ": missing \"text\" field");
        if (!j.contains("label") || !j["label"].is_string())
            throw DataError(path + ":" + std::to_string(lineno) + ": missing \"label\" field");
        LabeledInstance inst;
        inst.text = j["text"].get<std::string>();
        inst.label = j["label"].get<std::string>();
        if (j.contains("num_aspects")) {
            if (!j["num_aspects"].is_number_integer() || j["num_aspects"].get<int>() < 1)
                throw DataError(path + ":" + std::to_string(lineno) +
                                ": num_aspects must be a positive integer");
            inst.num_aspects = j["num_aspects"].get<int>();
        }
        out.push_back(std::move(inst));
    }
    if (out.empty()) throw DataError("empty corpus: " + path);
    return out;
}

// Split request: either explicit class lists or a ratio plus seed.
struct SplitSpec {
    bool explicit_lists = false;
    std::vector<std::string> train, val, test;
    std::vector<double> ratio; // three entries, e.g. {64, 16, 20}
    std::uint64_t seed = 0;

    static SplitSpec from_json(const nlohmann::json& j) {
        SplitSpec s;
        if (j.contains("train") || j.contains("val") || j.contains("test")) {
            s.explicit_lists = true;
            for (const auto& v : j.value("train", nlohmann::json::array()))
                s.train.push_back(v.get<std::string>());
            for (const auto& v : j.value("val", nlohmann::json::array()))
                s.val.push_back(v.get<std::string>());
            for (const auto& v : j.value("test", nlohmann::json::array()))
                s.test.push_back(v.get<std::string>());
        } else if (j.contains("ratio")) {
            for (const auto& v : j["ratio"]) s.ratio.push_back(v.get<double>());
            if (s.ratio.size() != 3) throw ConfigError("split ratio must have three entries");
            s.seed = j.value("seed", 0ULL);
        } else {
            throw ConfigError("split spec needs either class lists or a ratio");
        }
        return s;
    }
};

inline std::vector<std::string> distinct_classes(const std::vector<LabeledInstance>& instances) {
    std::set<std::string> s;
    for (const auto& inst : instances) s.insert(inst.label);
    return {s.begin(), s.end()};
}

namespace detail {
inline void check_disjoint(const ClassSplit& split) {
    std::set<std::string> seen;
    auto scan = [&](const std::vector<std::string>& v, const char* which) {
        for (const auto& c : v) {
            if (!seen.insert(c).second)
                throw DataError("class '" + c + "' assigned to more than one split (" + which +
                                ")");
        }
    };
    scan(split.train_classes, "train");
    scan(split.val_classes, "val");
    scan(split.test_classes, "test");
    if (split.train_classes.empty() || split.val_classes.empty() || split.test_classes.empty())
        throw DataError("every split must receive at least one class");
}
} // namespace detail

// Partitions the corpus classes. Explicit lists are validated against the
// corpus; a ratio spec shuffles the sorted class list with the given seed and
// cuts it by largest-remainder apportionment.
inline ClassSplit split_classes(const std::vector<LabeledInstance>& instances,
                                const SplitSpec& spec) {
    std::vector<std::string> classes = distinct_classes(instances);
    std::set<std::string> known(classes.begin(), classes.end());

    ClassSplit out;
    if (spec.explicit_lists) {
        for (const auto* lst : {&spec.train, &spec.val, &spec.test})
            for (const auto& c : *lst)
                if (!known.count(c)) throw DataError("split names unknown class '" + c + "'");
        out.train_classes = spec.train;
        out.val_classes = spec.val;
        out.test_classes = spec.test;
    } else {
        const double total = spec.ratio[0] + spec.ratio[1] + spec.ratio[2];
        if (total <= 0) throw ConfigError("split ratio must be positive");
        const auto n = classes.size();
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (int i = 0; i < 3; ++i) {
            double exact = static_cast<double>(n) * spec.ratio[static_cast<std::size_t>(i)] / total;
            counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(exact);
            rem[static_cast<std::size_t>(i)] = exact - std::floor(exact);
            assigned += counts[static_cast<std::size_t>(i)];
        }
        while (assigned < n) {
            int best = 0;
            for (int i = 1; i < 3; ++i)
                if (rem[static_cast<std::size_t>(i)] > rem[static_cast<std::size_t>(best)]) best = i;
            ++counts[static_cast<std::size_t>(best)];
            rem[static_cast<std::size_t>(best)] = -1;
            ++assigned;
        }
        Rng rng(spec.seed);
        rng.shuffle(classes);
        out.train_classes.assign(classes.begin(), classes.begin() + counts[0]);
        out.val_classes.assign(classes.begin() + counts[0], classes.begin() + counts[0] + counts[1]);
        out.test_classes.assign(classes.begin() + counts[0] + counts[1], classes.end());
    }
    std::sort(out.train_classes.begin(), out.train_classes.end());
    std::sort(out.val_classes.begin(), out.val_classes.end());
    std::sort(out.test_classes.begin(), out.test_classes.end());
    detail::check_disjoint(out);
    return out;
}

inline nlohmann::json split_to_json(const ClassSplit& s) {
    return nlohmann::json{{"train", s.train_classes}, {"val", s.val_classes},
                          {"test", s.test_classes}};
}

} // namespace fosm
