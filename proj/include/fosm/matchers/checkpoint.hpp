#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fosm/ag/params.hpp"
#include "fosm/core/errors.hpp"

namespace fosm {

// Named-tensor container, version 1:
//
//   bytes 0..3   magic "FTNS"
//   bytes 4..7   format version (uint32, little-endian)
//   bytes 8..15  header length H (uint64, little-endian)
//   H bytes      UTF-8 JSON header:
//                  {"dtype": "f64",
//                   "meta": {...caller-supplied...},
//                   "tensors": [{"name", "rows", "cols", "offset"}, ...]}
//   rest         tensor payloads: column-major float64, little-endian,
//                at the byte offsets given in the header
//
// Tensors are always stored as float64 regardless of the training precision,
// so checkpoints stay interchangeable.

struct Checkpoint {
    ag::ParamSet<double> params;
    nlohmann::json meta;
};

inline void save_checkpoint(const std::string& path, const ag::ParamSet<double>& params,
                            const nlohmann::json& meta) {
    nlohmann::json header;
    header["dtype"] = "f64";
    header["meta"] = meta;
    auto tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = params.tensor(i);
        tensors.push_back({{"name", params.names()[i]},
                           {"rows", t.rows()},
                           {"cols", t.cols()},
                           {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.size()) * sizeof(double);
    }
    header["tensors"] = std::move(tensors);
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("FTNS", 4);
    std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = params.tensor(i);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(static_cast<std::size_t>(t.size()) * sizeof(double)));
    }
    if (!out) throw DataError("short write while saving checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FTNS", 4) != 0)
        throw DataError("not a checkpoint container: " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError("truncated checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("corrupt checkpoint header (" + std::string(e.what()) + "): " + path);
    }
    if (header.value("dtype", "") != "f64")
        throw DataError("unsupported checkpoint dtype: " + path);

    Checkpoint ck;
    ck.meta = header.value("meta", nlohmann::json::object());
    const std::streampos data_start = in.tellg();
    for (const auto& t : header["tensors"]) {
        const auto rows = t["rows"].get<Index>();
        const auto cols = t["cols"].get<Index>();
        const auto offset = t["offset"].get<std::uint64_t>();
        Mat<double> m(rows, cols);
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint payload: " + path);
        ck.params.add(t["name"].get<std::string>(), std::move(m));
    }
    return ck;
}

} // namespace fosm
