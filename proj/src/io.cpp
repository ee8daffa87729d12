#include "stgcn/io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "stgcn/csv.hpp"
#include "stgcn/error.hpp"

namespace stgcn {

using nlohmann::json;

// --- dataset -----------------------------------------------------------------

DatasetManifest read_manifest(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IOError(path + ": invalid manifest JSON: " + e.what());
    }
    DatasetManifest m;
    if (!j.contains("values_csv") || !j.at("values_csv").is_array() || j.at("values_csv").empty())
        throw IOError(path + ": manifest needs a non-empty 'values_csv' list");
    const auto dir = std::filesystem::path(path).parent_path();
    for (const auto& f : j.at("values_csv")) {
        const std::string rel = f.get<std::string>();
        const std::filesystem::path p(rel);
        m.values_csv.push_back(p.is_absolute() ? rel : (dir / p).string());
    }
    if (j.contains("timeslot_minutes")) m.timeslot_minutes = j.at("timeslot_minutes").get<double>();
    return m;
}

Tensor load_dataset(DatasetManifest& manifest) {
    std::vector<CsvTable> tables;
    for (const std::string& path : manifest.values_csv) tables.push_back(read_csv(path));

    const auto& ids = tables[0].header;
    {
        std::vector<std::string> sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        auto dup = std::adjacent_find(sorted.begin(), sorted.end());
        if (dup != sorted.end())
            throw IOError(manifest.values_csv[0] + ": duplicate node id '" + *dup + "'");
    }
    const int64_t n = static_cast<int64_t>(ids.size());
    const int64_t t = static_cast<int64_t>(tables[0].rows.size());
    if (t == 0) throw IOError(manifest.values_csv[0] + ": no data rows");
    const int64_t c = static_cast<int64_t>(tables.size());

    for (size_t ch = 1; ch < tables.size(); ++ch) {
        if (tables[ch].header != ids)
            throw IOError(manifest.values_csv[ch] + ": node ids differ from " +
                          manifest.values_csv[0]);
        if (static_cast<int64_t>(tables[ch].rows.size()) != t)
            throw IOError(manifest.values_csv[ch] + ": row count differs from " +
                          manifest.values_csv[0]);
    }

    std::vector<double> out(static_cast<size_t>(t * n * c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const auto& rows = tables[static_cast<size_t>(ch)].rows;
        for (int64_t r = 0; r < t; ++r) {
            for (int64_t col = 0; col < n; ++col) {
                const std::string& cell = rows[static_cast<size_t>(r)][static_cast<size_t>(col)];
                const std::string where = manifest.values_csv[static_cast<size_t>(ch)] + ": row " +
                                          std::to_string(r + 2) + " column " +
                                          std::to_string(col + 1) + " (node '" +
                                          ids[static_cast<size_t>(col)] + "')";
                const double v = parse_double(cell, where);
                if (std::isnan(v)) throw IOError(where + ": cell is NaN");
                if (!std::isfinite(v)) throw IOError(where + ": cell is not finite");
                out[static_cast<size_t>((r * n + col) * c + ch)] = v;
            }
        }
    }
    manifest.node_ids = ids;
    return Tensor({t, n, c}, std::move(out));
}

// --- checkpoint -----------------------------------------------------------------

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
    static uint32_t table[256];
    static bool ready = false;
    if (!ready) {
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            table[i] = c;
        }
        ready = true;
    }
    uint32_t c = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t read_u32(const std::string& s, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(s[off + static_cast<size_t>(i)])) << (8 * i);
    return v;
}

uint64_t read_u64(const std::string& s, size_t off) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(s[off + static_cast<size_t>(i)])) << (8 * i);
    return v;
}

void append_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    append_u32(out, bits);
}

float read_f32(const std::string& s, size_t off) {
    const uint32_t bits = read_u32(s, off);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& cfg,
                     const NormBounds& bounds) {
    json index = json::array();
    std::string payload;
    int64_t offset = 0;
    const_cast<ModelParams&>(model.params()).visit([&](const std::string& name, Tensor& t) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        for (double v : t.data()) append_f32(payload, static_cast<float>(v));
        offset += t.size();
    });

    json header{{"params", index},
                {"config", json::parse(config_to_json(cfg))},
                {"bounds", {{"lo", bounds.lo}, {"hi", bounds.hi}}},
                {"graph_fingerprint", adjacency_fingerprint(model.graph())}};
    const std::string header_text = header.dump();

    std::string blob;
    append_u32(blob, kCheckpointVersion);
    append_u64(blob, header_text.size());
    blob += header_text;
    blob += payload;
    append_u32(blob, crc32(reinterpret_cast<const uint8_t*>(blob.data()), blob.size()));
    write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string blob = read_file(path);
    if (blob.size() < 16) throw IOError(path + ": checkpoint truncated");
    const uint32_t version = read_u32(blob, 0);
    if (version != kCheckpointVersion)
        throw IOError(path + ": checkpoint version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    const uint64_t header_len = read_u64(blob, 4);
    if (blob.size() < 12 + header_len + 4) throw IOError(path + ": checkpoint truncated");

    const uint32_t stored_crc = read_u32(blob, blob.size() - 4);
    const uint32_t actual_crc =
        crc32(reinterpret_cast<const uint8_t*>(blob.data()), blob.size() - 4);
    if (stored_crc != actual_crc) throw IOError(path + ": checksum mismatch, file is corrupt");

    json header;
    try {
        header = json::parse(blob.substr(12, header_len));
    } catch (const json::exception& e) {
        throw IOError(path + ": bad checkpoint header: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config").dump());
    ckpt.bounds = NormBounds{header.at("bounds").at("lo").get<double>(),
                             header.at("bounds").at("hi").get<double>()};
    ckpt.graph_fingerprint = header.at("graph_fingerprint").get<uint64_t>();

    const size_t payload_begin = 12 + header_len;
    const size_t payload_len = blob.size() - 4 - payload_begin;
    for (const auto& entry : header.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        Shape shape = entry.at("shape").get<Shape>();
        const int64_t offset = entry.at("offset").get<int64_t>();
        const int64_t count = shape_size(shape);
        if (static_cast<size_t>((offset + count) * 4) > payload_len)
            throw IOError(path + ": payload truncated for parameter '" + name + "'");
        std::vector<double> values(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i)
            values[static_cast<size_t>(i)] =
                static_cast<double>(read_f32(blob, payload_begin + static_cast<size_t>((offset + i) * 4)));
        ckpt.params.emplace_back(name, Tensor(std::move(shape), std::move(values)));
    }
    return ckpt;
}

Model restore_model(const Checkpoint& ckpt, const TrafficGraph& graph) {
    if (adjacency_fingerprint(graph) != ckpt.graph_fingerprint)
        throw IOError("checkpoint was trained on a different graph (fingerprint mismatch)");
    const TrainConfig& cfg = ckpt.config;
    Model model(graph, cfg.model, cfg.input_steps, cfg.horizon, cfg.channels, cfg.seed);

    std::map<std::string, const Tensor*> saved;
    for (const auto& [name, tensor] : ckpt.params) saved[name] = &tensor;
    model.params().visit([&](const std::string& name, Tensor& t) {
        auto it = saved.find(name);
        if (it == saved.end()) throw IOError("checkpoint is missing parameter '" + name + "'");
        if (it->second->shape() != t.shape())
            throw IOError("checkpoint parameter '" + name + "' has shape " +
                          shape_str(it->second->shape()) + ", model expects " +
                          shape_str(t.shape()));
        t = *it->second;
    });
    return model;
}

}  // namespace stgcn
