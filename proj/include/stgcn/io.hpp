#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stgcn/config.hpp"
#include "stgcn/data.hpp"
#include "stgcn/graph.hpp"
#include "stgcn/model.hpp"
#include "stgcn/tensor.hpp"

namespace stgcn {

// --- dataset -----------------------------------------------------------------

// One values CSV per channel: rows are time steps, columns are nodes, the
// header row carries the node ids. All channel files must agree on shape and
// node order.
struct DatasetManifest {
    std::vector<std::string> values_csv;  // resolved paths
    double timeslot_minutes = 0.0;
    std::vector<std::string> node_ids;  // filled from the first header
};

DatasetManifest read_manifest(const std::string& path);

// Dense [time, N, C] tensor; missing or non-numeric cells are load errors
// naming the row and column.
Tensor load_dataset(DatasetManifest& manifest);

// --- checkpoint -----------------------------------------------------------------

// Layout: u32 version, u64 header length, JSON header (parameter index,
// config echo, bounds, graph fingerprint), little-endian float32 payload,
// trailing CRC32 over everything before it.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    NormBounds bounds;
    uint64_t graph_fingerprint = 0;
    std::vector<std::pair<std::string, Tensor>> params;  // widened to f64
};

void save_checkpoint(const std::string& path, const Model& model, const TrainConfig& cfg,
                     const NormBounds& bounds);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model from the config echo and loads the saved parameters;
// rejects a graph whose fingerprint differs from the trained one.
Model restore_model(const Checkpoint& ckpt, const TrafficGraph& graph);

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

}  // namespace stgcn
