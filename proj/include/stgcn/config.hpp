#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "stgcn/model.hpp"

namespace stgcn {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    int input_steps = 12;  // T
    int horizon = 6;       // M
    int channels = 1;      // C, echoed for checkpoint reconstruction
    std::array<int, 3> split = {6, 2, 2};
    bool two_phase = false;
    double clip_norm = 5.0;
    int ha_period = 24;
    ModelConfig model;
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& json_text);
TrainConfig load_config_file(const std::string& path);

}  // namespace stgcn
