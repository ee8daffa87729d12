#include "stgcn/config.hpp"

#include <json.hpp>

#include "stgcn/csv.hpp"
#include "stgcn/error.hpp"

namespace stgcn {

using nlohmann::json;

namespace {

json model_to_json(const ModelConfig& m) {
    json kernels = json::array();
    for (const KernelSize& k : m.kernels) kernels.push_back({k.kt, k.ks});
    return json{{"blocks", m.blocks},
                {"kernels", kernels},
                {"cheb_order", m.cheb_order},
                {"branch_channels", m.branch_channels},
                {"embed_dim", m.embed_dim},
                {"se_reduction", m.se_reduction},
                {"fc_hidden", m.fc_hidden},
                {"use_mask", m.use_mask},
                {"use_attention", m.use_attention},
                {"key_transform", m.key_transform},
                {"ts_light", m.ts_light}};
}

template <class T>
void pick(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    pick(j, "blocks", m.blocks);
    if (j.contains("kernels")) {
        m.kernels.clear();
        for (const auto& k : j.at("kernels")) {
            if (!k.is_array() || k.size() != 2)
                throw ConfigError("config: each kernel must be a [kt, ks] pair");
            m.kernels.push_back(KernelSize{k.at(0).get<int>(), k.at(1).get<int>()});
        }
    }
    pick(j, "cheb_order", m.cheb_order);
    pick(j, "branch_channels", m.branch_channels);
    pick(j, "embed_dim", m.embed_dim);
    pick(j, "se_reduction", m.se_reduction);
    pick(j, "fc_hidden", m.fc_hidden);
    pick(j, "use_mask", m.use_mask);
    pick(j, "use_attention", m.use_attention);
    pick(j, "key_transform", m.key_transform);
    pick(j, "ts_light", m.ts_light);
    return m;
}

}  // namespace

std::string config_to_json(const TrainConfig& cfg) {
    json j{{"epochs", cfg.epochs},
           {"batch_size", cfg.batch_size},
           {"learning_rate", cfg.learning_rate},
           {"seed", cfg.seed},
           {"input_steps", cfg.input_steps},
           {"horizon", cfg.horizon},
           {"channels", cfg.channels},
           {"split", cfg.split},
           {"two_phase", cfg.two_phase},
           {"clip_norm", cfg.clip_norm},
           {"ha_period", cfg.ha_period},
           {"model", model_to_json(cfg.model)}};
    return j.dump(2);
}

TrainConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    TrainConfig cfg;
    pick(j, "epochs", cfg.epochs);
    pick(j, "batch_size", cfg.batch_size);
    pick(j, "learning_rate", cfg.learning_rate);
    pick(j, "seed", cfg.seed);
    pick(j, "input_steps", cfg.input_steps);
    pick(j, "horizon", cfg.horizon);
    pick(j, "channels", cfg.channels);
    if (j.contains("split")) {
        const auto& s = j.at("split");
        if (!s.is_array() || s.size() != 3)
            throw ConfigError("config: split must be three ratios");
        for (size_t i = 0; i < 3; ++i) cfg.split[i] = s.at(i).get<int>();
    }
    pick(j, "two_phase", cfg.two_phase);
    pick(j, "clip_norm", cfg.clip_norm);
    pick(j, "ha_period", cfg.ha_period);
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));

    if (cfg.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("config: learning_rate must be positive");
    if (cfg.input_steps < 1 || cfg.horizon < 1)
        throw ConfigError("config: input_steps and horizon must be positive");
    if (cfg.ha_period < 1) throw ConfigError("config: ha_period must be >= 1");
    return cfg;
}

TrainConfig load_config_file(const std::string& path) {
    return config_from_json(read_file(path));
}

}  // namespace stgcn
