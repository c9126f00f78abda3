// Private JSON (de)serialisation for config structs, shared by the
// checkpoint container and the experiment config loader. Deserialisation is
// strict: unknown keys are rejected.
#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "palette/adapters.hpp"
#include "palette/errors.hpp"
#include "palette/model.hpp"
#include "palette/model_config.hpp"

namespace palette::serde {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
    if (!j.is_object()) {
        throw ConfigError(context + ": expected an object");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (allowed.find(it.key()) == allowed.end()) {
            throw ConfigError(context + ": unknown key '" + it.key() + "'");
        }
    }
}

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

inline json model_config_to_json(const ModelConfig& c) {
    return json{{"d_m", c.d_m},
                {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},
                {"vocab_size", c.vocab_size},
                {"max_seq_len", c.max_seq_len},
                {"n_segment_types", c.n_segment_types},
                {"use_position_embeddings", c.use_position_embeddings},
                {"embed_layer_norm", c.embed_layer_norm},
                {"init_std", c.init_std}};
}

inline ModelConfig model_config_from_json(const json& j) {
    check_keys(j,
               {"d_m", "n_layers", "n_heads", "d_ff", "vocab_size", "max_seq_len",
                "n_segment_types", "use_position_embeddings", "embed_layer_norm", "init_std"},
               "model");
    ModelConfig c;
    get_if_present(j, "d_m", c.d_m);
    get_if_present(j, "n_layers", c.n_layers);
    get_if_present(j, "n_heads", c.n_heads);
    get_if_present(j, "d_ff", c.d_ff);
    get_if_present(j, "vocab_size", c.vocab_size);
    get_if_present(j, "max_seq_len", c.max_seq_len);
    get_if_present(j, "n_segment_types", c.n_segment_types);
    get_if_present(j, "use_position_embeddings", c.use_position_embeddings);
    get_if_present(j, "embed_layer_norm", c.embed_layer_norm);
    get_if_present(j, "init_std", c.init_std);
    return c;
}

inline json adapter_spec_to_json(const AdapterSpec& s) {
    json j{{"family", family_name(s.family)},
           {"d_s", s.d_s},
           {"inner_size", s.inner_size},
           {"n_heads_s", s.n_heads_s},
           {"composition", s.composition == Composition::kParallel ? "parallel" : "serial"},
           {"share_proj_across_layers", s.share_proj_across_layers},
           {"n_top_layers", s.n_top_layers},
           {"share_pooling", s.share_pooling}};
    if (!s.layer_mask.empty()) {
        json m = json::array();
        for (auto b : s.layer_mask) m.push_back(b != 0);
        j["layer_mask"] = m;
    }
    return j;
}

inline AdapterSpec adapter_spec_from_json(const json& j) {
    check_keys(j,
               {"family", "d_s", "inner_size", "n_heads_s", "composition",
                "share_proj_across_layers", "n_top_layers", "share_pooling", "layer_mask"},
               "adapter");
    AdapterSpec s;
    if (auto it = j.find("family"); it != j.end()) {
        s.family = family_from_name(it->get<std::string>());
    }
    get_if_present(j, "d_s", s.d_s);
    get_if_present(j, "inner_size", s.inner_size);
    get_if_present(j, "n_heads_s", s.n_heads_s);
    if (auto it = j.find("composition"); it != j.end()) {
        const std::string c = it->get<std::string>();
        if (c == "parallel") {
            s.composition = Composition::kParallel;
        } else if (c == "serial") {
            s.composition = Composition::kSerial;
        } else {
            throw ConfigError("adapter.composition must be 'parallel' or 'serial', got '" + c +
                              "'");
        }
    }
    get_if_present(j, "share_proj_across_layers", s.share_proj_across_layers);
    get_if_present(j, "n_top_layers", s.n_top_layers);
    get_if_present(j, "share_pooling", s.share_pooling);
    if (auto it = j.find("layer_mask"); it != j.end()) {
        for (const auto& v : *it) s.layer_mask.push_back(v.get<bool>() ? 1 : 0);
    }
    return s;
}

inline json head_specs_to_json(const std::vector<TaskHeadSpec>& heads) {
    json arr = json::array();
    for (const auto& h : heads) {
        arr.push_back(json{{"n_outputs", h.n_outputs}, {"regression", h.regression}});
    }
    return arr;
}

inline std::vector<TaskHeadSpec> head_specs_from_json(const json& arr) {
    std::vector<TaskHeadSpec> heads;
    for (const auto& j : arr) {
        check_keys(j, {"n_outputs", "regression"}, "head");
        TaskHeadSpec h;
        get_if_present(j, "n_outputs", h.n_outputs);
        get_if_present(j, "regression", h.regression);
        heads.push_back(h);
    }
    return heads;
}

}  // namespace palette::serde
