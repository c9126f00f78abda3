#include "palette/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "json_serde.hpp"
#include "palette/errors.hpp"

namespace palette {

namespace {

void write_u64(std::ofstream& f, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::ifstream& f) {
    unsigned char buf[8];
    f.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

// Parameter payloads are raw doubles; this container targets little-endian
// hosts only and refuses to run elsewhere rather than silently corrupting.
void require_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) {
        throw IoError("checkpoint: big-endian hosts are not supported");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, MultiTaskModel& model, const Vocab* vocab) {
    require_little_endian();
    serde::json header;
    header["format_version"] = 1;
    header["model"] = serde::model_config_to_json(model.config());
    header["adapter"] = serde::adapter_spec_to_json(model.adapter_spec());
    header["heads"] = serde::head_specs_to_json(model.head_specs());
    if (vocab != nullptr) {
        serde::json toks = serde::json::array();
        for (int i = 0; i < vocab->size(); ++i) toks.push_back(vocab->token(i));
        header["vocab"] = std::move(toks);
    }
    serde::json tensors = serde::json::array();
    std::uint64_t offset = 0;
    for (const NamedParam& p : model.parameters()) {
        serde::json t;
        t["name"] = p.name;
        t["shape"] = p.tensor.shape();
        t["offset"] = offset;
        t["count"] = p.tensor.numel();
        tensors.push_back(std::move(t));
        offset += p.tensor.numel();
    }
    header["tensors"] = std::move(tensors);
    const std::string header_text = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("checkpoint: cannot open '" + path + "' for writing");
    }
    f.write(kCheckpointMagic, sizeof kCheckpointMagic);
    write_u64(f, header_text.size());
    f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const NamedParam& p : model.parameters()) {
        const auto& d = p.tensor.data();
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!f) {
        throw IoError("checkpoint: write failed for '" + path + "'");
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    require_little_endian();
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("checkpoint: cannot open '" + path + "'");
    }
    char magic[sizeof kCheckpointMagic];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    const std::uint64_t header_len = read_u64(f);
    std::string header_text(header_len, '\0');
    f.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!f) {
        throw IoError("checkpoint: truncated header in '" + path + "'");
    }
    serde::json header;
    try {
        header = serde::json::parse(header_text);
    } catch (const serde::json::exception& e) {
        throw IoError("checkpoint: bad header in '" + path + "': " + e.what());
    }
    if (header.value("format_version", 0) != 1) {
        throw IoError("checkpoint: unsupported format version in '" + path + "'");
    }
    const ModelConfig cfg = serde::model_config_from_json(header.at("model"));
    const AdapterSpec spec = serde::adapter_spec_from_json(header.at("adapter"));
    const auto heads = serde::head_specs_from_json(header.at("heads"));

    LoadedCheckpoint loaded;
    if (auto it = header.find("vocab"); it != header.end()) {
        Vocab v;
        const auto& toks = *it;
        for (std::size_t i = 4; i < toks.size(); ++i) {  // specials are implicit
            v.add(toks[i].get<std::string>());
        }
        loaded.vocab = std::move(v);
    }
    auto model = std::make_unique<MultiTaskModel>(cfg, spec, heads, /*seed=*/0);
    const auto& params = model->parameters();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) {
        throw ConfigError("checkpoint: tensor directory has " + std::to_string(tensors.size()) +
                          " entries, model expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != params[i].name) {
            throw ConfigError("checkpoint: tensor " + std::to_string(i) + " is '" +
                              t.at("name").get<std::string>() + "', expected '" +
                              params[i].name + "'");
        }
        if (t.at("count").get<std::uint64_t>() != params[i].tensor.numel()) {
            throw ConfigError("checkpoint: size mismatch for '" + params[i].name + "'");
        }
        auto& d = const_cast<Tensor&>(params[i].tensor).data();
        f.read(reinterpret_cast<char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!f) {
        throw IoError("checkpoint: truncated payload in '" + path + "'");
    }
    loaded.model = std::move(model);
    return loaded;
}

}  // namespace palette
