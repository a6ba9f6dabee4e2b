#include "dse/model_io.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace dse {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'E', 'M'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated model file while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4, "float32 blobs require 4-byte float");

std::vector<ModelBlob> params_to_blobs(const std::vector<nn::Param*>& params) {
    std::vector<ModelBlob> blobs;
    blobs.reserve(params.size());
    for (const nn::Param* p : params) {
        ModelBlob b;
        b.name = p->name;
        b.data.reserve(p->w.size());
        for (double v : p->w) b.data.push_back(static_cast<float>(v));
        blobs.push_back(std::move(b));
    }
    return blobs;
}

void blobs_to_params(const std::vector<ModelBlob>& blobs,
                     const std::vector<nn::Param*>& params,
                     std::vector<double>* eps_pool) {
    std::map<std::string, nn::Param*> by_name;
    for (nn::Param* p : params) by_name[p->name] = p;

    std::map<std::string, bool> filled;
    for (const ModelBlob& b : blobs) {
        if (eps_pool && b.name == "eps.pool") {
            eps_pool->assign(b.data.begin(), b.data.end());
            continue;
        }
        auto it = by_name.find(b.name);
        if (it == by_name.end()) throw FormatError("unexpected parameter blob: " + b.name);
        nn::Param* p = it->second;
        if (b.data.size() != p->w.size())
            throw FormatError("parameter blob " + b.name + " has " +
                              std::to_string(b.data.size()) + " values, expected " +
                              std::to_string(p->w.size()));
        for (size_t i = 0; i < b.data.size(); ++i) p->w[i] = b.data[i];
        filled[b.name] = true;
    }
    for (const auto& [name, p] : by_name)
        if (!filled.count(name)) throw FormatError("missing parameter blob: " + name);
}

}  // namespace

void write_model_file(const ModelFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kModelFormatVersion);

    const std::string header = file.header.dump();
    put_u32(out, static_cast<uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    put_u32(out, static_cast<uint32_t>(file.blobs.size()));
    for (const ModelBlob& b : file.blobs) {
        put_u32(out, static_cast<uint32_t>(b.name.size()));
        out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
        put_u32(out, static_cast<uint32_t>(b.data.size()));
        if (!b.data.empty())
            out.write(reinterpret_cast<const char*>(b.data.data()),
                      static_cast<std::streamsize>(b.data.size() * 4));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

ModelFile read_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in) throw FormatError("truncated model file " + path.string());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    const uint32_t version = get_u32(in, "version");
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model version " + std::to_string(version));

    const uint32_t header_len = get_u32(in, "header length");
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError("truncated model header in " + path.string());

    ModelFile file;
    try {
        file.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid model header JSON: " + std::string(e.what()));
    }

    const uint32_t n_blobs = get_u32(in, "blob count");
    file.blobs.reserve(n_blobs);
    for (uint32_t i = 0; i < n_blobs; ++i) {
        ModelBlob b;
        const uint32_t name_len = get_u32(in, "blob name length");
        b.name.resize(name_len);
        in.read(b.name.data(), name_len);
        if (!in) throw FormatError("truncated blob name in " + path.string());
        const uint32_t count = get_u32(in, "blob size");
        b.data.resize(count);
        if (count) {
            in.read(reinterpret_cast<char*>(b.data.data()),
                    static_cast<std::streamsize>(static_cast<size_t>(count) * 4));
            if (!in) throw FormatError("truncated blob data in " + path.string());
        }
        file.blobs.push_back(std::move(b));
    }
    return file;
}

void quantize_params(const std::vector<nn::Param*>& params) {
    for (nn::Param* p : params)
        for (double& v : p->w) v = static_cast<float>(v);
}

// ---- Translator models -----------------------------------------------------------

void save_model(TranslatorModel& model, const std::filesystem::path& path) {
    if (!model.predictor) throw ConfigError("cannot save a model without a predictor");

    std::vector<nn::Param*> params = model.predictor->params();
    for (nn::Param* p : codec_params(model.codec)) params.push_back(p);
    quantize_params(params);
    for (double& v : model.eps.pool) v = static_cast<float>(v);

    ModelFile file;
    file.header = {
        {"kind", "translator"},
        {"arch", model.predictor->arch_json()},
        {"codec", codec_descriptor(model.codec)},
        {"schedule",
         {{"total_steps", model.schedule.total_steps},
          {"variance_scale", model.schedule.variance_scale}}},
        {"eps",
         {{"kind", model.eps.kind == EpsSource::Kind::TargetEmpirical ? "target_empirical"
                                                                      : "standard_normal"},
          {"scale", model.eps.scale}}},
        {"context_count", model.context_count},
    };
    file.blobs = params_to_blobs(params);
    if (model.eps.kind == EpsSource::Kind::TargetEmpirical) {
        ModelBlob pool;
        pool.name = "eps.pool";
        pool.data.assign(model.eps.pool.begin(), model.eps.pool.end());
        file.blobs.push_back(std::move(pool));
    }
    write_model_file(file, path);
}

TranslatorModel load_model(const std::filesystem::path& path) {
    const ModelFile file = read_model_file(path);
    if (file.header.at("kind").get<std::string>() != "translator")
        throw FormatError("model file is not a translator model");

    TranslatorModel model;
    model.predictor = make_predictor(file.header.at("arch"));
    model.codec = codec_from_descriptor(file.header.at("codec"));
    const auto& sched = file.header.at("schedule");
    model.schedule = make_schedule(sched.at("total_steps").get<int>(),
                                   sched.at("variance_scale").get<double>());
    const auto& eps = file.header.at("eps");
    const std::string eps_kind = eps.at("kind").get<std::string>();
    if (eps_kind == "target_empirical")
        model.eps.kind = EpsSource::Kind::TargetEmpirical;
    else if (eps_kind == "standard_normal")
        model.eps.kind = EpsSource::Kind::StandardNormal;
    else
        throw FormatError("unknown eps source kind: " + eps_kind);
    model.eps.scale = eps.at("scale").get<double>();
    model.context_count = file.header.at("context_count").get<int>();

    std::vector<nn::Param*> params = model.predictor->params();
    for (nn::Param* p : codec_params(model.codec)) params.push_back(p);
    blobs_to_params(file.blobs, params,
                    model.eps.kind == EpsSource::Kind::TargetEmpirical ? &model.eps.pool
                                                                       : nullptr);
    if (model.eps.kind == EpsSource::Kind::TargetEmpirical && model.eps.pool.empty())
        throw FormatError("empirical eps source requires an eps.pool blob");
    return model;
}

// ---- Denoiser models --------------------------------------------------------------

void save_denoiser(DenoiserModel& model, const std::filesystem::path& path) {
    std::vector<nn::Param*> params = model.params();
    quantize_params(params);
    ModelFile file;
    file.header = {{"kind", "denoiser"},
                   {"channels", model.channels},
                   {"hidden", model.hidden}};
    file.blobs = params_to_blobs(params);
    write_model_file(file, path);
}

DenoiserModel load_denoiser(const std::filesystem::path& path) {
    const ModelFile file = read_model_file(path);
    if (file.header.at("kind").get<std::string>() != "denoiser")
        throw FormatError("model file is not a denoiser model");
    DenoiserModel model(file.header.at("channels").get<int>(),
                        file.header.at("hidden").get<int>());
    blobs_to_params(file.blobs, model.params(), nullptr);
    return model;
}

}  // namespace dse
