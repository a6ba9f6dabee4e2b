// dse — seeded, config-driven experiment pipeline over the library: corpus
// generation, speckle simulation, despeckling, codec and translator
// training, SAR-to-EO translation, ensemble variance maps, evaluation, and
// report merging.
//
// Every command resolves its configuration as built-in defaults <- JSON
// config file (--config) <- explicit flags (flags win), rejects unknown
// config keys, and writes <out>/run.json echoing the resolved config plus
// result metrics. Re-running a command from its own run.json reproduces the
// outputs byte for byte: all randomness is explicitly seeded and nothing
// here reads the clock. No command mutates its inputs.
//
// Exit codes: 0 success, 1 usage error (flags, config schema), 2 runtime
// error (I/O, formats, numerics).

#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dse/bridge.hpp"
#include "dse/despeckle.hpp"
#include "dse/error.hpp"
#include "dse/latent.hpp"
#include "dse/metrics.hpp"
#include "dse/model_io.hpp"
#include "dse/speckle.hpp"
#include "dse/synthdata.hpp"
#include "dse/tile.hpp"
#include "dse/translator.hpp"

using namespace dse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCliVersion = "1.0.0";

// ---- Config plumbing ---------------------------------------------------------------------

// Per-subcommand parse state: the config file path plus the overrides
// accumulated from explicit flags.
struct CmdState {
    std::string name;
    json defaults;
    std::string config_path;
    json overrides = json::object();
};

// Loads a config file, transparently unwrapping a run.json produced by the
// same command so any run can be replayed with --config <out>/run.json.
json load_config_file(const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("invalid JSON in " + path + ": " + e.what());
    }
    if (j.is_object() && j.contains("command") && j.contains("config")) {
        const std::string cmd = j.at("command").get<std::string>();
        if (cmd != command)
            throw ConfigError("config " + path + " echoes command '" + cmd + "', not '" +
                              command + "'");
        return j.at("config");
    }
    return j;
}

json resolve_config(const CmdState& st) {
    json cfg = st.defaults;
    if (!st.config_path.empty()) {
        const json file = load_config_file(st.config_path, st.name);
        if (!file.is_object()) throw ConfigError("config root must be a JSON object");
        for (const auto& [key, value] : file.items()) {
            if (!cfg.contains(key)) throw ConfigError("unknown config key: " + key);
            cfg[key] = value;
        }
    }
    for (const auto& [key, value] : st.overrides.items()) cfg[key] = value;
    return cfg;
}

// Typed field access with named-field errors.
template <typename T>
T get_field(const json& cfg, const std::string& key, const char* type_name) {
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + key + "' must be " + type_name);
    }
}

std::string get_str(const json& cfg, const std::string& key) {
    return get_field<std::string>(cfg, key, "a string");
}
double get_num(const json& cfg, const std::string& key) {
    return get_field<double>(cfg, key, "a number");
}
int get_int(const json& cfg, const std::string& key) {
    return get_field<int>(cfg, key, "an integer");
}
uint64_t get_u64(const json& cfg, const std::string& key) {
    return get_field<uint64_t>(cfg, key, "a non-negative integer");
}
bool get_bool(const json& cfg, const std::string& key) {
    return get_field<bool>(cfg, key, "a boolean");
}
std::vector<std::string> get_str_list(const json& cfg, const std::string& key) {
    return get_field<std::vector<std::string>>(cfg, key, "a list of strings");
}

std::string require_str(const json& cfg, const std::string& key) {
    const std::string v = get_str(cfg, key);
    if (v.empty()) throw ConfigError("config field '" + key + "' is required");
    return v;
}

void write_run_json(const json& cfg, const std::string& command, const json& results) {
    const fs::path out_dir = get_str(cfg, "out");
    fs::create_directories(out_dir);
    const json run = {{"command", command},
                      {"version", kCliVersion},
                      {"config", cfg},
                      {"results", results}};
    const fs::path path = out_dir / "run.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << run.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path.string());
}

// ---- Flag helpers --------------------------------------------------------------------------

void add_str(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
             const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&st, key](const std::string& v) { st.overrides[key] = v; }, desc);
}
void add_int(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
             const std::string& desc) {
    cmd->add_option_function<int>(
        flag, [&st, key](int v) { st.overrides[key] = v; }, desc);
}
void add_num(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
             const std::string& desc) {
    cmd->add_option_function<double>(
        flag, [&st, key](double v) { st.overrides[key] = v; }, desc);
}
void add_u64(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
             const std::string& desc) {
    cmd->add_option_function<uint64_t>(
        flag, [&st, key](uint64_t v) { st.overrides[key] = v; }, desc);
}
void add_switch(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
                const std::string& desc) {
    cmd->add_flag_callback(
        flag, [&st, key]() { st.overrides[key] = true; }, desc);
}
void add_list(CLI::App* cmd, CmdState& st, const std::string& flag, const std::string& key,
              const std::string& desc) {
    cmd->add_option_function<std::vector<std::string>>(
        flag, [&st, key](const std::vector<std::string>& v) { st.overrides[key] = v; }, desc);
}

// ---- Shared pieces -------------------------------------------------------------------------

// Standalone codec container (same DSEM format the translator model embeds).
void save_codec(LatentCodec& codec, const fs::path& path) {
    std::vector<nn::Param*> params = codec_params(codec);
    quantize_params(params);
    ModelFile file;
    file.header = {{"kind", "codec"}, {"codec", codec_descriptor(codec)}};
    for (const nn::Param* p : params) {
        ModelBlob b;
        b.name = p->name;
        b.data.reserve(p->w.size());
        for (double v : p->w) b.data.push_back(static_cast<float>(v));
        file.blobs.push_back(std::move(b));
    }
    write_model_file(file, path);
}

LatentCodec load_codec(const fs::path& path) {
    const ModelFile file = read_model_file(path);
    if (file.header.at("kind").get<std::string>() != "codec")
        throw FormatError("model file is not a codec");
    LatentCodec codec = codec_from_descriptor(file.header.at("codec"));
    std::map<std::string, nn::Param*> by_name;
    for (nn::Param* p : codec_params(codec)) by_name[p->name] = p;
    for (const ModelBlob& b : file.blobs) {
        auto it = by_name.find(b.name);
        if (it == by_name.end()) throw FormatError("unexpected parameter blob: " + b.name);
        if (b.data.size() != it->second->w.size())
            throw FormatError("parameter blob " + b.name + " has the wrong size");
        for (size_t i = 0; i < b.data.size(); ++i) it->second->w[i] = b.data[i];
        by_name.erase(it);
    }
    if (!by_name.empty()) throw FormatError("missing parameter blob: " + by_name.begin()->first);
    return codec;
}

// "identity", "pool", or a path to a codec container.
LatentCodec resolve_codec(const std::string& spec, int pool_factor) {
    if (spec == "identity") return make_identity_codec();
    if (spec == "pool") return make_pool_codec(pool_factor);
    return load_codec(spec);
}

std::optional<double> optional_looks(const json& cfg, const std::string& key) {
    const double v = get_num(cfg, key);
    if (v > 0.0) return v;
    return std::nullopt;
}

SceneSpec scene_spec_from(const json& cfg) {
    SceneSpec spec;
    spec.size = get_int(cfg, "size");
    spec.water_level = get_num(cfg, "water_level");
    spec.smoothness = get_int(cfg, "smoothness");
    spec.looks = get_num(cfg, "looks");
    spec.seed = get_u64(cfg, "seed");
    spec.n_timesteps = get_int(cfg, "n_timesteps");
    return spec;
}

// Reads the conditioning acquisitions: either a single "input" tile or an
// explicit "inputs" list whose first entry doubles as the bridge endpoint.
std::vector<Tile> read_acquisitions(const json& cfg) {
    const std::vector<std::string> many = get_str_list(cfg, "inputs");
    const std::string one = get_str(cfg, "input");
    if (!many.empty() && !one.empty())
        throw ConfigError("give either 'input' or 'inputs', not both");
    if (many.empty() && one.empty())
        throw ConfigError("config field 'input' (or 'inputs') is required");
    std::vector<Tile> tiles;
    if (many.empty()) {
        tiles.push_back(read_tile(one));
    } else {
        tiles.reserve(many.size());
        for (const std::string& p : many) tiles.push_back(read_tile(p));
    }
    return tiles;
}

// ---- Commands ------------------------------------------------------------------------------

int run_gen_data(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const int n = get_int(cfg, "n");
    gen_corpus(out_dir, n, scene_spec_from(cfg));
    write_run_json(cfg, "gen-data", {{"manifest", "manifest.json"}, {"scenes", n}});
    return 0;
}

int run_simulate_speckle(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const Tile clean = read_tile(require_str(cfg, "input"));
    SpeckleParams params;
    params.looks = get_num(cfg, "looks");
    params.seed = get_u64(cfg, "seed");
    const Tile noisy = simulate_speckle(clean, params);
    fs::create_directories(out_dir);
    const std::string output = get_str(cfg, "output");
    write_tile(noisy, out_dir / output);
    write_run_json(cfg, "simulate-speckle", {{"output", output}});
    return 0;
}

int run_despeckle(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const Tile noisy = read_tile(require_str(cfg, "input"));
    const std::optional<double> looks = optional_looks(cfg, "looks");
    const std::string method = get_str(cfg, "method");

    Tile filtered(1, 1, 1, TileKind::SarLinear);
    if (method == "kernel") {
        const KernelBank bank = make_default_kernel_bank();
        filtered = despeckle_kernel(noisy, bank, looks);
    } else if (method == "model") {
        DenoiserModel model = load_denoiser(require_str(cfg, "model"));
        filtered = despeckle_model(noisy, model, looks);
    } else {
        throw ConfigError("config field 'method' must be 'kernel' or 'model'");
    }

    fs::create_directories(out_dir);
    const std::string output = get_str(cfg, "output");
    write_tile(filtered, out_dir / output);
    write_run_json(cfg, "despeckle", {{"output", output}, {"method", method}});
    return 0;
}

int run_train_codec(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const std::vector<SceneRecord> records = load_corpus(require_str(cfg, "manifest"));
    std::vector<Tile> corpus;
    corpus.reserve(records.size());
    for (const SceneRecord& r : records) corpus.push_back(r.eo);

    CodecTrainConfig train_cfg;
    train_cfg.epochs = get_int(cfg, "epochs");
    train_cfg.lr = get_num(cfg, "lr");
    train_cfg.latent_channels = get_int(cfg, "latent_channels");
    train_cfg.factor = get_int(cfg, "factor");
    train_cfg.hidden = get_int(cfg, "hidden");
    train_cfg.seed = get_u64(cfg, "seed");
    CodecTrainResult result = train_codec(corpus, train_cfg);

    fs::create_directories(out_dir);
    const std::string codec_out = get_str(cfg, "codec_out");
    save_codec(result.codec, out_dir / codec_out);
    write_run_json(cfg, "train-codec",
                   {{"codec", codec_out},
                    {"final_loss", result.loss_curve.back()},
                    {"loss_curve", result.loss_curve}});
    return 0;
}

int run_train(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const std::vector<SceneRecord> records = load_corpus(require_str(cfg, "manifest"));
    const int acquisitions = get_int(cfg, "acquisitions");
    if (acquisitions < 1) throw ConfigError("config field 'acquisitions' must be >= 1");

    std::vector<TrainPair> pairs;
    pairs.reserve(records.size());
    for (const SceneRecord& r : records) {
        if (static_cast<int>(r.sar_noisy.size()) < acquisitions)
            throw ArgumentError("corpus record " + r.id + " has " +
                                std::to_string(r.sar_noisy.size()) + " acquisitions, need " +
                                std::to_string(acquisitions));
        TrainPair p;
        p.sar.assign(r.sar_noisy.begin(), r.sar_noisy.begin() + acquisitions);
        p.eo = r.eo;
        pairs.push_back(std::move(p));
    }

    const LatentCodec codec = resolve_codec(get_str(cfg, "codec"), get_int(cfg, "pool_factor"));
    const BridgeSchedule schedule =
        make_schedule(get_int(cfg, "total_steps"), get_num(cfg, "variance_scale"));

    TranslatorTrainConfig train_cfg;
    train_cfg.epochs = get_int(cfg, "epochs");
    train_cfg.batch_size = get_int(cfg, "batch_size");
    train_cfg.lr = get_num(cfg, "lr");
    train_cfg.seed = get_u64(cfg, "seed");
    train_cfg.width = get_int(cfg, "width");
    train_cfg.time_dim = get_int(cfg, "time_dim");
    const std::string eps_kind = get_str(cfg, "eps_kind");
    if (eps_kind == "target_empirical")
        train_cfg.eps_kind = EpsSource::Kind::TargetEmpirical;
    else if (eps_kind == "standard_normal")
        train_cfg.eps_kind = EpsSource::Kind::StandardNormal;
    else
        throw ConfigError(
            "config field 'eps_kind' must be 'target_empirical' or 'standard_normal'");
    train_cfg.eps_scale = get_num(cfg, "eps_scale");

    const KernelBank bank = make_default_kernel_bank();
    SarPreproc pre;
    if (get_bool(cfg, "despeckle")) {
        pre.bank = &bank;
        pre.looks = optional_looks(cfg, "despeckle_looks");
    }

    TranslatorTrainResult result = train_translator(pairs, codec, schedule, train_cfg, pre);

    fs::create_directories(out_dir);
    const std::string model_out = get_str(cfg, "model_out");
    save_model(result.model, out_dir / model_out);
    write_run_json(cfg, "train",
                   {{"model", model_out},
                    {"final_loss", result.loss_curve.back()},
                    {"loss_curve", result.loss_curve}});
    return 0;
}

int run_translate(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const TranslatorModel model = load_model(require_str(cfg, "model"));
    const std::vector<Tile> acq = read_acquisitions(cfg);
    const StepSchedule steps =
        make_step_schedule(model.schedule.total_steps, get_int(cfg, "steps"));

    EpsSource eps = model.eps;
    const double eps_scale = get_num(cfg, "eps_scale");
    if (eps_scale >= 0.0) eps.scale = eps_scale;

    const KernelBank bank = make_default_kernel_bank();
    SarPreproc pre;
    if (get_bool(cfg, "despeckle")) {
        pre.bank = &bank;
        pre.looks = optional_looks(cfg, "despeckle_looks");
    }

    const Tile syneo =
        translate(acq.front(), model, steps, eps, get_u64(cfg, "seed"), pre, &acq);

    fs::create_directories(out_dir);
    const std::string output = get_str(cfg, "output");
    const std::string png = get_str(cfg, "png");
    write_tile(syneo, out_dir / output);
    if (!png.empty()) export_png(syneo, out_dir / png);
    write_run_json(cfg, "translate", {{"output", output}, {"png", png}});
    return 0;
}

int run_ensemble(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const TranslatorModel model = load_model(require_str(cfg, "model"));
    const std::vector<Tile> acq = read_acquisitions(cfg);
    const StepSchedule steps =
        make_step_schedule(model.schedule.total_steps, get_int(cfg, "steps"));

    EpsSource eps = model.eps;
    const double eps_scale = get_num(cfg, "eps_scale");
    if (eps_scale >= 0.0) eps.scale = eps_scale;

    const KernelBank bank = make_default_kernel_bank();
    SarPreproc pre;
    if (get_bool(cfg, "despeckle")) {
        pre.bank = &bank;
        pre.looks = optional_looks(cfg, "despeckle_looks");
    }

    const EnsembleResult result = ensemble_translate(acq.front(), model, steps, eps,
                                                     get_int(cfg, "k"), get_u64(cfg, "seed"),
                                                     pre, &acq);

    fs::create_directories(out_dir);
    write_tile(result.mean, out_dir / get_str(cfg, "mean_dset"));
    export_png(result.mean, out_dir / get_str(cfg, "mean_png"));
    write_tile(result.variance_map, out_dir / get_str(cfg, "variance_dset"));

    // The raw variances are tiny; scale the render by the max so the PNG is
    // inspectable. The scale is recorded so the render stays interpretable.
    double max_var = 0.0, sum_var = 0.0;
    for (float v : result.variance_map.data) {
        max_var = std::max(max_var, static_cast<double>(v));
        sum_var += v;
    }
    Tile render = result.variance_map;
    if (max_var > 0.0)
        for (float& v : render.data) v = static_cast<float>(v / max_var);
    export_png(render, out_dir / get_str(cfg, "variance_png"));

    write_run_json(cfg, "ensemble",
                   {{"mean_variance", sum_var / result.variance_map.data.size()},
                    {"max_variance", max_var},
                    {"samples", get_int(cfg, "k")}});
    return 0;
}

int run_eval_translation(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const Tile pred = read_tile(require_str(cfg, "pred"));
    const Tile ref = read_tile(require_str(cfg, "ref"));
    const double max_val = get_num(cfg, "max_val");
    const double psnr_db = psnr(pred, ref, max_val);
    const double ssim_val = ssim(pred, ref, max_val);

    const ReportTable table = report_table({translation_row(get_str(cfg, "label"), psnr_db,
                                                            ssim_val)});
    fs::create_directories(out_dir);
    const std::string csv = get_str(cfg, "csv");
    std::ofstream out(out_dir / csv, std::ios::trunc);
    if (!out) throw IoError("cannot create " + (out_dir / csv).string());
    out << table.csv;
    std::cout << table.text;
    write_run_json(cfg, "eval-translation",
                   {{"psnr", psnr_db}, {"ssim", ssim_val}, {"csv", csv}});
    return 0;
}

int run_eval_seg(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const Tile pred = read_tile(require_str(cfg, "pred"));
    const Tile gt = read_tile(require_str(cfg, "gt"));
    const SegMetrics m = seg_metrics(confusion(pred, gt));

    const ReportRow row = segmentation_row(get_str(cfg, "label"), m);
    const ReportTable table = report_table({row});
    fs::create_directories(out_dir);
    const std::string csv = get_str(cfg, "csv");
    std::ofstream out(out_dir / csv, std::ios::trunc);
    if (!out) throw IoError("cannot create " + (out_dir / csv).string());
    out << table.csv;
    std::cout << table.text;

    json results = {{"csv", csv}};
    for (const auto& [key, value] : row.metrics) results[key] = value;
    write_run_json(cfg, "eval-seg", results);
    return 0;
}

int run_report(const json& cfg) {
    const fs::path out_dir = get_str(cfg, "out");
    const std::vector<std::string> inputs = get_str_list(cfg, "inputs");
    if (inputs.empty()) throw ConfigError("config field 'inputs' is required");

    std::vector<ReportRow> rows;
    for (const std::string& path : inputs) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path);
        const std::string csv((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
        for (ReportRow& row : parse_report_csv(csv)) rows.push_back(std::move(row));
    }

    const ReportTable table = report_table(rows);
    fs::create_directories(out_dir);
    const std::string output = get_str(cfg, "output");
    std::ofstream out(out_dir / output, std::ios::trunc);
    if (!out) throw IoError("cannot create " + (out_dir / output).string());
    out << table.csv;
    std::cout << table.text;
    write_run_json(cfg, "report", {{"output", output}, {"rows", rows.size()}});
    return 0;
}

// Early validation shared by the subcommand callbacks: pull every typed
// field once so schema violations surface as usage errors before any work
// or output happens.
void validate(const std::string& name, const json& cfg) {
    get_str(cfg, "out");
    get_u64(cfg, "seed");
    if (name == "gen-data") {
        get_int(cfg, "n");
        scene_spec_from(cfg);
    } else if (name == "simulate-speckle") {
        require_str(cfg, "input");
        get_str(cfg, "output");
        get_num(cfg, "looks");
    } else if (name == "despeckle") {
        require_str(cfg, "input");
        get_str(cfg, "output");
        get_num(cfg, "looks");
        const std::string method = get_str(cfg, "method");
        if (method != "kernel" && method != "model")
            throw ConfigError("config field 'method' must be 'kernel' or 'model'");
        if (method == "model") require_str(cfg, "model");
    } else if (name == "train-codec") {
        require_str(cfg, "manifest");
        get_str(cfg, "codec_out");
        get_int(cfg, "epochs");
        get_num(cfg, "lr");
        get_int(cfg, "latent_channels");
        get_int(cfg, "factor");
        get_int(cfg, "hidden");
    } else if (name == "train") {
        require_str(cfg, "manifest");
        get_str(cfg, "model_out");
        require_str(cfg, "codec");
        get_int(cfg, "pool_factor");
        get_int(cfg, "total_steps");
        get_num(cfg, "variance_scale");
        get_int(cfg, "epochs");
        get_int(cfg, "batch_size");
        get_num(cfg, "lr");
        get_int(cfg, "width");
        get_int(cfg, "time_dim");
        const std::string eps_kind = get_str(cfg, "eps_kind");
        if (eps_kind != "target_empirical" && eps_kind != "standard_normal")
            throw ConfigError(
                "config field 'eps_kind' must be 'target_empirical' or 'standard_normal'");
        get_num(cfg, "eps_scale");
        get_int(cfg, "acquisitions");
        get_bool(cfg, "despeckle");
        get_num(cfg, "despeckle_looks");
    } else if (name == "translate" || name == "ensemble") {
        require_str(cfg, "model");
        get_str(cfg, "input");
        get_str_list(cfg, "inputs");
        get_int(cfg, "steps");
        get_num(cfg, "eps_scale");
        get_bool(cfg, "despeckle");
        get_num(cfg, "despeckle_looks");
        if (name == "translate") {
            get_str(cfg, "output");
            get_str(cfg, "png");
        } else {
            if (get_int(cfg, "k") < 1) throw ConfigError("config field 'k' must be >= 1");
            get_str(cfg, "mean_dset");
            get_str(cfg, "mean_png");
            get_str(cfg, "variance_dset");
            get_str(cfg, "variance_png");
        }
        const bool has_one = !get_str(cfg, "input").empty();
        const bool has_many = !get_str_list(cfg, "inputs").empty();
        if (has_one && has_many) throw ConfigError("give either 'input' or 'inputs', not both");
        if (!has_one && !has_many)
            throw ConfigError("config field 'input' (or 'inputs') is required");
    } else if (name == "eval-translation") {
        require_str(cfg, "pred");
        require_str(cfg, "ref");
        get_str(cfg, "label");
        get_num(cfg, "max_val");
        get_str(cfg, "csv");
    } else if (name == "eval-seg") {
        require_str(cfg, "pred");
        require_str(cfg, "gt");
        get_str(cfg, "label");
        get_str(cfg, "csv");
    } else if (name == "report") {
        if (get_str_list(cfg, "inputs").empty())
            throw ConfigError("config field 'inputs' is required");
        get_str(cfg, "output");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-based SAR-to-EO translation pipeline"};
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", kCliVersion);

    std::deque<CmdState> states;
    std::function<int()> pending;

    const std::map<std::string, int (*)(const json&)> runners = {
        {"gen-data", run_gen_data},
        {"simulate-speckle", run_simulate_speckle},
        {"despeckle", run_despeckle},
        {"train-codec", run_train_codec},
        {"train", run_train},
        {"translate", run_translate},
        {"ensemble", run_ensemble},
        {"eval-translation", run_eval_translation},
        {"eval-seg", run_eval_seg},
        {"report", run_report},
    };

    auto make_command = [&](const std::string& name, const std::string& desc,
                            json defaults) -> std::pair<CLI::App*, CmdState*> {
        CmdState& st = states.emplace_back();
        st.name = name;
        defaults["out"] = ".";
        defaults["seed"] = 0;
        st.defaults = std::move(defaults);
        CLI::App* cmd = app.add_subcommand(name, desc);
        cmd->add_option("--config", st.config_path,
                        "JSON config file (a previous run.json also works)");
        add_str(cmd, st, "--out", "out", "Output directory");
        add_u64(cmd, st, "--seed", "seed", "RNG seed");
        cmd->callback([&st, &pending, &runners]() {
            const json cfg = resolve_config(st);
            validate(st.name, cfg);
            const auto runner = runners.at(st.name);
            pending = [cfg, runner]() { return runner(cfg); };
        });
        return {cmd, &st};
    };

    {
        auto [cmd, st] = make_command("gen-data", "Generate a paired synthetic corpus",
                                      {{"n", 16},
                                       {"size", 64},
                                       {"water_level", 0.45},
                                       {"smoothness", 3},
                                       {"looks", 4.0},
                                       {"n_timesteps", 1}});
        add_int(cmd, *st, "--n", "n", "Number of scenes");
        add_int(cmd, *st, "--size", "size", "Tile size in pixels");
        add_num(cmd, *st, "--looks", "looks", "Speckle looks for the noisy draws");
        add_int(cmd, *st, "--n-timesteps", "n_timesteps", "Speckled acquisitions per scene");
    }
    {
        auto [cmd, st] = make_command("simulate-speckle", "Apply multiplicative speckle to a tile",
                                      {{"input", ""}, {"output", "speckled.dset"},
                                       {"looks", 4.0}});
        add_str(cmd, *st, "--input", "input", "Clean SAR_LINEAR tile (DSET)");
        add_str(cmd, *st, "--output", "output", "Output tile name");
        add_num(cmd, *st, "--looks", "looks", "Looks L of the Gamma(L, L) speckle");
    }
    {
        auto [cmd, st] = make_command("despeckle", "Despeckle a SAR tile",
                                      {{"input", ""},
                                       {"output", "despeckled.dset"},
                                       {"method", "kernel"},
                                       {"looks", 0.0},
                                       {"model", ""}});
        add_str(cmd, *st, "--input", "input", "Noisy SAR_LINEAR tile (DSET)");
        add_str(cmd, *st, "--output", "output", "Output tile name");
        add_str(cmd, *st, "--method", "method", "'kernel' or 'model'");
        add_str(cmd, *st, "--model", "model", "Denoiser model for --method model");
        add_num(cmd, *st, "--looks", "looks", "Known looks (0 = estimate empirically)");
    }
    {
        auto [cmd, st] = make_command("train-codec", "Train a learned latent codec",
                                      {{"manifest", ""},
                                       {"codec_out", "codec.dsem"},
                                       {"epochs", 30},
                                       {"lr", 1e-3},
                                       {"latent_channels", 8},
                                       {"factor", 2},
                                       {"hidden", 16}});
        add_str(cmd, *st, "--manifest", "manifest", "Corpus manifest.json");
        add_str(cmd, *st, "--codec-out", "codec_out", "Output codec file name");
        add_int(cmd, *st, "--epochs", "epochs", "Training epochs");
    }
    {
        auto [cmd, st] = make_command("train", "Train the SAR-to-EO translator",
                                      {{"manifest", ""},
                                       {"model_out", "model.dsem"},
                                       {"codec", "identity"},
                                       {"pool_factor", 2},
                                       {"total_steps", 1000},
                                       {"variance_scale", 1.0},
                                       {"epochs", 10},
                                       {"batch_size", 8},
                                       {"lr", 2e-4},
                                       {"width", 32},
                                       {"time_dim", 32},
                                       {"eps_kind", "target_empirical"},
                                       {"eps_scale", 0.1},
                                       {"acquisitions", 1},
                                       {"despeckle", false},
                                       {"despeckle_looks", 0.0}});
        add_str(cmd, *st, "--manifest", "manifest", "Corpus manifest.json");
        add_str(cmd, *st, "--model-out", "model_out", "Output model file name");
        add_str(cmd, *st, "--codec", "codec", "'identity', 'pool', or a codec file");
        add_int(cmd, *st, "--total-steps", "total_steps", "Bridge steps T");
        add_int(cmd, *st, "--epochs", "epochs", "Training epochs");
        add_int(cmd, *st, "--width", "width", "Predictor channel width");
        add_int(cmd, *st, "--acquisitions", "acquisitions", "Conditioning acquisitions per pair");
    }
    {
        auto [cmd, st] = make_command("translate", "Translate a SAR tile to synthetic EO",
                                      {{"model", ""},
                                       {"input", ""},
                                       {"inputs", json::array()},
                                       {"output", "syneo.dset"},
                                       {"png", "syneo.png"},
                                       {"steps", 200},
                                       {"eps_scale", -1.0},
                                       {"despeckle", false},
                                       {"despeckle_looks", 0.0}});
        add_str(cmd, *st, "--model", "model", "Translator model file");
        add_str(cmd, *st, "--input", "input", "SAR_LINEAR [VV,VH] tile (DSET)");
        add_list(cmd, *st, "--inputs", "inputs", "Multi-temporal acquisitions (first = endpoint)");
        add_str(cmd, *st, "--output", "output", "Output tile name");
        add_str(cmd, *st, "--png", "png", "Output PNG name (empty = skip)");
        add_int(cmd, *st, "--steps", "steps", "Reverse sampling steps");
        add_num(cmd, *st, "--eps-scale", "eps_scale", "Noise scale (negative = model default)");
    }
    {
        auto [cmd, st] = make_command("ensemble", "Ensemble translation with a variance map",
                                      {{"model", ""},
                                       {"input", ""},
                                       {"inputs", json::array()},
                                       {"k", 8},
                                       {"mean_dset", "mean.dset"},
                                       {"mean_png", "mean.png"},
                                       {"variance_dset", "variance.dset"},
                                       {"variance_png", "variance.png"},
                                       {"steps", 200},
                                       {"eps_scale", -1.0},
                                       {"despeckle", false},
                                       {"despeckle_looks", 0.0}});
        add_str(cmd, *st, "--model", "model", "Translator model file");
        add_str(cmd, *st, "--input", "input", "SAR_LINEAR [VV,VH] tile (DSET)");
        add_list(cmd, *st, "--inputs", "inputs", "Multi-temporal acquisitions (first = endpoint)");
        add_int(cmd, *st, "--k", "k", "Ensemble size");
        add_int(cmd, *st, "--steps", "steps", "Reverse sampling steps");
        add_num(cmd, *st, "--eps-scale", "eps_scale", "Noise scale (negative = model default)");
    }
    {
        auto [cmd, st] = make_command("eval-translation", "PSNR/SSIM of a translation",
                                      {{"pred", ""},
                                       {"ref", ""},
                                       {"label", "translation"},
                                       {"max_val", 1.0},
                                       {"csv", "translation.csv"}});
        add_str(cmd, *st, "--pred", "pred", "Predicted EO tile (DSET)");
        add_str(cmd, *st, "--ref", "ref", "Reference EO tile (DSET)");
        add_str(cmd, *st, "--label", "label", "Report row label");
    }
    {
        auto [cmd, st] = make_command("eval-seg", "Segmentation metrics of a mask pair",
                                      {{"pred", ""},
                                       {"gt", ""},
                                       {"label", "segmentation"},
                                       {"csv", "segmentation.csv"}});
        add_str(cmd, *st, "--pred", "pred", "Predicted mask tile (DSET)");
        add_str(cmd, *st, "--gt", "gt", "Ground-truth mask tile (DSET)");
        add_str(cmd, *st, "--label", "label", "Report row label");
    }
    {
        auto [cmd, st] = make_command("report", "Merge metric CSVs into one table",
                                      {{"inputs", json::array()}, {"output", "report.csv"}});
        add_list(cmd, *st, "--inputs", "inputs", "Input CSV files");
        add_str(cmd, *st, "--output", "output", "Merged CSV name");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    if (!pending) {
        std::cout << app.help();
        return 1;
    }

    try {
        return pending();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
