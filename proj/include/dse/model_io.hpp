#pragma once

// Shared model container (DSEM):
//   magic "DSEM" | u32 version | u32 header length | header JSON |
//   u32 blob count | per blob: u32 name length | name | u32 float count |
//   float32 little-endian data.
//
// The header carries architecture hyperparameters plus codec and schedule
// descriptors; weights travel as named float32 blobs. Because the container
// is float32 while training runs in double, saving quantizes the in-memory
// parameters to float32 in place — after save_* returns, the live model and
// a freshly loaded copy produce bit-identical outputs.

#include <filesystem>
#include <string>
#include <vector>

#include "dse/despeckle.hpp"
#include "dse/translator.hpp"

#include <json.hpp>

namespace dse {

inline constexpr uint32_t kModelFormatVersion = 1;

struct ModelBlob {
    std::string name;
    std::vector<float> data;
};

struct ModelFile {
    nlohmann::json header;
    std::vector<ModelBlob> blobs;
};

void write_model_file(const ModelFile& file, const std::filesystem::path& path);

// Raises FormatError on bad magic, version mismatch, or truncation; IoError
// if the file cannot be opened.
ModelFile read_model_file(const std::filesystem::path& path);

// Rounds every parameter to float32 precision in place.
void quantize_params(const std::vector<nn::Param*>& params);

void save_model(TranslatorModel& model, const std::filesystem::path& path);
TranslatorModel load_model(const std::filesystem::path& path);

void save_denoiser(DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_denoiser(const std::filesystem::path& path);

}  // namespace dse
