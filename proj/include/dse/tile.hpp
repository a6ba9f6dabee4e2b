#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dse/error.hpp"

namespace dse {

// Kind codes are part of the DSET file format; do not reorder.
enum class TileKind : uint32_t {
    SarLinear = 0,
    SarDb = 1,
    EoRgb = 2,
    Mask = 3,
    Latent = 4,
};

const char* tile_kind_name(TileKind kind);

// Multi-channel float32 raster. Storage is channel-major, then row-major
// within a channel, matching the on-disk payload exactly.
struct Tile {
    uint32_t width = 0;
    uint32_t height = 0;
    uint32_t channels = 0;
    TileKind kind = TileKind::SarLinear;
    std::vector<float> data;

    Tile() = default;
    Tile(uint32_t w, uint32_t h, uint32_t c, TileKind k, float fill = 0.0f)
        : width(w), height(h), channels(c), kind(k),
          data(static_cast<size_t>(w) * h * c, fill) {}

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    size_t size() const { return pixel_count() * channels; }

    float& at(uint32_t c, uint32_t y, uint32_t x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(uint32_t c, uint32_t y, uint32_t x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const Tile& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Throws if the tile violates the structural or per-kind invariants
// (data length, MASK binarity, SAR_LINEAR non-negativity).
void validate_tile(const Tile& tile);

// ---- DSET v1 container -----------------------------------------------------
// magic "DSET" | u32 version=1 | u32 width | u32 height | u32 channels |
// u32 kind | float32 payload (little-endian, channel-major, row-major).

Tile read_tile(const std::filesystem::path& path);
void write_tile(const Tile& tile, const std::filesystem::path& path);

// ---- Radiometry --------------------------------------------------------------

// 10*log10(linear), clamping the input at `floor` first. SAR_LINEAR -> SAR_DB.
Tile to_db(const Tile& tile, float floor = 1e-6f);
// Inverse of to_db. SAR_DB -> SAR_LINEAR.
Tile from_db(const Tile& tile);

// ---- Channel composition -----------------------------------------------------

// Builds the 3-channel network input [VV, VH, (VV+VH)/2] from two
// single-channel tiles of identical shape and kind.
Tile compose_sar3(const Tile& vv, const Tile& vh);

// Extracts one channel as a single-channel tile of the same kind.
Tile extract_channel(const Tile& tile, uint32_t channel);

// ---- Normalization -------------------------------------------------------------

// Clips to the [lo_pct, hi_pct] percentiles (linear-interpolated, computed
// jointly over all channels) and maps affinely onto [0,1]. A constant tile
// maps to all zeros.
Tile normalize(const Tile& tile, double lo_pct = 1.0, double hi_pct = 99.0);

// ---- Dataset utilities ---------------------------------------------------------

struct PairedSample {
    Tile sar;
    Tile eo;
    Tile cloud_mask;
};

// Drops samples whose mean cloud-mask value exceeds max_cloud_frac.
// Order of the survivors is preserved.
std::vector<PairedSample> cloud_filter(std::vector<PairedSample> pairs,
                                       double max_cloud_frac);

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;
    uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> val;
    std::vector<size_t> test;
};

// Deterministic disjoint exhaustive partition of [0, count). Val and test
// sizes are floor(frac*count); the remainder goes to train.
SplitIndices split_dataset(size_t count, const SplitSpec& spec);

// ---- PNG export ----------------------------------------------------------------

// 8-bit PNG render: value v (clipped to [0,1]) -> round(255 * v^gamma).
// 1 channel -> grayscale, 3 channels -> RGB; anything else is a kind error.
void export_png(const Tile& tile, const std::filesystem::path& path,
                double gamma = 1.0);

// Reads an 8-bit PNG back as floats in [0,1] (gray -> 1 channel, otherwise
// RGB). Intended for inspecting exported renders, so the kind is the
// generic EO_RGB for color and SAR_LINEAR for grayscale.
Tile read_png(const std::filesystem::path& path);

}  // namespace dse
