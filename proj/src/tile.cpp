#include "dse/tile.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "dse/rng.hpp"

namespace dse {

const char* tile_kind_name(TileKind kind) {
    switch (kind) {
        case TileKind::SarLinear: return "SAR_LINEAR";
        case TileKind::SarDb: return "SAR_DB";
        case TileKind::EoRgb: return "EO_RGB";
        case TileKind::Mask: return "MASK";
        case TileKind::Latent: return "LATENT";
    }
    return "UNKNOWN";
}

void validate_tile(const Tile& tile) {
    if (tile.data.size() != tile.size())
        throw ShapeError("tile data length " + std::to_string(tile.data.size()) +
                         " does not match dims " + std::to_string(tile.width) + "x" +
                         std::to_string(tile.height) + "x" + std::to_string(tile.channels));
    if (tile.kind == TileKind::Mask) {
        for (float v : tile.data)
            if (v != 0.0f && v != 1.0f)
                throw KindError("MASK tile contains a non-binary value");
    } else if (tile.kind == TileKind::SarLinear) {
        for (float v : tile.data)
            if (!(v >= 0.0f))
                throw KindError("SAR_LINEAR tile contains a negative or non-finite value");
    }
}

// ---- DSET v1 -----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'S', 'E', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated DSET header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static_assert(sizeof(float) == 4, "float32 payload requires 4-byte float");

}  // namespace

Tile read_tile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    char magic[4];
    in.read(magic, 4);
    if (!in) throw IoError("truncated DSET header in " + path.string());
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    uint32_t version = get_u32(in);
    if (version != kVersion)
        throw FormatError("unsupported DSET version " + std::to_string(version));

    Tile tile;
    tile.width = get_u32(in);
    tile.height = get_u32(in);
    tile.channels = get_u32(in);
    uint32_t kind = get_u32(in);
    if (kind > static_cast<uint32_t>(TileKind::Latent))
        throw FormatError("unknown tile kind code " + std::to_string(kind));
    tile.kind = static_cast<TileKind>(kind);

    tile.data.resize(tile.size());
    if (!tile.data.empty()) {
        in.read(reinterpret_cast<char*>(tile.data.data()),
                static_cast<std::streamsize>(tile.data.size() * 4));
        if (!in) throw IoError("truncated DSET payload in " + path.string());
    }
    validate_tile(tile);
    return tile;
}

void write_tile(const Tile& tile, const std::filesystem::path& path) {
    validate_tile(tile);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, tile.width);
    put_u32(out, tile.height);
    put_u32(out, tile.channels);
    put_u32(out, static_cast<uint32_t>(tile.kind));
    if (!tile.data.empty())
        out.write(reinterpret_cast<const char*>(tile.data.data()),
                  static_cast<std::streamsize>(tile.data.size() * 4));
    if (!out) throw IoError("write failed for " + path.string());
}

// ---- Radiometry ----------------------------------------------------------------

Tile to_db(const Tile& tile, float floor) {
    if (tile.kind != TileKind::SarLinear)
        throw KindError(std::string("to_db expects SAR_LINEAR, got ") + tile_kind_name(tile.kind));
    Tile out = tile;
    out.kind = TileKind::SarDb;
    for (float& v : out.data) v = 10.0f * std::log10(std::max(v, floor));
    return out;
}

Tile from_db(const Tile& tile) {
    if (tile.kind != TileKind::SarDb)
        throw KindError(std::string("from_db expects SAR_DB, got ") + tile_kind_name(tile.kind));
    Tile out = tile;
    out.kind = TileKind::SarLinear;
    for (float& v : out.data) v = std::pow(10.0f, v / 10.0f);
    return out;
}

// ---- Composition -----------------------------------------------------------------

Tile compose_sar3(const Tile& vv, const Tile& vh) {
    if (vv.channels != 1 || vh.channels != 1)
        throw ShapeError("compose_sar3 expects single-channel inputs");
    if (vv.width != vh.width || vv.height != vh.height)
        throw ShapeError("compose_sar3 dimension mismatch");
    if (vv.kind != vh.kind)
        throw KindError("compose_sar3 kind mismatch");

    Tile out(vv.width, vv.height, 3, vv.kind);
    const size_t n = vv.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        out.data[i] = vv.data[i];
        out.data[n + i] = vh.data[i];
        out.data[2 * n + i] = (vv.data[i] + vh.data[i]) / 2.0f;
    }
    return out;
}

Tile extract_channel(const Tile& tile, uint32_t channel) {
    if (channel >= tile.channels)
        throw ArgumentError("channel index out of range");
    Tile out(tile.width, tile.height, 1, tile.kind);
    const size_t n = tile.pixel_count();
    std::copy_n(tile.data.begin() + static_cast<ptrdiff_t>(channel * n), n, out.data.begin());
    return out;
}

// ---- Normalization ---------------------------------------------------------------

namespace {

// Linear-interpolated percentile over a copy of the values.
double percentile(std::vector<float> values, double pct) {
    const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<ptrdiff_t>(lo), values.end());
    const double vlo = values[lo];
    std::nth_element(values.begin(), values.begin() + static_cast<ptrdiff_t>(hi), values.end());
    const double vhi = values[hi];
    const double frac = pos - static_cast<double>(lo);
    return vlo + frac * (vhi - vlo);
}

}  // namespace

Tile normalize(const Tile& tile, double lo_pct, double hi_pct) {
    if (tile.data.empty()) throw ShapeError("normalize on empty tile");
    if (!(lo_pct < hi_pct)) throw ArgumentError("normalize requires lo_pct < hi_pct");

    const double lo = percentile(tile.data, lo_pct);
    const double hi = percentile(tile.data, hi_pct);

    Tile out = tile;
    if (!(hi > lo)) {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
        return out;
    }
    const double scale = 1.0 / (hi - lo);
    for (float& v : out.data) {
        double t = (std::clamp(static_cast<double>(v), lo, hi) - lo) * scale;
        v = static_cast<float>(t);
    }
    return out;
}

// ---- Dataset utilities -------------------------------------------------------------

std::vector<PairedSample> cloud_filter(std::vector<PairedSample> pairs,
                                       double max_cloud_frac) {
    std::vector<PairedSample> kept;
    kept.reserve(pairs.size());
    for (auto& p : pairs) {
        if (p.cloud_mask.kind != TileKind::Mask)
            throw KindError("cloud_filter mask must be MASK kind");
        if (p.cloud_mask.width != p.eo.width || p.cloud_mask.height != p.eo.height)
            throw ShapeError("cloud mask not co-registered with EO tile");
        double sum = 0.0;
        for (float v : p.cloud_mask.data) sum += v;
        const double frac = p.cloud_mask.data.empty() ? 0.0 : sum / static_cast<double>(p.cloud_mask.data.size());
        if (frac <= max_cloud_frac) kept.push_back(std::move(p));
    }
    return kept;
}

SplitIndices split_dataset(size_t count, const SplitSpec& spec) {
    if (count == 0) throw ArgumentError("split_dataset on empty item list");
    const double fs[3] = {spec.train_frac, spec.val_frac, spec.test_frac};
    for (double f : fs)
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fraction outside [0,1]");
    if (std::abs(fs[0] + fs[1] + fs[2] - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");

    std::vector<size_t> order(count);
    for (size_t i = 0; i < count; ++i) order[i] = i;
    RngStream rng(spec.seed, /*substream=*/0x5097ull);
    for (size_t i = count - 1; i > 0; --i) {
        size_t j = rng.uniform_index(i + 1);
        std::swap(order[i], order[j]);
    }

    // floor-then-remainder-to-train; the epsilon absorbs fp wobble in frac*count
    const size_t n_val = static_cast<size_t>(std::floor(spec.val_frac * static_cast<double>(count) + 1e-9));
    const size_t n_test = static_cast<size_t>(std::floor(spec.test_frac * static_cast<double>(count) + 1e-9));
    const size_t n_train = count - n_val - n_test;

    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(n_train));
    out.val.assign(order.begin() + static_cast<ptrdiff_t>(n_train),
                   order.begin() + static_cast<ptrdiff_t>(n_train + n_val));
    out.test.assign(order.begin() + static_cast<ptrdiff_t>(n_train + n_val), order.end());
    return out;
}

// ---- PNG ----------------------------------------------------------------------------

void export_png(const Tile& tile, const std::filesystem::path& path, double gamma) {
    if (tile.channels != 1 && tile.channels != 3)
        throw KindError("export_png supports 1 or 3 channels, got " + std::to_string(tile.channels));
    if (tile.width == 0 || tile.height == 0) throw ShapeError("export_png on empty tile");

    const size_t n = tile.pixel_count();
    std::vector<unsigned char> bytes(n * tile.channels);
    for (uint32_t c = 0; c < tile.channels; ++c) {
        for (size_t i = 0; i < n; ++i) {
            double v = std::clamp(static_cast<double>(tile.data[c * n + i]), 0.0, 1.0);
            // interleave channels for libpng
            bytes[i * tile.channels + c] =
                static_cast<unsigned char>(std::lround(255.0 * std::pow(v, gamma)));
        }
    }

    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = tile.width;
    image.height = tile.height;
    image.format = tile.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("PNG write failed for " + path.string() + ": " + msg);
    }
}

Tile read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("PNG read failed for " + path.string() + ": " + msg);
    }
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const uint32_t channels = gray ? 1 : 3;
    std::vector<unsigned char> bytes(static_cast<size_t>(image.width) * image.height * channels);
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("PNG decode failed for " + path.string() + ": " + msg);
    }

    Tile tile(image.width, image.height, channels,
              gray ? TileKind::SarLinear : TileKind::EoRgb);
    const size_t n = tile.pixel_count();
    for (uint32_t c = 0; c < channels; ++c)
        for (size_t i = 0; i < n; ++i)
            tile.data[c * n + i] = static_cast<float>(bytes[i * channels + c]) / 255.0f;
    return tile;
}

}  // namespace dse
