#include "dse/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dse/rng.hpp"
#include "dse/speckle.hpp"

namespace dse {

namespace {

// Seeded value noise: per octave, a random lattice bilinearly interpolated
// across the tile, amplitudes halving per octave; the sum is min-max
// normalized to [0,1]. `family` separates independent fields (terrain,
// texture) and `attempt` re-rolls the terrain when the water-fraction
// constraint fails.
std::vector<double> gen_field(int size, uint64_t seed, uint64_t family, int octaves,
                              int attempt) {
    std::vector<double> field(static_cast<size_t>(size) * size, 0.0);
    double amplitude = 1.0;
    for (int o = 0; o < octaves; ++o) {
        const int cells = 4 << o;
        const int points = cells + 1;
        RngStream rng(seed, family + 0x1000ull * static_cast<uint64_t>(attempt) +
                                static_cast<uint64_t>(o));
        std::vector<double> lattice(static_cast<size_t>(points) * points);
        for (double& v : lattice) v = rng.uniform01();

        for (int y = 0; y < size; ++y) {
            const double fy = static_cast<double>(y) / size * cells;
            const int iy = std::min(static_cast<int>(fy), cells - 1);
            const double ty = fy - iy;
            for (int x = 0; x < size; ++x) {
                const double fx = static_cast<double>(x) / size * cells;
                const int ix = std::min(static_cast<int>(fx), cells - 1);
                const double tx = fx - ix;
                const double v00 = lattice[static_cast<size_t>(iy) * points + ix];
                const double v01 = lattice[static_cast<size_t>(iy) * points + ix + 1];
                const double v10 = lattice[static_cast<size_t>(iy + 1) * points + ix];
                const double v11 = lattice[static_cast<size_t>(iy + 1) * points + ix + 1];
                const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                 ty * ((1 - tx) * v10 + tx * v11);
                field[static_cast<size_t>(y) * size + x] += amplitude * v;
            }
        }
        amplitude *= 0.5;
    }

    const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
    const double base = *lo;  // copy before the loop rewrites the element *lo points at
    const double span = *hi - base;
    if (span > 0.0)
        for (double& v : field) v = (v - base) / span;
    return field;
}

constexpr uint64_t kTerrainFamily = 0x7e00000000ull;
constexpr uint64_t kTextureFamily = 0x7f00000000ull;

}  // namespace

SceneBundle gen_scene(const SceneSpec& spec) {
    if (spec.size < 16) throw ConfigError("scene size must be >= 16");
    if (spec.smoothness < 1) throw ConfigError("scene smoothness must be >= 1");
    if (!(spec.looks > 0.0)) throw ConfigError("scene looks must be positive");
    if (spec.n_timesteps < 0) throw ConfigError("scene n_timesteps must be >= 0");

    const int n = spec.size;
    const size_t plane = static_cast<size_t>(n) * n;

    // Resample the terrain until the water fraction is usable.
    std::vector<double> terrain;
    int attempt = 0;
    for (;; ++attempt) {
        if (attempt >= 100)
            throw GenerationError("water fraction outside (0.05, 0.6) after 100 field resamples");
        terrain = gen_field(n, spec.seed, kTerrainFamily, spec.smoothness, attempt);
        size_t water = 0;
        for (double v : terrain) water += v < spec.water_level ? 1 : 0;
        const double frac = static_cast<double>(water) / static_cast<double>(plane);
        if (frac > 0.05 && frac < 0.6) break;
    }
    const std::vector<double> texture =
        gen_field(n, spec.seed, kTextureFamily, spec.smoothness, attempt);

    SceneBundle out;
    out.mask = Tile(n, n, 1, TileKind::Mask);
    out.eo = Tile(n, n, 3, TileKind::EoRgb);
    out.sar_clean = Tile(n, n, 2, TileKind::SarLinear);

    const double wl = spec.water_level;
    for (size_t i = 0; i < plane; ++i) {
        const double f = terrain[i];
        const bool water = f < wl;
        out.mask.data[i] = water ? 1.0f : 0.0f;

        double r, g, b, vv;
        if (water) {
            // Deeper water: darker blue.
            const double depth = wl > 0.0 ? std::clamp((wl - f) / wl, 0.0, 1.0) : 0.0;
            r = 0.05;
            g = 0.40 - 0.25 * depth;
            b = 0.90 - 0.50 * depth;
            vv = 0.05;
        } else {
            // Higher land: green fading toward brown.
            const double elev = std::clamp((f - wl) / (1.0 - wl), 0.0, 1.0);
            r = 0.15 + 0.40 * elev;
            g = 0.50 - 0.15 * elev;
            b = 0.10 + 0.05 * elev;
            vv = 0.3 + 0.4 * texture[i];
        }
        out.eo.data[i] = static_cast<float>(r);
        out.eo.data[plane + i] = static_cast<float>(g);
        out.eo.data[2 * plane + i] = static_cast<float>(b);
        out.sar_clean.data[i] = static_cast<float>(vv);
        out.sar_clean.data[plane + i] = static_cast<float>(0.5 * vv);
    }

    out.sar_noisy.reserve(spec.n_timesteps);
    for (int k = 0; k < spec.n_timesteps; ++k) {
        SpeckleParams p;
        p.looks = spec.looks;
        p.seed = spec.seed + static_cast<uint64_t>(k);
        out.sar_noisy.push_back(simulate_speckle(out.sar_clean, p));
    }
    return out;
}

std::filesystem::path gen_corpus(const std::filesystem::path& out_dir, int n,
                                 const SceneSpec& spec) {
    if (n < 1) throw ArgumentError("corpus needs at least one scene");
    std::filesystem::create_directories(out_dir);

    nlohmann::json scenes = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        SceneSpec s = spec;
        s.seed = spec.seed + static_cast<uint64_t>(i);
        const SceneBundle bundle = gen_scene(s);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "scene_%04d", i);
        const std::string id = idbuf;

        nlohmann::json entry;
        entry["id"] = id;
        entry["seed"] = s.seed;
        entry["eo_path"] = id + "_eo.dset";
        entry["sar_clean_path"] = id + "_sar_clean.dset";
        entry["mask_path"] = id + "_mask.dset";
        nlohmann::json noisy = nlohmann::json::array();
        for (size_t k = 0; k < bundle.sar_noisy.size(); ++k) {
            const std::string p = id + "_sar_t" + std::to_string(k) + ".dset";
            noisy.push_back(p);
            write_tile(bundle.sar_noisy[k], out_dir / p);
        }
        entry["sar_noisy_paths"] = noisy;
        write_tile(bundle.eo, out_dir / (id + "_eo.dset"));
        write_tile(bundle.sar_clean, out_dir / (id + "_sar_clean.dset"));
        write_tile(bundle.mask, out_dir / (id + "_mask.dset"));
        scenes.push_back(std::move(entry));
    }

    nlohmann::json manifest;
    manifest["spec"] = {{"size", spec.size},
                        {"water_level", spec.water_level},
                        {"smoothness", spec.smoothness},
                        {"looks", spec.looks},
                        {"seed", spec.seed},
                        {"n_timesteps", spec.n_timesteps}};
    manifest["scenes"] = std::move(scenes);

    const std::filesystem::path manifest_path = out_dir / "manifest.json";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + manifest_path.string());
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + manifest_path.string());
    return manifest_path;
}

std::vector<SceneRecord> load_corpus(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid manifest JSON: " + std::string(e.what()));
    }

    const std::filesystem::path dir = manifest_path.parent_path();
    std::vector<SceneRecord> records;
    for (const auto& entry : manifest.at("scenes")) {
        SceneRecord rec;
        rec.id = entry.at("id").get<std::string>();
        rec.seed = entry.at("seed").get<uint64_t>();
        rec.eo = read_tile(dir / entry.at("eo_path").get<std::string>());
        rec.sar_clean = read_tile(dir / entry.at("sar_clean_path").get<std::string>());
        rec.mask = read_tile(dir / entry.at("mask_path").get<std::string>());
        for (const auto& p : entry.at("sar_noisy_paths"))
            rec.sar_noisy.push_back(read_tile(dir / p.get<std::string>()));
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace dse
