#pragma once

// Procedural paired-scene generator: smooth value-noise terrain drives a
// water mask, an EO rendering, a clean 2-channel [VV,VH] SAR response, and
// any number of independently speckled SAR acquisitions of the same scene.
// Everything is a pure function of the spec, so corpora regenerate
// byte-identically.
//
// The SAR/EO relationship is deliberately learnable (a deterministic map
// plus speckle): end-to-end translation quality then measures the diffusion
// machinery, not irreducible data noise.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dse/error.hpp"
#include "dse/tile.hpp"

#include <json.hpp>

namespace dse {

struct SceneSpec {
    int size = 64;            // square tiles, >= 16
    double water_level = 0.45;  // threshold in normalized field units
    int smoothness = 3;       // value-noise octaves
    double looks = 4.0;       // speckle L for the noisy draws
    uint64_t seed = 0;
    int n_timesteps = 1;      // multi-temporal speckled acquisitions
};

struct SceneBundle {
    Tile eo;                     // EO_RGB, 3 channels in [0,1]
    Tile sar_clean;              // SAR_LINEAR, channels [VV, VH]
    std::vector<Tile> sar_noisy; // n_timesteps speckled copies of sar_clean
    Tile mask;                   // MASK, 1 = water
};

// Generates one scene. The terrain field is resampled (up to 100 attempts)
// until the water fraction lies strictly inside (0.05, 0.6); exhausting the
// attempts raises GenerationError. Water pixels get VV = 0.05 exactly; land
// gets VV = 0.3 + 0.4 * texture, so water is always darker than land.
// VH is 0.5 * VV. Noisy draw k uses speckle seed spec.seed + k.
SceneBundle gen_scene(const SceneSpec& spec);

// Writes n scenes (seeds spec.seed .. spec.seed+n-1) into out_dir as DSET
// tiles plus a manifest.json echoing the spec and listing per-scene paths
// (relative to out_dir) and ids. Returns the manifest path.
std::filesystem::path gen_corpus(const std::filesystem::path& out_dir, int n,
                                 const SceneSpec& spec);

struct SceneRecord {
    std::string id;
    uint64_t seed = 0;
    Tile eo;
    Tile sar_clean;
    std::vector<Tile> sar_noisy;
    Tile mask;
};

// Loads every scene referenced by a manifest written by gen_corpus.
std::vector<SceneRecord> load_corpus(const std::filesystem::path& manifest_path);

}  // namespace dse
