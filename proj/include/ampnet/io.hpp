#ifndef AMPNET_IO_HPP
#define AMPNET_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ampnet/blocking.hpp"
#include "ampnet/model.hpp"

namespace ampnet {

// Binary PGM (P5, 8-bit). Pixels map to [0,1] by /255 on load; saving
// clamps to [0,1] and rounds to the nearest of 256 levels.
Image load_pgm(const std::string& path);
void save_pgm(const Image& image, const std::string& path);

// Packed patch file: u32 count/height/width header, then count*height*width
// little-endian doubles. All patches share one shape.
void save_patches(const std::vector<Image>& patches, const std::string& path);
std::vector<Image> load_patches(const std::string& path);

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint32_t epoch = 0;
    double val_psnr = 0.0;
};

struct LoadedCheckpoint {
    AmpNetModel model;
    CheckpointMeta meta;
};

// "AMPN" checkpoint: magic, version, structure (variant/K/n/M), metadata,
// then named little-endian f64 arrays with explicit shapes. Writing goes
// through a temp file and a rename, so a crash never leaves a torn file;
// loading validates magic, version and every shape before returning.
void save_checkpoint(const AmpNetModel& model, const CheckpointMeta& meta,
                     const std::string& path);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ampnet

#endif
