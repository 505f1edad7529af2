#ifndef AMPNET_CLI_HPP
#define AMPNET_CLI_HPP

#include <string>
#include <vector>

#include "ampnet/blocking.hpp"
#include "ampnet/kernels.hpp"

namespace ampnet {

struct PatchExtraction {
    std::vector<Image> patches;
    std::vector<std::string> manifest;  // one "ok"/"skip" line per source file
};

// Random patches from every readable PGM in the directory (sorted name
// order): per_image patches of size x size each, positions drawn from rng.
// Unreadable or undersized images are skipped and recorded in the manifest.
PatchExtraction extract_patches(const std::string& dataset_dir, std::size_t per_image,
                                std::size_t size, Rng& rng);

// Entry point behind the ampnet binary:
//   ampnet {extract-patches|train|eval|reconstruct|gradcheck|baseline}
//          [--config <json>] [--model <ckpt>] [--input <pgm>] [--output <pgm>]
//          [--dataset <dir>] [--seed <u64>]
// Returns the process exit status (0 on success).
int run_command(int argc, const char* const* argv);

}  // namespace ampnet

#endif
