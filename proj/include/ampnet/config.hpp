#ifndef AMPNET_CONFIG_HPP
#define AMPNET_CONFIG_HPP

#include <cstdint>
#include <string>

#include "ampnet/model.hpp"
#include "ampnet/training.hpp"

namespace ampnet {

// One JSON document drives every command. Unknown keys are rejected so a
// typo in an experiment sweep fails loudly instead of silently using a
// default.
struct ExperimentConfig {
    Variant variant = Variant::plain;
    std::size_t K = 2;
    std::size_t n = 33;
    double ratio = 0.3;
    std::uint64_t seed = 1;

    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t threads = 1;

    // patch extraction: set1 = 448 patches of 99x99 per image,
    // set2 = 977 patches of 33x33 per image, custom = explicit numbers
    std::string recipe = "set2";
    std::size_t patches_per_image = 977;
    std::size_t patch_size = 33;

    std::size_t val_count = 200;  // patches held out for validation

    std::string dataset_dir;
    std::string patch_file;
    std::string checkpoint;
    std::string log_file;
    std::string eval_report;
    std::string input;
    std::string output;

    std::size_t baseline_iterations = 30;
    double baseline_threshold = 0.0;
    std::string baseline_schedule = "decaying";
    std::size_t baseline_trials = 20;
    std::size_t baseline_signal_n = 256;
    std::size_t baseline_m = 128;
    std::size_t baseline_sparsity = 10;

    TrainConfig train_config() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

}  // namespace ampnet

#endif
