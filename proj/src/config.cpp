#include "ampnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ampnet {

namespace {

using nlohmann::json;

template <typename T>
void get_uint(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_unsigned())
        throw std::invalid_argument(std::string("config key '") + key +
                                    "' must be a non-negative integer");
    out = v.get<T>();
}

void get_real(const json& j, const char* key, double& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number())
        throw std::invalid_argument(std::string("config key '") + key + "' must be a number");
    out = v.get<double>();
}

void get_string(const json& j, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_string())
        throw std::invalid_argument(std::string("config key '") + key + "' must be a string");
    out = v.get<std::string>();
}

}  // namespace

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig tc;
    tc.learning_rate = learning_rate;
    tc.batch_size = batch_size;
    tc.epochs = epochs;
    tc.seed = seed;
    tc.beta1 = beta1;
    tc.beta2 = beta2;
    tc.epsilon = epsilon;
    tc.variant = variant;
    tc.K = K;
    tc.ratio = ratio;
    tc.threads = threads;
    return tc;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");

    static const std::set<std::string> known = {
        "variant",        "K",
        "n",              "ratio",
        "seed",           "learning_rate",
        "batch_size",     "epochs",
        "beta1",          "beta2",
        "epsilon",        "threads",
        "recipe",         "patches_per_image",
        "patch_size",     "val_count",
        "dataset_dir",    "patch_file",
        "checkpoint",     "log_file",
        "eval_report",    "input",
        "output",         "baseline_iterations",
        "baseline_threshold", "baseline_schedule",
        "baseline_trials",    "baseline_signal_n",
        "baseline_m",         "baseline_sparsity",
    };
    for (auto it = j.begin(); it != j.end(); ++it)
        if (known.find(it.key()) == known.end())
            throw std::invalid_argument("unknown config key '" + it.key() + "'");

    ExperimentConfig cfg;
    std::string variant_str = variant_name(cfg.variant);
    get_string(j, "variant", variant_str);
    cfg.variant = parse_variant(variant_str);

    get_uint(j, "K", cfg.K);
    get_uint(j, "n", cfg.n);
    get_real(j, "ratio", cfg.ratio);
    get_uint(j, "seed", cfg.seed);
    get_real(j, "learning_rate", cfg.learning_rate);
    get_uint(j, "batch_size", cfg.batch_size);
    get_uint(j, "epochs", cfg.epochs);
    get_real(j, "beta1", cfg.beta1);
    get_real(j, "beta2", cfg.beta2);
    get_real(j, "epsilon", cfg.epsilon);
    get_uint(j, "threads", cfg.threads);

    get_string(j, "recipe", cfg.recipe);
    if (cfg.recipe == "set1") {
        cfg.patches_per_image = 448;
        cfg.patch_size = 99;
    } else if (cfg.recipe == "set2") {
        cfg.patches_per_image = 977;
        cfg.patch_size = 33;
    } else if (cfg.recipe != "custom") {
        throw std::invalid_argument("config key 'recipe' must be set1, set2 or custom");
    }
    if ((j.contains("patches_per_image") || j.contains("patch_size")) && cfg.recipe != "custom")
        throw std::invalid_argument(
            "patches_per_image/patch_size may only be set with recipe \"custom\"");
    get_uint(j, "patches_per_image", cfg.patches_per_image);
    get_uint(j, "patch_size", cfg.patch_size);

    get_uint(j, "val_count", cfg.val_count);
    get_string(j, "dataset_dir", cfg.dataset_dir);
    get_string(j, "patch_file", cfg.patch_file);
    get_string(j, "checkpoint", cfg.checkpoint);
    get_string(j, "log_file", cfg.log_file);
    get_string(j, "eval_report", cfg.eval_report);
    get_string(j, "input", cfg.input);
    get_string(j, "output", cfg.output);

    get_uint(j, "baseline_iterations", cfg.baseline_iterations);
    get_real(j, "baseline_threshold", cfg.baseline_threshold);
    get_string(j, "baseline_schedule", cfg.baseline_schedule);
    get_uint(j, "baseline_trials", cfg.baseline_trials);
    get_uint(j, "baseline_signal_n", cfg.baseline_signal_n);
    get_uint(j, "baseline_m", cfg.baseline_m);
    get_uint(j, "baseline_sparsity", cfg.baseline_sparsity);

    if (!(cfg.ratio > 0.0) || cfg.ratio > 1.0)
        throw std::invalid_argument("config: ratio must lie in (0, 1]");
    if (cfg.K < 1) throw std::invalid_argument("config: K must be >= 1");
    if (cfg.n < 1) throw std::invalid_argument("config: n must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (cfg.learning_rate < 0.0)
        throw std::invalid_argument("config: learning_rate must be >= 0");
    if (cfg.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (cfg.patch_size < 1) throw std::invalid_argument("config: patch_size must be >= 1");
    if (cfg.patches_per_image < 1)
        throw std::invalid_argument("config: patches_per_image must be >= 1");
    if (cfg.baseline_schedule != "fixed" && cfg.baseline_schedule != "decaying")
        throw std::invalid_argument("config: baseline_schedule must be fixed or decaying");
    if (cfg.baseline_iterations < 1)
        throw std::invalid_argument("config: baseline_iterations must be >= 1");
    if (cfg.baseline_threshold < 0.0)
        throw std::invalid_argument("config: baseline_threshold must be >= 0");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

}  // namespace ampnet
