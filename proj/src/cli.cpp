#include "ampnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ampnet/config.hpp"
#include "ampnet/io.hpp"
#include "ampnet/metrics.hpp"
#include "ampnet/model.hpp"
#include "ampnet/sampling.hpp"
#include "ampnet/training.hpp"

namespace fs = std::filesystem;

namespace ampnet {

namespace {

std::vector<fs::path> list_pgms(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::invalid_argument("dataset directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

void require_path(const std::string& value, const std::string& what) {
    if (value.empty())
        throw std::invalid_argument("missing " + what +
                                    " (set it in the config or pass the flag)");
}

AmpNetModel model_from_config(const ExperimentConfig& cfg) {
    Rng rng(cfg.seed);
    const std::size_t m = ratio_to_m(cfg.ratio, cfg.n);
    return make_model(rng, cfg.variant, cfg.K, cfg.n, m);
}

int cmd_extract(const ExperimentConfig& cfg) {
    require_path(cfg.dataset_dir, "dataset directory");
    require_path(cfg.patch_file, "patch_file output path");
    Rng rng(cfg.seed);
    PatchExtraction ex = extract_patches(cfg.dataset_dir, cfg.patches_per_image, cfg.patch_size,
                                         rng);
    if (ex.patches.empty()) throw std::runtime_error("no patches extracted");
    save_patches(ex.patches, cfg.patch_file);

    std::ofstream manifest(cfg.patch_file + ".manifest");
    for (const std::string& line : ex.manifest) manifest << line << "\n";
    manifest.flush();

    std::cout << "wrote " << ex.patches.size() << " patches of " << cfg.patch_size << "x"
              << cfg.patch_size << " to " << cfg.patch_file << "\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    require_path(cfg.patch_file, "patch_file input path");
    require_path(cfg.checkpoint, "checkpoint output path");

    std::vector<Image> patches = load_patches(cfg.patch_file);
    if (cfg.val_count < 1 || cfg.val_count >= patches.size())
        throw std::invalid_argument("val_count must leave at least one training patch");
    std::vector<Image> val(patches.end() - static_cast<long>(cfg.val_count), patches.end());
    patches.resize(patches.size() - cfg.val_count);

    AmpNetModel model = model_from_config(cfg);
    std::cout << "AMP-Net-" << cfg.K << (cfg.variant == Variant::plain
                                             ? ""
                                             : "-" + variant_name(cfg.variant))
              << ", ratio " << cfg.ratio << " (M=" << model.sampling.m << ", n=" << cfg.n
              << "), " << patches.size() << " train / " << val.size() << " val patches, "
              << param_count(model, false) << " module parameters\n";

    std::ofstream log;
    if (!cfg.log_file.empty()) {
        log.open(cfg.log_file, std::ios::trunc);
        if (!log) throw std::runtime_error("cannot open log file " + cfg.log_file);
    }
    auto on_epoch = [&](const EpochRecord& rec) {
        std::cout << "epoch " << rec.epoch << ": train loss " << std::setprecision(8)
                  << rec.train_loss << ", val PSNR " << std::setprecision(6) << rec.val_psnr
                  << " dB\n";
        if (log.is_open()) {
            nlohmann::json j{{"epoch", rec.epoch},
                             {"train_loss", rec.train_loss},
                             {"val_psnr", rec.val_psnr}};
            log << j.dump() << "\n";
            log.flush();
        }
    };

    FitResult result = fit(model, patches, val, cfg.train_config(), on_epoch);

    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.epoch = static_cast<std::uint32_t>(result.best_epoch);
    meta.val_psnr = result.best_val_psnr;
    save_checkpoint(result.best_model, meta, cfg.checkpoint);
    std::cout << "best epoch " << result.best_epoch << " (val PSNR " << std::setprecision(6)
              << result.best_val_psnr << " dB) saved to " << cfg.checkpoint << "\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& model_path) {
    require_path(model_path, "--model checkpoint");
    require_path(cfg.dataset_dir, "dataset directory");
    LoadedCheckpoint ckpt = load_checkpoint(model_path);

    std::vector<fs::path> files = list_pgms(cfg.dataset_dir);
    std::vector<std::pair<std::string, QualityReport>> rows;
    for (const fs::path& f : files) {
        if (f.extension() != ".pgm") continue;
        Image truth = load_pgm(f.string());
        Image rec = forward(ckpt.model, measure(ckpt.model.sampling, truth));
        rows.emplace_back(f.filename().string(), evaluate_quality(truth, rec, 1.0));
    }
    if (rows.empty()) throw std::runtime_error("no PGM images in " + cfg.dataset_dir);

    std::cout << std::left << std::setw(28) << "name" << std::right << std::setw(10) << "psnr_db"
              << std::setw(10) << "ssim" << "\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::ostringstream records;
    for (const auto& [name, q] : rows) {
        std::cout << std::left << std::setw(28) << name << std::right << std::fixed
                  << std::setprecision(4) << std::setw(10) << q.psnr << std::setw(10) << q.ssim
                  << "\n";
        std::cout.unsetf(std::ios::fixed);
        psnr_sum += q.psnr;
        ssim_sum += q.ssim;
        nlohmann::json j{{"name", name}, {"psnr_db", q.psnr}, {"ssim", q.ssim}};
        records << j.dump() << "\n";
    }
    const double n = static_cast<double>(rows.size());
    std::cout << std::left << std::setw(28) << "mean" << std::right << std::fixed
              << std::setprecision(4) << std::setw(10) << psnr_sum / n << std::setw(10)
              << ssim_sum / n << "\n";
    std::cout.unsetf(std::ios::fixed);

    if (!cfg.eval_report.empty()) {
        std::ofstream out(cfg.eval_report, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open eval report " + cfg.eval_report);
        out << records.str();
    }
    return 0;
}

int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& model_path) {
    require_path(cfg.input, "--input image");
    require_path(cfg.output, "--output image");

    AmpNetModel model;
    if (!model_path.empty()) {
        model = load_checkpoint(model_path).model;
    } else {
        model = model_from_config(cfg);
        std::cout << "no checkpoint given; using a fresh seed-" << cfg.seed << " model\n";
    }

    Image truth = load_pgm(cfg.input);
    Image rec = forward(model, measure(model.sampling, truth));
    save_pgm(rec, cfg.output);

    std::cout << "ratio " << model.sampling.ratio << ", PSNR " << std::setprecision(6)
              << psnr(truth, rec, 1.0) << " dB";
    if (truth.height >= 11 && truth.width >= 11)
        std::cout << ", SSIM " << std::setprecision(6) << ssim(truth, rec);
    std::cout << ", wrote " << cfg.output << "\n";
    return 0;
}

int cmd_gradcheck(bool seed_given, std::uint64_t seed) {
    GradcheckOptions opt;
    if (seed_given) opt.seed = seed;
    GradcheckResult res = run_gradcheck(opt);
    std::cout << "finite differences vs engine: max rel err " << std::scientific
              << std::setprecision(3) << res.max_rel_err << " (worst leaf " << res.worst_leaf
              << ", tolerance " << res.rel_tol << ")\n"
              << "alpha scalar check:           max rel err " << res.alpha_rel_err << "\n"
              << "closed-form A gradient:       max abs err " << res.oracle_max_abs
              << " (tolerance " << res.oracle_tol << ")\n";
    std::cout.unsetf(std::ios::scientific);
    std::cout << (res.pass() ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return res.pass() ? 0 : 1;
}

int cmd_baseline(const ExperimentConfig& cfg) {
    const std::size_t n = cfg.baseline_signal_n;
    const std::size_t m = cfg.baseline_m;
    const std::size_t k = cfg.baseline_sparsity;
    if (k > n) throw std::invalid_argument("baseline sparsity exceeds signal length");

    BaselineConfig bc;
    bc.iterations = cfg.baseline_iterations;
    bc.threshold = cfg.baseline_threshold;
    bc.schedule = cfg.baseline_schedule == "fixed" ? ThresholdSchedule::fixed
                                                   : ThresholdSchedule::decaying;

    std::vector<double> nmses;
    for (std::size_t trial = 0; trial < cfg.baseline_trials; ++trial) {
        Rng rng(cfg.seed + trial);
        Matrix a = gaussian_matrix(rng, m, n, 1.0 / static_cast<double>(m));

        std::vector<double> x(n, 0.0);
        std::size_t placed = 0;
        while (placed < k) {
            const std::size_t idx = rng.next_u64() % n;
            if (x[idx] != 0.0) continue;
            double v = rng.normal();
            while (v == 0.0) v = rng.normal();
            x[idx] = v;
            ++placed;
        }
        std::vector<double> y(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t jj = 0; jj < n; ++jj) acc += a.at(i, jj) * x[jj];
            y[i] = acc;
        }

        std::vector<double> rec = amp_baseline(a, y, bc);
        double err = 0.0, ref = 0.0;
        for (std::size_t jj = 0; jj < n; ++jj) {
            const double d = rec[jj] - x[jj];
            err += d * d;
            ref += x[jj] * x[jj];
        }
        const double nmse = err / ref;
        nmses.push_back(nmse);
        std::cout << "trial " << trial << ": NMSE " << std::scientific << std::setprecision(3)
                  << nmse << "\n";
        std::cout.unsetf(std::ios::scientific);
    }
    std::sort(nmses.begin(), nmses.end());
    const double median = nmses.size() % 2 == 1
                              ? nmses[nmses.size() / 2]
                              : 0.5 * (nmses[nmses.size() / 2 - 1] + nmses[nmses.size() / 2]);
    std::cout << "median NMSE over " << nmses.size() << " trials: " << std::scientific
              << std::setprecision(3) << median << "\n";
    std::cout.unsetf(std::ios::scientific);
    return 0;
}

}  // namespace

PatchExtraction extract_patches(const std::string& dataset_dir, std::size_t per_image,
                                std::size_t size, Rng& rng) {
    if (per_image < 1 || size < 1)
        throw std::invalid_argument("extract_patches: recipe values must be >= 1");
    PatchExtraction out;
    for (const fs::path& f : list_pgms(dataset_dir)) {
        const std::string name = f.filename().string();
        if (f.extension() != ".pgm") {
            out.manifest.push_back("skip " + name + " (not a PGM)");
            continue;
        }
        Image img;
        try {
            img = load_pgm(f.string());
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << name << ": " << e.what() << "\n";
            out.manifest.push_back("skip " + name + " (unreadable: " + e.what() + ")");
            continue;
        }
        if (img.height < size || img.width < size) {
            std::cerr << "warning: skipping " << name << ": smaller than the patch size\n";
            out.manifest.push_back("skip " + name + " (undersized)");
            continue;
        }
        for (std::size_t p = 0; p < per_image; ++p) {
            const std::size_t top = rng.next_u64() % (img.height - size + 1);
            const std::size_t left = rng.next_u64() % (img.width - size + 1);
            Image patch(size, size);
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x)
                    patch.at(y, x) = img.at(top + y, left + x);
            out.patches.push_back(std::move(patch));
        }
        out.manifest.push_back("ok " + name + " " + std::to_string(per_image));
    }
    return out;
}

int run_command(int argc, const char* const* argv) {
    CLI::App app{"Block compressive sensing with an unrolled AMP reconstruction network"};
    app.require_subcommand(1);

    std::string config_path, model_path, input_path, output_path, dataset_dir;
    std::uint64_t seed_override = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment config");
        sub->add_option("--model", model_path, "model checkpoint path");
        sub->add_option("--input", input_path, "input PGM image");
        sub->add_option("--output", output_path, "output PGM image");
        sub->add_option("--dataset", dataset_dir, "directory of PGM images");
        sub->add_option("--seed", seed_override, "seed override");
        return sub;
    };

    CLI::App* extract = add_common(app.add_subcommand(
        "extract-patches", "random training patches from a directory of PGMs"));
    CLI::App* train = add_common(app.add_subcommand("train", "train a model on a patch file"));
    CLI::App* eval_cmd = add_common(
        app.add_subcommand("eval", "PSNR/SSIM of a checkpoint over an image directory"));
    CLI::App* reconstruct = add_common(
        app.add_subcommand("reconstruct", "sample and reconstruct a single image"));
    CLI::App* gradcheck = add_common(
        app.add_subcommand("gradcheck", "finite-difference and closed-form gradient checks"));
    CLI::App* baseline = add_common(
        app.add_subcommand("baseline", "classical soft-threshold recovery on sparse signals"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        bool seed_given = false;
        for (const CLI::App* sub :
             {extract, train, eval_cmd, reconstruct, gradcheck, baseline})
            if (sub->parsed() && sub->count("--seed") > 0) {
                cfg.seed = seed_override;
                seed_given = true;
            }
        if (!dataset_dir.empty()) cfg.dataset_dir = dataset_dir;
        if (!input_path.empty()) cfg.input = input_path;
        if (!output_path.empty()) cfg.output = output_path;
        if (model_path.empty() && !cfg.checkpoint.empty() &&
            (eval_cmd->parsed() || reconstruct->parsed()))
            model_path = cfg.checkpoint;

        if (extract->parsed()) return cmd_extract(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg, model_path);
        if (reconstruct->parsed()) return cmd_reconstruct(cfg, model_path);
        if (gradcheck->parsed()) return cmd_gradcheck(seed_given, cfg.seed);
        if (baseline->parsed()) return cmd_baseline(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace ampnet
