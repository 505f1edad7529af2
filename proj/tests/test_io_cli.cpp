#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ampnet/cli.hpp"
#include "ampnet/config.hpp"
#include "ampnet/io.hpp"
#include "ampnet/metrics.hpp"
#include "ampnet/training.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/synth.hpp"

using namespace ampnet;
namespace fs = std::filesystem;

namespace {

Image random_image(Rng& rng, std::size_t h, std::size_t w) {
    Image img(h, w);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path("tmp_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> strs{"ampnet"};
    strs.insert(strs.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(strs.size());
    for (const std::string& s : strs) argv.push_back(s.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    REQUIRE(out.good());
    out << text;
}

std::size_t line_count(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

std::vector<double> snapshot(AmpNetModel& model) {
    std::vector<double> out;
    for (const LeafView& leaf : parameter_leaves(model))
        out.insert(out.end(), leaf.data, leaf.data + leaf.size);
    return out;
}

}  // namespace

TEST_CASE("pgm round-trip stays within half a quantization step") {
    fs::path dir = fresh_dir("pgm_roundtrip");
    Rng rng(3);
    Image img = random_image(rng, 20, 30);
    save_pgm(img, (dir / "a.pgm").string());
    Image back = load_pgm((dir / "a.pgm").string());
    REQUIRE(back.height == 20);
    REQUIRE(back.width == 30);
    double worst = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        worst = std::max(worst, std::fabs(img.pixels[i] - back.pixels[i]));
    CHECK(worst <= 1.0 / 510.0 + 1e-12);
    // a second trip through disk is exact: the values are already quantized
    save_pgm(back, (dir / "b.pgm").string());
    Image again = load_pgm((dir / "b.pgm").string());
    CHECK(again.pixels == back.pixels);
    fs::remove_all(dir);
}

TEST_CASE("save_pgm clamps out-of-range values") {
    fs::path dir = fresh_dir("pgm_clamp");
    Image img(4, 4);
    img.pixels[0] = -0.5;
    img.pixels[1] = 1.5;
    img.pixels[2] = 0.5;
    save_pgm(img, (dir / "c.pgm").string());
    Image back = load_pgm((dir / "c.pgm").string());
    CHECK(back.pixels[0] == 0.0);
    CHECK(back.pixels[1] == 1.0);
    CHECK(back.pixels[2] == doctest::Approx(0.5).epsilon(1e-2));
    fs::remove_all(dir);
}

TEST_CASE("load_pgm rejects missing files and wrong magic numbers") {
    fs::path dir = fresh_dir("pgm_bad");
    CHECK_THROWS_AS(load_pgm((dir / "missing.pgm").string()), std::runtime_error);
    write_text(dir / "ascii.pgm", "P2\n2 2\n255\n0 1 2 3\n");
    CHECK_THROWS_AS(load_pgm((dir / "ascii.pgm").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("patch store round-trips bitwise and writes deterministic bytes") {
    fs::path dir = fresh_dir("patches");
    Rng rng(5);
    std::vector<Image> patches;
    for (int i = 0; i < 5; ++i) patches.push_back(random_image(rng, 9, 9));
    save_patches(patches, (dir / "p1.bin").string());
    save_patches(patches, (dir / "p2.bin").string());
    CHECK(slurp(dir / "p1.bin") == slurp(dir / "p2.bin"));
    std::vector<Image> back = load_patches((dir / "p1.bin").string());
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(back[i].pixels == patches[i].pixels);
    fs::remove_all(dir);
}

TEST_CASE("load_patches rejects truncated files") {
    fs::path dir = fresh_dir("patches_bad");
    Rng rng(7);
    std::vector<Image> patches{random_image(rng, 6, 6)};
    save_patches(patches, (dir / "p.bin").string());
    std::vector<char> bytes = slurp(dir / "p.bin");
    bytes.resize(bytes.size() / 2);
    std::ofstream out(dir / "p.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_patches((dir / "p.bin").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints round-trip the model bit-exactly") {
    fs::path dir = fresh_dir("ckpt");
    Rng rng(11);
    AmpNetModel model = make_model(rng, Variant::bm, 2, 8, 16);
    CheckpointMeta meta;
    meta.seed = 99;
    meta.epoch = 7;
    meta.val_psnr = 31.25;
    save_checkpoint(model, meta, (dir / "m.ckpt").string());
    LoadedCheckpoint back = load_checkpoint((dir / "m.ckpt").string());
    CHECK(back.meta.seed == 99);
    CHECK(back.meta.epoch == 7);
    CHECK(back.meta.val_psnr == 31.25);
    CHECK(back.model.variant == Variant::bm);
    CHECK(back.model.K == 2);
    CHECK(snapshot(back.model) == snapshot(model));
    // forward of the loaded model is bit-identical
    Image img = random_image(rng, 16, 16);
    Image a = forward(model, measure(model.sampling, img));
    Image b = forward(back.model, measure(back.model.sampling, img));
    CHECK(a.pixels == b.pixels);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    fs::path dir = fresh_dir("ckpt_bad");
    Rng rng(13);
    AmpNetModel model = make_model(rng, Variant::plain, 1, 8, 16);
    save_checkpoint(model, {}, (dir / "m.ckpt").string());
    std::vector<char> bytes = slurp(dir / "m.ckpt");

    std::vector<char> truncated(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    std::ofstream t(dir / "trunc.ckpt", std::ios::binary);
    t.write(truncated.data(), static_cast<std::streamsize>(truncated.size()));
    t.close();
    CHECK_THROWS_AS(load_checkpoint((dir / "trunc.ckpt").string()), std::runtime_error);

    std::vector<char> magic = bytes;
    magic[0] = 'X';
    std::ofstream m(dir / "magic.ckpt", std::ios::binary);
    m.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    m.close();
    CHECK_THROWS_AS(load_checkpoint((dir / "magic.ckpt").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("a K=9 BM checkpoint reports 343881 trainable parameters") {
    fs::path dir = fresh_dir("ckpt_k9");
    AmpNetModel model = make_model_shell(Variant::bm, 9, 33, 272);
    save_checkpoint(model, {}, (dir / "k9.ckpt").string());
    LoadedCheckpoint back = load_checkpoint((dir / "k9.ckpt").string());
    CHECK(param_count(back.model, false) == 343881);
    fs::remove_all(dir);
}

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
    ExperimentConfig cfg = parse_config("{}");
    CHECK(cfg.variant == Variant::plain);
    CHECK(cfg.K == 2);
    CHECK(cfg.n == 33);
    CHECK(cfg.ratio == 0.3);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.epochs == 20);
    CHECK(cfg.recipe == "set2");
    CHECK(cfg.patches_per_image == 977);
    CHECK(cfg.patch_size == 33);

    try {
        parse_config("{\"learning_rat\": 0.1}");
        FAIL("expected rejection");
    } catch (const std::invalid_argument& err) {
        CHECK(std::string(err.what()).find("learning_rat") != std::string::npos);
    }
}

TEST_CASE("config recipes pin the patch extraction parameters") {
    ExperimentConfig set1 = parse_config("{\"recipe\": \"set1\"}");
    CHECK(set1.patches_per_image == 448);
    CHECK(set1.patch_size == 99);
    ExperimentConfig set2 = parse_config("{\"recipe\": \"set2\"}");
    CHECK(set2.patches_per_image == 977);
    CHECK(set2.patch_size == 33);
    ExperimentConfig custom =
        parse_config("{\"recipe\": \"custom\", \"patches_per_image\": 5, \"patch_size\": 16}");
    CHECK(custom.patches_per_image == 5);
    CHECK(custom.patch_size == 16);
    // explicit patch numbers clash with a fixed recipe
    CHECK_THROWS_AS(parse_config("{\"recipe\": \"set2\", \"patch_size\": 16}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{\"recipe\": \"nonesuch\"}"), std::invalid_argument);
}

TEST_CASE("config validates numeric ranges and the variant") {
    CHECK_THROWS_AS(parse_config("{\"ratio\": 0.0}"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{\"ratio\": 1.5}"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{\"K\": 0}"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{\"variant\": \"XL\"}"), std::invalid_argument);
    ExperimentConfig bm = parse_config("{\"variant\": \"BM\", \"K\": 4}");
    CHECK(bm.variant == Variant::bm);
    CHECK(bm.K == 4);
    TrainConfig tc = bm.train_config();
    CHECK(tc.variant == Variant::bm);
    CHECK(tc.K == 4);
    CHECK(tc.learning_rate == 1e-4);
}

TEST_CASE("extract_patches walks a directory deterministically and skips bad files") {
    fs::path dir = fresh_dir("extract");
    Rng scenes(17);
    save_pgm(synth::scene(scenes, 40, 40), (dir / "a.pgm").string());
    save_pgm(synth::scene(scenes, 40, 40), (dir / "b.pgm").string());
    save_pgm(synth::scene(scenes, 8, 8), (dir / "small.pgm").string());  // undersized
    write_text(dir / "notes.txt", "not an image");

    Rng r1(23);
    PatchExtraction e1 = extract_patches(dir.string(), 3, 16, r1);
    CHECK(e1.patches.size() == 6);
    for (const Image& p : e1.patches) {
        CHECK(p.height == 16);
        CHECK(p.width == 16);
    }
    REQUIRE(e1.manifest.size() == 4);
    std::size_t ok = 0, skip = 0;
    for (const std::string& line : e1.manifest) {
        if (line.rfind("ok", 0) == 0) ++ok;
        if (line.rfind("skip", 0) == 0) ++skip;
    }
    CHECK(ok == 2);
    CHECK(skip == 2);

    Rng r2(23);
    PatchExtraction e2 = extract_patches(dir.string(), 3, 16, r2);
    REQUIRE(e2.patches.size() == e1.patches.size());
    for (std::size_t i = 0; i < e1.patches.size(); ++i)
        CHECK(e1.patches[i].pixels == e2.patches[i].pixels);
    fs::remove_all(dir);
}

TEST_CASE("extract-patches command writes identical files for identical seeds") {
    fs::path dir = fresh_dir("cli_extract");
    Rng scenes(29);
    save_pgm(synth::scene(scenes, 48, 48), (dir / "img1.pgm").string());
    save_pgm(synth::scene(scenes, 48, 48), (dir / "img2.pgm").string());

    nlohmann::json cfg{{"recipe", "custom"},
                       {"patches_per_image", 4},
                       {"patch_size", 16},
                       {"seed", 7},
                       {"dataset_dir", (dir / "").string()},
                       {"patch_file", (dir / "out1.bin").string()}};
    write_text(dir / "c1.json", cfg.dump());
    cfg["patch_file"] = (dir / "out2.bin").string();
    write_text(dir / "c2.json", cfg.dump());

    CHECK(run_cli({"extract-patches", "--config", (dir / "c1.json").string()}) == 0);
    CHECK(run_cli({"extract-patches", "--config", (dir / "c2.json").string()}) == 0);
    CHECK(slurp(dir / "out1.bin") == slurp(dir / "out2.bin"));
    CHECK(fs::exists(dir / "out1.bin.manifest"));
    std::vector<Image> patches = load_patches((dir / "out1.bin").string());
    CHECK(patches.size() == 8);
    fs::remove_all(dir);
}

TEST_CASE("train command fits, logs JSONL and saves a loadable checkpoint") {
    fs::path dir = fresh_dir("cli_train");
    std::vector<Image> patches = synth::patches(31, 12, 8);
    save_patches(patches, (dir / "patches.bin").string());

    nlohmann::json cfg{{"variant", "plain"}, {"K", 1},
                       {"n", 8},            {"ratio", 0.25},
                       {"epochs", 2},       {"batch_size", 4},
                       {"val_count", 2},    {"seed", 3},
                       {"learning_rate", 1e-4},
                       {"patch_file", (dir / "patches.bin").string()},
                       {"checkpoint", (dir / "model.ckpt").string()},
                       {"log_file", (dir / "log.jsonl").string()}};
    write_text(dir / "train.json", cfg.dump());

    CHECK(run_cli({"train", "--config", (dir / "train.json").string()}) == 0);
    REQUIRE(fs::exists(dir / "model.ckpt"));
    REQUIRE(fs::exists(dir / "log.jsonl"));
    CHECK(line_count(dir / "log.jsonl") == 2);
    std::ifstream log(dir / "log.jsonl");
    std::string line;
    std::getline(log, line);
    nlohmann::json rec = nlohmann::json::parse(line);
    CHECK(rec["epoch"] == 1);
    CHECK(rec.contains("train_loss"));
    CHECK(rec.contains("val_psnr"));

    LoadedCheckpoint ckpt = load_checkpoint((dir / "model.ckpt").string());
    CHECK(ckpt.model.K == 1);
    CHECK(ckpt.model.sampling.n == 8);
    CHECK(ckpt.meta.seed == 3);
    CHECK(std::isfinite(ckpt.meta.val_psnr));
    fs::remove_all(dir);
}

TEST_CASE("eval command reports one JSONL record per image") {
    fs::path dir = fresh_dir("cli_eval");
    Rng rng(37);
    AmpNetModel model = make_model(rng, Variant::plain, 1, 8, 16);
    save_checkpoint(model, {}, (dir / "m.ckpt").string());
    fs::create_directories(dir / "imgs");
    Rng scenes(41);
    save_pgm(synth::scene(scenes, 24, 24), (dir / "imgs" / "x.pgm").string());
    save_pgm(synth::scene(scenes, 24, 24), (dir / "imgs" / "y.pgm").string());

    nlohmann::json cfg{{"dataset_dir", (dir / "imgs").string()},
                       {"eval_report", (dir / "report.jsonl").string()}};
    write_text(dir / "eval.json", cfg.dump());
    CHECK(run_cli({"eval", "--config", (dir / "eval.json").string(), "--model",
                   (dir / "m.ckpt").string()}) == 0);
    REQUIRE(fs::exists(dir / "report.jsonl"));
    CHECK(line_count(dir / "report.jsonl") == 2);
    std::ifstream in(dir / "report.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.contains("name"));
        CHECK(j.contains("psnr_db"));
        CHECK(j.contains("ssim"));
        CHECK(std::isfinite(j["psnr_db"].get<double>()));
    }
    fs::remove_all(dir);
}

TEST_CASE("reconstruct command writes a decodable image with a fresh seeded model") {
    fs::path dir = fresh_dir("cli_recon");
    Rng scenes(43);
    Image truth = synth::scene(scenes, 64, 64);
    save_pgm(truth, (dir / "in.pgm").string());
    nlohmann::json cfg{{"variant", "plain"}, {"K", 1}, {"n", 8}, {"ratio", 0.5}};
    write_text(dir / "r.json", cfg.dump());
    CHECK(run_cli({"reconstruct", "--config", (dir / "r.json").string(), "--input",
                   (dir / "in.pgm").string(), "--output", (dir / "out.pgm").string(),
                   "--seed", "11"}) == 0);
    REQUIRE(fs::exists(dir / "out.pgm"));
    Image rec = load_pgm((dir / "out.pgm").string());
    CHECK(rec.height == 64);
    CHECK(rec.width == 64);
    CHECK(std::isfinite(psnr(load_pgm((dir / "in.pgm").string()), rec)));
    fs::remove_all(dir);
}

TEST_CASE("baseline command runs the configured trial sweep") {
    fs::path dir = fresh_dir("cli_baseline");
    nlohmann::json cfg{{"baseline_trials", 3},
                       {"baseline_signal_n", 64},
                       {"baseline_m", 32},
                       {"baseline_sparsity", 4},
                       {"baseline_iterations", 20}};
    write_text(dir / "b.json", cfg.dump());
    CHECK(run_cli({"baseline", "--config", (dir / "b.json").string()}) == 0);
    fs::remove_all(dir);
}

TEST_CASE("the CLI surfaces usage errors as nonzero exits") {
    CHECK(run_cli({"frobnicate"}) != 0);
    CHECK(run_cli({"train"}) != 0);  // no patch file or checkpoint configured
    fs::path dir = fresh_dir("cli_badcfg");
    write_text(dir / "bad.json", "{\"no_such_key\": 1}");
    CHECK(run_cli({"eval", "--config", (dir / "bad.json").string()}) != 0);
    fs::remove_all(dir);
}
