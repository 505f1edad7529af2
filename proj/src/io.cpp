#include "ampnet/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ampnet/training.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace ampnet {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

void read_exact(std::istream& in, void* dst, std::size_t bytes, const std::string& path) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) fail(path, "truncated file");
}

template <typename T>
T read_value(std::istream& in, const std::string& path) {
    T v{};
    read_exact(in, &v, sizeof(T), path);
    return v;
}

template <typename T>
void write_value(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// Writes through a sibling temp file and renames into place.
class AtomicFile {
  public:
    explicit AtomicFile(const std::string& path)
        : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!out_) fail(tmp_, "cannot open for writing");
    }
    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    std::ostream& stream() { return out_; }
    void commit() {
        out_.flush();
        if (!out_) fail(tmp_, "write failed");
        out_.close();
        std::filesystem::rename(tmp_, path_);
        committed_ = true;
    }

  private:
    std::string path_;
    std::string tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

int pgm_token(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments, then reads one decimal token
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) fail(path, "malformed PGM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    return value;
}

constexpr char kMagic[4] = {'A', 'M', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char p = 0, five = 0;
    in.get(p);
    in.get(five);
    if (p != 'P' || five != '5') fail(path, "not a binary PGM (P5) file");
    const int width = pgm_token(in, path);
    const int height = pgm_token(in, path);
    const int maxval = pgm_token(in, path);
    if (width <= 0 || height <= 0) fail(path, "bad dimensions");
    if (maxval != 255) fail(path, "only 8-bit PGM (maxval 255) is supported");

    // the token reader consumed the single whitespace after maxval, so the
    // stream now sits on the first pixel byte
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
    read_exact(in, raw.data(), raw.size(), path);

    Image img(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

void save_pgm(const Image& image, const std::string& path) {
    if (image.height == 0 || image.width == 0) fail(path, "empty image");
    AtomicFile file(path);
    file.stream() << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> raw(image.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double v = image.pixels[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    file.stream().write(reinterpret_cast<const char*>(raw.data()),
                        static_cast<std::streamsize>(raw.size()));
    file.commit();
}

void save_patches(const std::vector<Image>& patches, const std::string& path) {
    if (patches.empty()) fail(path, "no patches to save");
    const std::uint32_t count = static_cast<std::uint32_t>(patches.size());
    const std::uint32_t h = static_cast<std::uint32_t>(patches[0].height);
    const std::uint32_t w = static_cast<std::uint32_t>(patches[0].width);
    for (const Image& p : patches)
        if (p.height != h || p.width != w) fail(path, "patches must share one shape");

    AtomicFile file(path);
    write_value(file.stream(), count);
    write_value(file.stream(), h);
    write_value(file.stream(), w);
    for (const Image& p : patches)
        file.stream().write(reinterpret_cast<const char*>(p.pixels.data()),
                            static_cast<std::streamsize>(p.pixels.size() * sizeof(double)));
    file.commit();
}

std::vector<Image> load_patches(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    const auto count = read_value<std::uint32_t>(in, path);
    const auto h = read_value<std::uint32_t>(in, path);
    const auto w = read_value<std::uint32_t>(in, path);
    if (count == 0 || h == 0 || w == 0) fail(path, "bad patch header");
    std::vector<Image> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Image img(h, w);
        read_exact(in, img.pixels.data(), img.pixels.size() * sizeof(double), path);
        out.push_back(std::move(img));
    }
    return out;
}

void save_checkpoint(const AmpNetModel& model, const CheckpointMeta& meta,
                     const std::string& path) {
    AtomicFile file(path);
    std::ostream& out = file.stream();
    out.write(kMagic, 4);
    write_value(out, kVersion);
    write_value(out, static_cast<std::uint8_t>(model.variant));
    write_value(out, static_cast<std::uint32_t>(model.K));
    write_value(out, static_cast<std::uint32_t>(model.sampling.n));
    write_value(out, static_cast<std::uint32_t>(model.sampling.m));
    write_value(out, meta.seed);
    write_value(out, meta.epoch);
    write_value(out, meta.val_psnr);

    AmpNetModel& mutable_model = const_cast<AmpNetModel&>(model);
    std::vector<LeafView> leaves = parameter_leaves(mutable_model);
    write_value(out, static_cast<std::uint32_t>(leaves.size()));
    for (const LeafView& leaf : leaves) {
        write_value(out, static_cast<std::uint16_t>(leaf.name.size()));
        out.write(leaf.name.data(), static_cast<std::streamsize>(leaf.name.size()));
        write_value(out, static_cast<std::uint32_t>(leaf.shape.size()));
        for (std::size_t d : leaf.shape) write_value(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(leaf.data),
                  static_cast<std::streamsize>(leaf.size * sizeof(double)));
    }
    file.commit();
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char magic[4];
    read_exact(in, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) fail(path, "bad magic (not an AMPN checkpoint)");
    const auto version = read_value<std::uint32_t>(in, path);
    if (version != kVersion) fail(path, "unsupported checkpoint version");

    const auto variant_raw = read_value<std::uint8_t>(in, path);
    if (variant_raw > 3) fail(path, "bad variant code");
    const auto k = read_value<std::uint32_t>(in, path);
    const auto n = read_value<std::uint32_t>(in, path);
    const auto m = read_value<std::uint32_t>(in, path);

    LoadedCheckpoint result;
    result.meta.seed = read_value<std::uint64_t>(in, path);
    result.meta.epoch = read_value<std::uint32_t>(in, path);
    result.meta.val_psnr = read_value<double>(in, path);
    result.model = make_model_shell(static_cast<Variant>(variant_raw), k, n, m);

    std::vector<LeafView> leaves = parameter_leaves(result.model);
    std::map<std::string, LeafView*> by_name;
    for (LeafView& leaf : leaves) by_name[leaf.name] = &leaf;

    const auto leaf_count = read_value<std::uint32_t>(in, path);
    if (leaf_count != leaves.size()) fail(path, "leaf table does not match the model structure");
    for (std::uint32_t i = 0; i < leaf_count; ++i) {
        const auto name_len = read_value<std::uint16_t>(in, path);
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name_len, path);
        auto it = by_name.find(name);
        if (it == by_name.end()) fail(path, "unknown parameter array '" + name + "'");
        LeafView* leaf = it->second;

        const auto ndims = read_value<std::uint32_t>(in, path);
        std::vector<std::size_t> shape(ndims);
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            shape[d] = static_cast<std::size_t>(read_value<std::uint64_t>(in, path));
            total *= shape[d];
        }
        if (shape != leaf->shape || total != leaf->size)
            fail(path, "shape mismatch for parameter array '" + name + "'");
        read_exact(in, leaf->data, leaf->size * sizeof(double), path);
        by_name.erase(it);
    }
    if (!by_name.empty()) fail(path, "checkpoint is missing parameter arrays");
    return result;
}

}  // namespace ampnet
