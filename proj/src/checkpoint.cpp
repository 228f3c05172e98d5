#include "checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace pairvit {

namespace {

constexpr char kMagic[8] = {'P', 'V', 'I', 'T', 'C', 'K', 'P', '1'};
constexpr std::int32_t kVersion = 1;

void put_i32(std::ostream& out, std::int32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((std::uint32_t(v) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::int32_t get_i32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("truncated checkpoint header in " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return std::int32_t(v);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw DataError("truncated checkpoint payload in " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::vector<ModelParams::Named> enumerate(const ModelParams& params, const SamParams* sam) {
    auto named = params.named_params();
    if (sam)
        for (auto& n : sam->named_params()) named.push_back(n);
    return named;
}

SamParams sam_zeros(const ModelConfig& config) {
    SamParams sam;
    sam.q_w = Tensor::zeros({config.embed_dim, config.resolved_sam_dim()}, true);
    sam.k_w = Tensor::zeros({config.embed_dim, config.resolved_sam_dim()}, true);
    return sam;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, const SamParams* sam) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    const auto& cfg = params.config;
    put_i32(out, kVersion);
    put_i32(out, cfg.image_size);
    put_i32(out, cfg.patch_size);
    put_i32(out, cfg.embed_dim);
    put_i32(out, cfg.heads);
    put_i32(out, cfg.layers);
    put_i32(out, cfg.num_classes);
    put_i32(out, cfg.sam_dim);
    put_i32(out, sam ? 1 : 0);

    std::ofstream manifest(path + ".manifest.txt");
    if (!manifest) throw DataError("cannot write checkpoint manifest for " + path);
    std::size_t offset = 8 + 9 * 4;
    for (const auto& named : enumerate(params, sam)) {
        manifest << named.name << " " << shape_str(named.tensor.shape()) << " offset=" << offset
                 << " count=" << named.tensor.numel() << "\n";
        for (real v : named.tensor.data()) put_f64(out, double(v));
        offset += named.tensor.numel() * 8;
    }
    if (!out || !manifest) throw DataError("short write to checkpoint " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    if (get_i32(in, path) != kVersion) throw DataError("unsupported checkpoint version in " + path);

    ModelConfig cfg;
    cfg.image_size = get_i32(in, path);
    cfg.patch_size = get_i32(in, path);
    cfg.embed_dim = get_i32(in, path);
    cfg.heads = get_i32(in, path);
    cfg.layers = get_i32(in, path);
    cfg.num_classes = get_i32(in, path);
    cfg.sam_dim = get_i32(in, path);
    const bool has_sam = get_i32(in, path) != 0;
    cfg.validate();

    LoadedModel model;
    model.params = ModelParams::zeros(cfg);
    if (has_sam) model.sam = sam_zeros(cfg);
    for (auto& named : enumerate(model.params, model.sam ? &*model.sam : nullptr)) {
        Tensor t = named.tensor;
        for (real& v : t.data()) v = real(get_f64(in, path));
    }
    char extra;
    if (in.read(&extra, 1))
        throw DataError("trailing bytes after checkpoint payload in " + path);
    return model;
}

void strip_checkpoint(const std::string& in_path, const std::string& out_path) {
    LoadedModel model = load_checkpoint(in_path);
    save_checkpoint(out_path, model.params, nullptr);
}

}  // namespace pairvit
