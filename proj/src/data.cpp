#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace pairvit {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "wl_path,nbi_path,label,subject_id,bbox_wl,bbox_nbi";

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::optional<BBox> parse_bbox(const std::string& field, int row) {
    if (field.empty()) return std::nullopt;
    const auto parts = split(field, ':');
    if (parts.size() != 4)
        throw DataError("row " + std::to_string(row) + ": bad bbox '" + field + "'");
    BBox b;
    try {
        b.x = std::stoi(parts[0]);
        b.y = std::stoi(parts[1]);
        b.w = std::stoi(parts[2]);
        b.h = std::stoi(parts[3]);
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": bad bbox '" + field + "'");
    }
    return b;
}

void check_bbox(const std::optional<BBox>& bbox, const Image& img, const char* which, int row) {
    if (!bbox) return;
    const BBox& b = *bbox;
    if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0 || b.x + b.w > img.width ||
        b.y + b.h > img.height)
        throw DataError("row " + std::to_string(row) + ": " + which + " bbox " +
                        std::to_string(b.x) + ":" + std::to_string(b.y) + ":" +
                        std::to_string(b.w) + ":" + std::to_string(b.h) + " outside " +
                        std::to_string(img.width) + "x" + std::to_string(img.height));
}

std::string bbox_field(const std::optional<BBox>& bbox) {
    if (!bbox) return "";
    std::ostringstream os;
    os << bbox->x << ":" << bbox->y << ":" << bbox->w << ":" << bbox->h;
    return os.str();
}

}  // namespace

std::vector<PairedSample> load_manifest(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    const fs::path base = fs::path(path).parent_path();

    std::string line;
    if (!std::getline(in, line)) throw DataError("manifest has no header: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader)
        throw DataError("manifest header mismatch in " + path + " (expected '" +
                        kManifestHeader + "')");

    std::vector<PairedSample> samples;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            const auto fields = split(line, ',');
            if (fields.size() != 6)
                throw DataError("row " + std::to_string(row) + ": expected 6 fields, got " +
                                std::to_string(fields.size()));
            PairedSample s;
            const fs::path wl_path = base / fields[0];
            const fs::path nbi_path = base / fields[1];
            s.wl = read_ppm(wl_path.string());
            s.nbi = read_ppm(nbi_path.string());
            try {
                s.label = std::stoi(fields[2]);
            } catch (const std::exception&) {
                throw DataError("row " + std::to_string(row) + ": bad label '" + fields[2] + "'");
            }
            if (s.label != 0 && s.label != 1)
                throw DataError("row " + std::to_string(row) + ": label must be 0 or 1, got " +
                                fields[2]);
            s.subject_id = fields[3];
            if (s.subject_id.empty())
                throw DataError("row " + std::to_string(row) + ": empty subject_id");
            s.bbox_wl = parse_bbox(fields[4], row);
            s.bbox_nbi = parse_bbox(fields[5], row);
            check_bbox(s.bbox_wl, s.wl, "wl", row);
            check_bbox(s.bbox_nbi, s.nbi, "nbi", row);
            samples.push_back(std::move(s));
        } catch (const DataError& e) {
            if (strict) throw;
            warnf("skipping manifest row %d: %s", row, e.what());
        }
    }
    return samples;
}

void write_dataset(const std::string& dir, const std::vector<PairedSample>& samples) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw DataError("cannot write manifest in " + dir);
    manifest << kManifestHeader << "\n";
    char name[32];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        std::snprintf(name, sizeof(name), "wl_%04zu.ppm", i);
        const std::string wl_name = name;
        std::snprintf(name, sizeof(name), "nbi_%04zu.ppm", i);
        const std::string nbi_name = name;
        write_ppm((fs::path(dir) / wl_name).string(), s.wl);
        write_ppm((fs::path(dir) / nbi_name).string(), s.nbi);
        manifest << wl_name << "," << nbi_name << "," << s.label << "," << s.subject_id << ","
                 << bbox_field(s.bbox_wl) << "," << bbox_field(s.bbox_nbi) << "\n";
    }
    if (!manifest) throw DataError("short write to manifest in " + dir);
}

bool FoldSplit::is_val(int fold, const std::string& subject) const {
    const auto& subs = val_subjects.at(std::size_t(fold));
    return std::find(subs.begin(), subs.end(), subject) != subs.end();
}

FoldSplit subject_kfold(const std::vector<PairedSample>& samples, int k, std::uint64_t seed) {
    if (k < 1) throw UsageError("subject_kfold: k must be >= 1");
    std::vector<std::string> subjects;
    std::unordered_set<std::string> seen;
    for (const auto& s : samples)
        if (seen.insert(s.subject_id).second) subjects.push_back(s.subject_id);
    if (int(subjects.size()) < k)
        throw UsageError("subject_kfold: " + std::to_string(subjects.size()) +
                         " subjects for k=" + std::to_string(k));
    std::mt19937_64 rng(seed);
    std::shuffle(subjects.begin(), subjects.end(), rng);
    FoldSplit split;
    split.k = k;
    split.val_subjects.resize(std::size_t(k));
    for (std::size_t i = 0; i < subjects.size(); ++i)
        split.val_subjects[i % std::size_t(k)].push_back(subjects[i]);
    return split;
}

std::vector<int> val_indices(const FoldSplit& split, int fold,
                             const std::vector<PairedSample>& samples) {
    std::vector<int> idx;
    for (int i = 0; i < int(samples.size()); ++i)
        if (split.is_val(fold, samples[std::size_t(i)].subject_id)) idx.push_back(i);
    return idx;
}

std::vector<int> train_indices(const FoldSplit& split, int fold,
                               const std::vector<PairedSample>& samples) {
    std::vector<int> idx;
    for (int i = 0; i < int(samples.size()); ++i)
        if (!split.is_val(fold, samples[std::size_t(i)].subject_id)) idx.push_back(i);
    return idx;
}

PairedSample crop_bbox(const PairedSample& sample, int out_size) {
    PairedSample out = sample;
    if (sample.bbox_wl) {
        const BBox& b = *sample.bbox_wl;
        out.wl = crop(sample.wl, b.x, b.y, b.w, b.h);
    } else {
        warnf("crop_bbox: sample of subject %s has no wl bbox, passing through",
              sample.subject_id.c_str());
    }
    if (sample.bbox_nbi) {
        const BBox& b = *sample.bbox_nbi;
        out.nbi = crop(sample.nbi, b.x, b.y, b.w, b.h);
    } else {
        warnf("crop_bbox: sample of subject %s has no nbi bbox, passing through",
              sample.subject_id.c_str());
    }
    out.wl = resize_bilinear(out.wl, out_size, out_size);
    out.nbi = resize_bilinear(out.nbi, out_size, out_size);
    out.bbox_wl.reset();
    out.bbox_nbi.reset();
    return out;
}

PairedSample augment(const PairedSample& sample, std::mt19937_64& rng) {
    if (sample.wl.height != sample.nbi.height || sample.wl.width != sample.nbi.width)
        throw ShapeError("augment: modalities disagree on size");
    const int h = sample.wl.height, w = sample.wl.width;

    std::uniform_real_distribution<real> uscale(real(0.7), real(1.0));
    std::uniform_real_distribution<real> ulogratio(std::log(real(0.75)), std::log(real(4.0 / 3.0)));
    std::uniform_real_distribution<real> u01(real(0), real(1));

    // One window for the pair; fall back to the full frame if ten draws
    // do not fit.
    int cw = w, ch = h, cx = 0, cy = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const real area = uscale(rng) * real(h) * real(w);
        const real ratio = std::exp(ulogratio(rng));
        const int tw = int(std::lround(std::sqrt(double(area * ratio))));
        const int th = int(std::lround(std::sqrt(double(area / ratio))));
        if (tw <= 0 || th <= 0 || tw > w || th > h) continue;
        cw = tw;
        ch = th;
        cx = int(u01(rng) * real(w - tw + 1));
        cy = int(u01(rng) * real(h - th + 1));
        cx = std::min(cx, w - tw);
        cy = std::min(cy, h - th);
        break;
    }
    const bool flip = u01(rng) < real(0.5);

    PairedSample out = sample;
    out.wl = resize_bilinear(crop(sample.wl, cx, cy, cw, ch), h, w);
    out.nbi = resize_bilinear(crop(sample.nbi, cx, cy, cw, ch), h, w);
    if (flip) {
        out.wl = hflip(out.wl);
        out.nbi = hflip(out.nbi);
    }
    if (out.wl.height != out.nbi.height || out.wl.width != out.nbi.width)
        throw ShapeError("augment: pair lost spatial correspondence");
    augment_sync_checks().fetch_add(1, std::memory_order_relaxed);
    return out;
}

std::atomic<std::uint64_t>& augment_sync_checks() {
    static std::atomic<std::uint64_t> count{0};
    return count;
}

// ---- synthetic generator ---------------------------------------------------

namespace {

struct SubjectStyle {
    real cx, cy;        // lesion center (fraction of image)
    real ax, ay;        // ellipse semi-axes (fraction)
    real tilt;          // ellipse orientation
    real tex_angle;     // texture orientation
    real tex_freq;      // cycles across the image
    real tex_phase;
    real bg_kx, bg_ky, bg_phase;
};

real uniform(std::mt19937_64& rng, real lo, real hi) {
    return std::uniform_real_distribution<real>(lo, hi)(rng);
}

SubjectStyle subject_style(std::uint64_t seed, int subject, int label) {
    std::mt19937_64 rng(derive_seed(seed, 0x5u, std::uint64_t(subject)));
    SubjectStyle st;
    st.cx = uniform(rng, real(0.42), real(0.58));
    st.cy = uniform(rng, real(0.42), real(0.58));
    st.ax = uniform(rng, real(0.24), real(0.33));
    st.ay = uniform(rng, real(0.18), real(0.27));
    st.tilt = uniform(rng, real(0), real(std::numbers::pi));
    // Texture orientation stays near a class-canonical angle so that
    // same-class lesions correlate pixel-wise across subjects.
    const real canonical = label == 1 ? real(0.55) : real(0);
    st.tex_angle = canonical + uniform(rng, real(-0.1), real(0.1));
    st.tex_freq = uniform(rng, real(4.6), real(5.6));
    st.tex_phase = uniform(rng, real(-0.4), real(0.4));
    st.bg_kx = uniform(rng, real(0.7), real(1.6));
    st.bg_ky = uniform(rng, real(0.7), real(1.6));
    st.bg_phase = uniform(rng, real(0), real(2 * std::numbers::pi));
    return st;
}

}  // namespace

std::vector<PairedSample> generate_synthetic(const SyntheticGenConfig& config) {
    if (config.image_size < 8 || config.pairs_per_class < 1 || config.subjects < 2)
        throw UsageError("generate_synthetic: degenerate config");
    const int S = config.image_size;
    const real pi = real(std::numbers::pi);

    // Even subjects carry class 0, odd class 1; samples of a class are dealt
    // round-robin over that class's subjects.
    const int total = config.pairs_per_class * 2;
    std::vector<PairedSample> samples;
    samples.reserve(std::size_t(total));

    for (int idx = 0; idx < total; ++idx) {
        const int label = idx % 2;
        const int within_class = idx / 2;
        const int class_subjects = (config.subjects + (label == 0 ? 1 : 0)) / 2;
        const int subject = (within_class % class_subjects) * 2 + label;

        const SubjectStyle st = subject_style(config.seed, subject, label);
        std::mt19937_64 srng(derive_seed(config.seed, 0xAu, std::uint64_t(idx)));
        std::mt19937_64 wl_rng(derive_seed(config.seed, 0xBu, std::uint64_t(idx)));

        const real cx = (st.cx + uniform(srng, real(-0.04), real(0.04))) * real(S);
        const real cy = (st.cy + uniform(srng, real(-0.04), real(0.04))) * real(S);
        const real ax = st.ax * uniform(srng, real(0.92), real(1.08)) * real(S);
        const real ay = st.ay * uniform(srng, real(0.92), real(1.08)) * real(S);
        const real tilt = st.tilt + uniform(srng, real(-0.08), real(0.08));
        const real tex_angle = st.tex_angle + uniform(srng, real(-0.04), real(0.04));
        const real freq = st.tex_freq * uniform(srng, real(0.97), real(1.03));
        const real phase = st.tex_phase + uniform(srng, real(-0.2), real(0.2));
        const real bg_base = uniform(srng, real(0.4), real(0.46));

        const real ct = std::cos(tilt), sn = std::sin(tilt);
        const real ta_c = std::cos(tex_angle), ta_s = std::sin(tex_angle);

        PairedSample sample;
        sample.label = label;
        char sid[16];
        std::snprintf(sid, sizeof(sid), "s%03d", subject);
        sample.subject_id = sid;
        sample.wl = Image(S, S);
        sample.nbi = Image(S, S);

        std::normal_distribution<real> noise(real(0), config.wl_noise);
        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                const real fx = real(x) / real(S), fy = real(y) / real(S);
                const real bg = bg_base +
                                real(0.04) * std::sin(2 * pi * (fx * st.bg_kx + fy * st.bg_ky) +
                                                      st.bg_phase);
                const real dx = real(x) - cx, dy = real(y) - cy;
                const real u = (dx * ct + dy * sn) / ax;
                const real v = (-dx * sn + dy * ct) / ay;
                const real e = std::sqrt(u * u + v * v);
                const real mask = std::clamp((real(1.08) - e) / real(0.16), real(0), real(1));

                real tex;
                if (label == 1) {
                    const real s = (real(x) * ta_c + real(y) * ta_s) / real(S);
                    tex = std::sin(2 * pi * freq * s + phase);
                } else {
                    const real s1 = (real(x) * ta_c + real(y) * ta_s) / real(S);
                    const real s2 = (-real(x) * ta_s + real(y) * ta_c) / real(S);
                    tex = std::cos(2 * pi * freq * s1 + phase) *
                          std::cos(2 * pi * freq * s2 + phase);
                }

                const real common = bg + mask * real(0.16);
                const real nbi_v = common + mask * config.nbi_contrast * tex;
                const real wl_v =
                    common + mask * config.nbi_contrast * config.wl_attenuation * tex;
                for (int c = 0; c < 3; ++c) {
                    const real tintn = real(1) - real(0.06) * real(c);
                    sample.nbi.at(y, x, c) = nbi_v * tintn;
                    sample.wl.at(y, x, c) =
                        wl_v * tintn + (config.wl_noise > 0 ? noise(wl_rng) : real(0));
                }
            }
        }
        sample.nbi.clamp01();
        sample.wl.clamp01();

        // Axis-aligned bound of the soft-edged ellipse, padded and clipped.
        const real ex = real(1.1) * std::sqrt(ax * ax * ct * ct + ay * ay * sn * sn);
        const real ey = real(1.1) * std::sqrt(ax * ax * sn * sn + ay * ay * ct * ct);
        BBox b;
        b.x = std::max(0, int(cx - ex) - 2);
        b.y = std::max(0, int(cy - ey) - 2);
        b.w = std::min(S, int(cx + ex) + 3) - b.x;
        b.h = std::min(S, int(cy + ey) + 3) - b.y;
        sample.bbox_wl = b;
        sample.bbox_nbi = b;

        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace pairvit
