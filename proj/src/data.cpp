#include "ganlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ganlab/common.hpp"

namespace fs = std::filesystem;

namespace ganlab::data {

namespace {

struct NamedColor {
    const char* name;
    uint8_t r, g, b;
};

constexpr NamedColor kFills[kNumFills] = {
    {"red", 220, 30, 30},     {"green", 40, 200, 40},
    {"blue", 40, 70, 230},    {"yellow", 230, 220, 40},
    {"magenta", 220, 50, 220}, {"cyan", 50, 220, 220},
    {"orange", 240, 140, 30}, {"purple", 140, 50, 200},
};

constexpr NamedColor kBackgrounds[kNumBackgrounds] = {
    {"white", 245, 245, 245},
    {"black", 20, 20, 20},
    {"gray", 128, 128, 128},
    {"tan", 205, 180, 140},
};

constexpr const char* kShapeNames[kNumShapes] = {"circle", "square",
                                                 "triangle"};

uint64_t splitmix64_once(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

void color_to_unit(const NamedColor& c, float out[3]) {
    out[0] = byte_to_pixel(c.r);
    out[1] = byte_to_pixel(c.g);
    out[2] = byte_to_pixel(c.b);
}

}  // namespace

const char* fill_name(int fill) { return kFills[fill].name; }
const char* shape_name(int shape) { return kShapeNames[shape]; }

int fill_by_name(const std::string& name) {
    for (int i = 0; i < kNumFills; ++i)
        if (name == kFills[i].name) return i;
    return -1;
}

int shape_by_name(const std::string& name) {
    for (int i = 0; i < kNumShapes; ++i)
        if (name == kShapeNames[i]) return i;
    return -1;
}

void fill_rgb(int fill, float out[3]) { color_to_unit(kFills[fill], out); }
void background_rgb(int bg, float out[3]) {
    color_to_unit(kBackgrounds[bg], out);
}

Caption caption_of(const ShapeSpec& spec) {
    return Caption{spec.fill_color, static_cast<int>(spec.kind)};
}

Caption caption_from_class(int class_id) {
    return Caption{class_id / kNumShapes, class_id % kNumShapes};
}

namespace {

bool inside(const ShapeSpec& s, float px, float py) {
    const float h = s.size_fraction / 2;
    const float dx = px - s.cx, dy = py - s.cy;
    switch (s.kind) {
        case ShapeKind::circle:
            return dx * dx + dy * dy <= h * h;
        case ShapeKind::square:
            return std::abs(dx) <= h && std::abs(dy) <= h;
        case ShapeKind::triangle: {
            // Upward triangle with apex (cx, cy-h) and base y = cy+h.
            if (dy < -h || dy > h) return false;
            const float half_width = (dy + h) / 2;
            return std::abs(dx) <= half_width;
        }
    }
    return false;
}

}  // namespace

Image render_shape(const ShapeSpec& spec, int resolution) {
    float fill[3], bg[3];
    fill_rgb(spec.fill_color, fill);
    background_rgb(spec.background_color, bg);
    Image img;
    img.width = img.height = resolution;
    img.rgb.resize(static_cast<size_t>(3) * resolution * resolution);
    constexpr int kSS = 4;  // 4x4 subsamples per pixel
    const float inv = 1.0f / resolution;
    for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSS; ++sy)
                for (int sx = 0; sx < kSS; ++sx) {
                    const float px = (x + (sx + 0.5f) / kSS) * inv;
                    const float py = (y + (sy + 0.5f) / kSS) * inv;
                    hits += inside(spec, px, py);
                }
            const float a = static_cast<float>(hits) / (kSS * kSS);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = bg[c] + a * (fill[c] - bg[c]);
        }
    return img;
}

ShapeSpec sample_shape_spec(RngStream& rng) {
    ShapeSpec s;
    s.kind = static_cast<ShapeKind>(rng.uniform_int(kNumShapes));
    s.fill_color = rng.uniform_int(kNumFills);
    s.background_color = rng.uniform_int(kNumBackgrounds);
    s.size_fraction = static_cast<float>(rng.uniform(0.4, 0.8));
    // Keep the shape fully inside the canvas: the admissible center range is
    // the intersection of [0.25, 0.75] with [half, 1-half].
    const float half = s.size_fraction / 2;
    const float lo = std::max(0.25f, half);
    const float hi = std::min(0.75f, 1.0f - half);
    s.cx = static_cast<float>(rng.uniform(lo, hi));
    s.cy = static_cast<float>(rng.uniform(lo, hi));
    return s;
}

bool is_test_sample(int64_t sample_id) {
    return splitmix64_once(static_cast<uint64_t>(sample_id)) % 5 == 4;
}

std::vector<size_t> DatasetManifest::split_indices(bool test) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].test_split == test) out.push_back(i);
    return out;
}

int DatasetManifest::level_of(int resolution) const {
    for (size_t i = 0; i < resolutions.size(); ++i)
        if (resolutions[i] == resolution) return static_cast<int>(i);
    throw DataError("dataset has no resolution " + std::to_string(resolution));
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "sample_id,split,caption_color,caption_shape";
    for (int r : resolutions) f << ",path_" << r;
    f << "\n";
    for (const auto& rec : records) {
        f << rec.sample_id << "," << (rec.test_split ? "test" : "train") << ",";
        if (rec.caption.defined())
            f << fill_name(rec.caption.fill) << ","
              << shape_name(rec.caption.shape);
        else
            f << ",";
        for (const auto& p : rec.paths) f << "," << p;
        f << "\n";
    }
    if (!f) throw IoError("short write to " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    DatasetManifest m;
    m.dir = fs::path(path).parent_path().string();
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty manifest");
    const auto header = split_csv(line);
    if (header.size() < 5 || header[0] != "sample_id")
        throw IoError(path + ": unrecognized manifest header");
    for (size_t i = 4; i < header.size(); ++i) {
        if (header[i].rfind("path_", 0) != 0)
            throw IoError(path + ": bad manifest column " + header[i]);
        m.resolutions.push_back(std::stoi(header[i].substr(5)));
    }
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cols = split_csv(line);
        if (cols.size() != header.size())
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": wrong column count");
        ManifestRecord rec;
        rec.sample_id = std::stoll(cols[0]);
        rec.test_split = cols[1] == "test";
        if (!cols[2].empty() || !cols[3].empty()) {
            rec.caption.fill = fill_by_name(cols[2]);
            rec.caption.shape = shape_by_name(cols[3]);
            if (!rec.caption.defined())
                throw DataError(path + ":" + std::to_string(lineno) +
                                ": unknown attributes '" + cols[2] + "," +
                                cols[3] + "'");
        }
        for (size_t i = 4; i < cols.size(); ++i) rec.paths.push_back(cols[i]);
        m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw IoError(path + ": manifest lists no samples");
    return m;
}

DatasetManifest generate_dataset(int n, uint64_t seed,
                                 const std::vector<int>& resolutions,
                                 const std::string& out_dir,
                                 bool attribute_disjoint) {
    if (n < 1) throw DataError("generate_dataset: n must be >= 1");
    if (resolutions.empty())
        throw DataError("generate_dataset: no resolutions configured");
    fs::create_directories(fs::path(out_dir) / "images");
    DatasetManifest m;
    m.dir = out_dir;
    m.resolutions = resolutions;
    RngStream rng(seed, 701);
    const int heldout_class =
        attribute_disjoint
            ? static_cast<int>(splitmix64_once(seed) % kNumClasses)
            : -1;
    for (int i = 0; i < n; ++i) {
        const ShapeSpec spec = sample_shape_spec(rng);
        ManifestRecord rec;
        rec.sample_id = i;
        rec.caption = caption_of(spec);
        rec.test_split = rec.caption.class_id() == heldout_class
                             ? true
                             : is_test_sample(i);
        char name[64];
        for (int r : resolutions) {
            std::snprintf(name, sizeof name, "images/%06d_%d.ppm", i, r);
            write_ppm((fs::path(out_dir) / name).string(),
                      render_shape(spec, r));
            rec.paths.emplace_back(name);
        }
        m.records.push_back(std::move(rec));
    }
    m.save((fs::path(out_dir) / "manifest.csv").string());
    return m;
}

DatasetManifest ingest_folder(const std::string& dir,
                              const std::string& manifest_csv,
                              const std::vector<int>& resolutions,
                              const std::string& out_dir) {
    std::ifstream f(manifest_csv);
    if (!f) throw IoError("cannot read " + manifest_csv);
    fs::create_directories(fs::path(out_dir) / "images");
    DatasetManifest m;
    m.dir = out_dir;
    m.resolutions = resolutions;
    std::string line;
    int lineno = 0;
    int64_t id = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_csv(line);
        if (cols[0].empty() || (cols.size() != 1 && cols.size() != 3))
            throw DataError(manifest_csv + ":" + std::to_string(lineno) +
                            ": expected relative_path[,color,shape]");
        ManifestRecord rec;
        rec.sample_id = id;
        rec.test_split = is_test_sample(id);
        if (cols.size() == 3 && (!cols[1].empty() || !cols[2].empty())) {
            rec.caption.fill = fill_by_name(cols[1]);
            rec.caption.shape = shape_by_name(cols[2]);
            if (!rec.caption.defined())
                throw DataError(manifest_csv + ":" + std::to_string(lineno) +
                                ": unknown attributes '" + cols[1] + "," +
                                cols[2] + "'");
        }
        Image img;
        try {
            img = read_image((fs::path(dir) / cols[0]).string());
        } catch (const IoError& e) {
            throw IoError(manifest_csv + ":" + std::to_string(lineno) + ": " +
                          e.what());
        }
        img = center_crop_square(img);
        char name[64];
        for (int r : resolutions) {
            std::snprintf(name, sizeof name, "images/%06lld_%d.ppm",
                          static_cast<long long>(id), r);
            write_ppm((fs::path(out_dir) / name).string(),
                      box_resize(img, r, r));
            rec.paths.emplace_back(name);
        }
        m.records.push_back(std::move(rec));
        ++id;
    }
    if (m.records.empty())
        throw IoError(manifest_csv + ": manifest lists no samples");
    m.save((fs::path(out_dir) / "manifest.csv").string());
    return m;
}

DatasetCache::DatasetCache(const DatasetManifest& manifest)
    : manifest_(manifest) {
    const size_t levels = manifest_.resolutions.size();
    images_.resize(levels);
    for (size_t lv = 0; lv < levels; ++lv) {
        const int r = manifest_.resolutions[lv];
        const size_t plane = static_cast<size_t>(3) * r * r;
        images_[lv].resize(plane * manifest_.records.size());
        for (size_t i = 0; i < manifest_.records.size(); ++i) {
            const Image img = read_image(
                (fs::path(manifest_.dir) / manifest_.records[i].paths[lv])
                    .string());
            if (img.width != r || img.height != r)
                throw DataError("dataset image " +
                                manifest_.records[i].paths[lv] +
                                " is not " + std::to_string(r) + "x" +
                                std::to_string(r));
            std::copy(img.rgb.begin(), img.rgb.end(),
                      images_[lv].begin() + static_cast<int64_t>(plane * i));
        }
    }
    train_idx_ = manifest_.split_indices(false);
    test_idx_ = manifest_.split_indices(true);
    for (const auto& rec : manifest_.records)
        conditional_ = conditional_ && rec.caption.defined();
}

Tensor DatasetCache::gather(int level, const std::vector<size_t>& rows) const {
    const int r = manifest_.resolutions[static_cast<size_t>(level)];
    const size_t plane = static_cast<size_t>(3) * r * r;
    Tensor out = Tensor::zeros({static_cast<int>(rows.size()), 3, r, r});
    for (size_t i = 0; i < rows.size(); ++i) {
        const float* src = images_[static_cast<size_t>(level)].data() +
                           plane * rows[i];
        real_t* dst = out.mutable_data() + static_cast<int64_t>(plane * i);
        for (size_t j = 0; j < plane; ++j)
            dst[j] = static_cast<real_t>(src[j]);
    }
    return out;
}

DatasetCache::Batch DatasetCache::sample_batch(int batch_size, RngStream& rng,
                                               bool test_split) const {
    const auto& pool = test_split ? test_idx_ : train_idx_;
    if (batch_size < 1 ||
        static_cast<size_t>(batch_size) > pool.size())
        throw DataError("sample_batch: batch size " +
                        std::to_string(batch_size) + " exceeds split size " +
                        std::to_string(pool.size()));
    // Partial Fisher-Yates gives a uniform sample without replacement.
    std::vector<size_t> deck = pool;
    Batch batch;
    std::vector<size_t> rows;
    for (int i = 0; i < batch_size; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(deck.size()) - i);
        std::swap(deck[static_cast<size_t>(i)], deck[static_cast<size_t>(j)]);
        rows.push_back(deck[static_cast<size_t>(i)]);
    }
    for (size_t row : rows) {
        batch.sample_ids.push_back(manifest_.records[row].sample_id);
        batch.captions.push_back(manifest_.records[row].caption);
    }
    if (conditional_) {
        for (int i = 0; i < batch_size; ++i) {
            const Caption own = batch.captions[static_cast<size_t>(i)];
            Caption other;
            bool found = false;
            for (int tries = 0; tries < 64 && !found; ++tries) {
                const size_t row =
                    pool[static_cast<size_t>(rng.uniform_int(
                        static_cast<int>(pool.size())))];
                other = manifest_.records[row].caption;
                found = !(other == own);
            }
            if (!found) {
                for (size_t row : pool)
                    if (!(manifest_.records[row].caption == own)) {
                        other = manifest_.records[row].caption;
                        found = true;
                        break;
                    }
            }
            if (!found)
                throw DataError(
                    "sample_batch: dataset has a single caption; mismatched "
                    "pairs are impossible");
            batch.mismatched.push_back(other);
        }
    }
    for (size_t lv = 0; lv < manifest_.resolutions.size(); ++lv)
        batch.pyramid.push_back(gather(static_cast<int>(lv), rows));
    return batch;
}

Tensor DatasetCache::split_images(int level, bool test_split) const {
    return gather(level, test_split ? test_idx_ : train_idx_);
}

std::vector<Caption> DatasetCache::split_captions(bool test_split) const {
    const auto& pool = test_split ? test_idx_ : train_idx_;
    std::vector<Caption> out;
    for (size_t row : pool) out.push_back(manifest_.records[row].caption);
    return out;
}

}  // namespace ganlab::data
