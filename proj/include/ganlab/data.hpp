#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ganlab/image_io.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab::data {

enum class ShapeKind { circle = 0, square = 1, triangle = 2 };

inline constexpr int kNumFills = 8;
inline constexpr int kNumBackgrounds = 4;
inline constexpr int kNumShapes = 3;
inline constexpr int kNumClasses = kNumFills * kNumShapes;  // 24
// Attribute vocabulary: fill colors first, then shape kinds.
inline constexpr int kVocabSize = kNumFills + kNumShapes;

const char* fill_name(int fill);
const char* shape_name(int shape);
// Lookups by name; -1 when unknown.
int fill_by_name(const std::string& name);
int shape_by_name(const std::string& name);
// RGB in [-1, 1].
void fill_rgb(int fill, float out[3]);
void background_rgb(int bg, float out[3]);

struct ShapeSpec {
    ShapeKind kind;
    int fill_color;        // [0, kNumFills)
    int background_color;  // [0, kNumBackgrounds)
    float size_fraction;   // [0.4, 0.8] of the canvas
    float cx, cy;          // normalized center
};

struct Caption {
    int fill = -1;
    int shape = -1;
    bool defined() const { return fill >= 0 && shape >= 0; }
    bool operator==(const Caption&) const = default;
    // Joint conditioning class in [0, kNumClasses).
    int class_id() const { return fill * kNumShapes + shape; }
    // Attribute ids in the embedding vocabulary.
    std::vector<int> vocab_ids() const { return {fill, kNumFills + shape}; }
};

Caption caption_of(const ShapeSpec& spec);
Caption caption_from_class(int class_id);

// Deterministic rasterization with 4x supersampling; pixels in [-1, 1].
Image render_shape(const ShapeSpec& spec, int resolution);

ShapeSpec sample_shape_spec(RngStream& rng);

// Stable 80/20 split by hash of the sample id alone, so assignment never
// changes across runs or machines.
bool is_test_sample(int64_t sample_id);

struct ManifestRecord {
    int64_t sample_id = 0;
    bool test_split = false;
    Caption caption;  // undefined for unconditional ingests
    std::vector<std::string> paths;  // one per resolution, in order
};

struct DatasetManifest {
    std::string dir;
    std::vector<int> resolutions;
    std::vector<ManifestRecord> records;

    std::vector<size_t> split_indices(bool test) const;
    int level_of(int resolution) const;  // index into resolutions, or throws
    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
};

DatasetManifest generate_dataset(int n, uint64_t seed,
                                 const std::vector<int>& resolutions,
                                 const std::string& out_dir,
                                 bool attribute_disjoint = false);

// Reads relative_path[,color,shape] rows, decodes PPM/PNG, center-crops to
// square, box-downsamples to each resolution and writes a dataset with the
// same layout and split discipline as generate_dataset.
DatasetManifest ingest_folder(const std::string& dir,
                              const std::string& manifest_csv,
                              const std::vector<int>& resolutions,
                              const std::string& out_dir);

// In-memory pyramid with deterministic batch assembly.
class DatasetCache {
public:
    explicit DatasetCache(const DatasetManifest& manifest);

    struct Batch {
        std::vector<Tensor> pyramid;  // per level: (B,3,r,r)
        std::vector<Caption> captions;
        std::vector<Caption> mismatched;
        std::vector<int64_t> sample_ids;
    };

    // Uniform without replacement within the batch; every mismatched caption
    // differs from its sample's caption.
    Batch sample_batch(int batch_size, RngStream& rng, bool test_split = false) const;

    // All images of one split at one level, in record order.
    Tensor split_images(int level, bool test_split) const;
    std::vector<Caption> split_captions(bool test_split) const;

    const DatasetManifest& manifest() const { return manifest_; }
    bool conditional() const { return conditional_; }
    size_t train_size() const { return train_idx_.size(); }
    size_t test_size() const { return test_idx_.size(); }

private:
    Tensor gather(int level, const std::vector<size_t>& rows) const;

    DatasetManifest manifest_;
    std::vector<std::vector<float>> images_;  // [level][record*3*r*r]
    std::vector<size_t> train_idx_, test_idx_;
    bool conditional_ = true;
};

}  // namespace ganlab::data
