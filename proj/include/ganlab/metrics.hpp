#pragma once

#include <functional>

#include "ganlab/blocks.hpp"
#include "ganlab/data.hpp"

namespace ganlab::metrics {

// Every metric here computes in double, independent of the model precision.

struct IsResult {
    double mean = 0, stddev = 0;
};

// probs: n rows of k class probabilities, row-major; each row must sum to 1
// within 1e-4. Scored per split as exp(mean KL(row || split marginal)); the
// last split absorbs the remainder.
IsResult inception_score(const std::vector<double>& probs, int n, int k,
                         int splits);

struct GaussianStats {
    std::vector<double> mean;  // dim
    std::vector<double> cov;   // dim*dim, population divisor N
    int dim = 0;
    int64_t count = 0;
};

GaussianStats gaussian_stats(const std::vector<double>& features, int n,
                             int dim);

// ||m_a - m_b||^2 + Tr(C_a + C_b - 2 (C_a C_b)^(1/2)), with the matrix root
// taken through the symmetric product C^(1/2) C_b C^(1/2); negative
// eigenvalues are clamped to zero before rooting.
double fid(const GaussianStats& a, const GaussianStats& b);

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n*n).
// eigvecs columns hold the eigenvectors.
void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigvecs,
                  std::vector<double>& eigvals);

// Multiscale structural similarity on the channel-mean grayscale, uniform
// 8x8 window, 2x box downsampling between scales, luminance at the coarsest
// scale only. Scale count: max(1, floor(log2(min_dim)) - 2).
double ms_ssim(const Image& a, const Image& b);

// Mean MS-SSIM over uniformly sampled unordered pairs; lower = more diverse.
double pairwise_diversity(const std::vector<Image>& samples, RngStream& rng,
                          int pair_count);

struct Neighbor {
    int index;
    double distance;
};
// Candidates sorted by ascending L2 feature distance; ties break by index.
std::vector<Neighbor> nearest_neighbors(
    const std::vector<double>& query_features,
    const std::vector<std::vector<double>>& candidate_features, int k);

using FeatureFn = std::function<std::vector<double>(const Image&)>;
std::vector<Neighbor> nearest_neighbors(const Image& query,
                                        const std::vector<Image>& candidates,
                                        const FeatureFn& fn, int k);

struct ClassifierConfig {
    int input_res = 64;
    int base = 16;
    int feature_dim = 64;
    int classes = data::kNumClasses;
    int epochs = 16;
    int batch = 32;
    real_t lr = static_cast<real_t>(1e-3);
    uint64_t seed = 7;
    double accuracy_gate = 0.95;
};

// Small convolutional attribute classifier; the feature layer is the
// penultimate activation vector.
class FeatureExtractor {
public:
    FeatureExtractor(const ClassifierConfig& cfg, uint64_t seed);

    Tensor logits(const Tensor& images, bool training) const;
    // (B, feature_dim) penultimate activations, inference mode.
    Tensor features(const Tensor& images) const;
    // (B*classes) softmax rows; each sums to 1 within 1e-6.
    std::vector<double> probabilities(const Tensor& images) const;
    std::vector<int> predict(const Tensor& images) const;

    const ClassifierConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }

private:
    ClassifierConfig cfg_;
    ParamStore store_;
    std::vector<std::unique_ptr<Block>> downs_;
    Linear feat_fc_, out_fc_;
};

struct TrainedClassifier {
    std::unique_ptr<FeatureExtractor> net;
    double holdout_accuracy = 0;
};

// Trains on the train split with one-vs-all logistic losses and gates on
// held-out accuracy; failing the gate is an error that names the remedy.
TrainedClassifier train_feature_classifier(const data::DatasetCache& data,
                                           const ClassifierConfig& cfg);

// Convenience bridges between the data-layer images and model tensors.
Tensor images_to_tensor(const std::vector<Image>& images);
std::vector<Image> tensor_to_images(const Tensor& batch);

}  // namespace ganlab::metrics
