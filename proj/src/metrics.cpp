#include "ganlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "ganlab/gan_losses.hpp"
#include "ganlab/tape.hpp"

namespace ganlab::metrics {

IsResult inception_score(const std::vector<double>& probs, int n, int k,
                         int splits) {
    if (n < 1 || k < 1 || static_cast<int64_t>(n) * k !=
                              static_cast<int64_t>(probs.size()))
        throw ShapeError("inception_score: probs is not n*k");
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < k; ++j) s += probs[static_cast<size_t>(i) * k + j];
        if (std::abs(s - 1.0) > 1e-4)
            throw NumericError("inception_score: row " + std::to_string(i) +
                               " sums to " + std::to_string(s) +
                               ", not a probability vector");
    }
    splits = std::max(1, std::min(splits, n));
    const int base = n / splits;
    std::vector<double> scores;
    for (int s = 0; s < splits; ++s) {
        const int lo = s * base;
        const int hi = s == splits - 1 ? n : lo + base;
        const int m = hi - lo;
        std::vector<double> marginal(static_cast<size_t>(k), 0.0);
        for (int i = lo; i < hi; ++i)
            for (int j = 0; j < k; ++j)
                marginal[static_cast<size_t>(j)] +=
                    probs[static_cast<size_t>(i) * k + j] / m;
        double mean_kl = 0;
        for (int i = lo; i < hi; ++i) {
            double kl = 0;
            for (int j = 0; j < k; ++j) {
                const double p = probs[static_cast<size_t>(i) * k + j];
                if (p > 0) kl += p * std::log(p / marginal[static_cast<size_t>(j)]);
            }
            mean_kl += kl / m;
        }
        scores.push_back(std::exp(mean_kl));
    }
    IsResult r;
    for (double s : scores) r.mean += s / static_cast<double>(scores.size());
    double var = 0;
    for (double s : scores) var += (s - r.mean) * (s - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(scores.size()));
    return r;
}

GaussianStats gaussian_stats(const std::vector<double>& features, int n,
                             int dim) {
    if (n < 1 || static_cast<int64_t>(n) * dim !=
                     static_cast<int64_t>(features.size()))
        throw ShapeError("gaussian_stats: features is not n*dim");
    GaussianStats g;
    g.dim = dim;
    g.count = n;
    g.mean.assign(static_cast<size_t>(dim), 0.0);
    g.cov.assign(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j)
            g.mean[static_cast<size_t>(j)] +=
                features[static_cast<size_t>(i) * dim + j] / n;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) {
            const double da =
                features[static_cast<size_t>(i) * dim + a] - g.mean[a];
            for (int b = a; b < dim; ++b) {
                const double db =
                    features[static_cast<size_t>(i) * dim + b] - g.mean[b];
                g.cov[static_cast<size_t>(a) * dim + b] += da * db / n;
            }
        }
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < a; ++b)
            g.cov[static_cast<size_t>(a) * dim + b] =
                g.cov[static_cast<size_t>(b) * dim + a];
    return g;
}

void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigvecs,
                  std::vector<double>& eigvals) {
    eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;
    auto off = [&] {
        double s = 0;
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q)
                if (p != q) s += a[static_cast<size_t>(p) * n + q] *
                                 a[static_cast<size_t>(p) * n + q];
        return std::sqrt(s);
    };
    double fro = 0;
    for (double v : a) fro += v * v;
    const double tol = 1e-10 * std::max(1.0, std::sqrt(fro));
    for (int sweep = 0; sweep < 100 && off() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p) * n + q];
                if (apq == 0) continue;
                const double app = a[static_cast<size_t>(p) * n + p];
                const double aqq = a[static_cast<size_t>(q) * n + q];
                const double theta = (aqq - app) / (2 * apq);
                const double t =
                    (theta >= 0 ? 1.0 : -1.0) /
                    (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1.0 / std::sqrt(t * t + 1);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a[static_cast<size_t>(i) * n + p];
                    const double aiq = a[static_cast<size_t>(i) * n + q];
                    a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a[static_cast<size_t>(p) * n + i];
                    const double aqi = a[static_cast<size_t>(q) * n + i];
                    a[static_cast<size_t>(p) * n + i] = c * api - s * aqi;
                    a[static_cast<size_t>(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = eigvecs[static_cast<size_t>(i) * n + p];
                    const double viq = eigvecs[static_cast<size_t>(i) * n + q];
                    eigvecs[static_cast<size_t>(i) * n + p] =
                        c * vip - s * viq;
                    eigvecs[static_cast<size_t>(i) * n + q] =
                        s * vip + c * viq;
                }
            }
    }
    eigvals.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        eigvals[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n + i];
}

namespace {

// B = V diag(f(lambda)) V^T for symmetric input, eigenvalues clamped at 0.
std::vector<double> sym_apply_sqrt(const std::vector<double>& m, int n) {
    std::vector<double> vecs, vals;
    jacobi_eigen(m, n, vecs, vals);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double f = vals[static_cast<size_t>(k)] > 0
                             ? std::sqrt(vals[static_cast<size_t>(k)])
                             : 0.0;
        if (f == 0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] +=
                    f * vecs[static_cast<size_t>(i) * n + k] *
                    vecs[static_cast<size_t>(j) * n + k];
    }
    return out;
}

std::vector<double> matmul_d(const std::vector<double>& a,
                             const std::vector<double>& b, int n) {
    std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double av = a[static_cast<size_t>(i) * n + k];
            if (av == 0) continue;
            for (int j = 0; j < n; ++j)
                c[static_cast<size_t>(i) * n + j] +=
                    av * b[static_cast<size_t>(k) * n + j];
        }
    return c;
}

}  // namespace

double fid(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim)
        throw ShapeError("fid: dimension mismatch " + std::to_string(a.dim) +
                         " vs " + std::to_string(b.dim));
    const int n = a.dim;
    if (a.count < n + 1 || b.count < n + 1)
        std::cerr << "warning: fid estimated from fewer samples ("
                  << a.count << ", " << b.count << ") than dim+1 = " << n + 1
                  << "\n";
    double mean_term = 0;
    for (int i = 0; i < n; ++i) {
        const double d = a.mean[static_cast<size_t>(i)] -
                         b.mean[static_cast<size_t>(i)];
        mean_term += d * d;
    }
    // Symmetric-PSD route: sqrt(C_a), then eigenvalues of S C_b S.
    const auto s = sym_apply_sqrt(a.cov, n);
    const auto m = matmul_d(matmul_d(s, b.cov, n), s, n);
    std::vector<double> vecs, vals;
    jacobi_eigen(m, n, vecs, vals);
    double tr_sqrt = 0;
    for (double v : vals)
        if (v > 0) tr_sqrt += std::sqrt(v);
    double tr = 0;
    for (int i = 0; i < n; ++i)
        tr += a.cov[static_cast<size_t>(i) * n + i] +
              b.cov[static_cast<size_t>(i) * n + i];
    return mean_term + tr - 2 * tr_sqrt;
}

namespace {

std::vector<double> to_gray(const Image& img) {
    std::vector<double> g(static_cast<size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            g[static_cast<size_t>(y) * img.width + x] =
                (img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x)) / 3.0;
    return g;
}

std::vector<double> box_half(const std::vector<double>& g, int& w, int& h) {
    const int ow = w / 2, oh = h / 2;
    std::vector<double> out(static_cast<size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[static_cast<size_t>(y) * ow + x] =
                (g[static_cast<size_t>(2 * y) * w + 2 * x] +
                 g[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                 g[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                 g[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1]) /
                4.0;
    w = ow;
    h = oh;
    return out;
}

struct SsimScale {
    double luminance = 0, contrast_structure = 0;
};

// Uniform 8x8 window, population moments, constants for dynamic range 2.
SsimScale ssim_scale(const std::vector<double>& a,
                     const std::vector<double>& b, int w, int h) {
    constexpr int kWin = 8;
    constexpr double kC1 = (0.01 * 2.0) * (0.01 * 2.0);
    constexpr double kC2 = (0.03 * 2.0) * (0.03 * 2.0);
    if (w < kWin || h < kWin)
        throw ShapeError("ms_ssim: image smaller than the 8x8 window");
    double lum = 0, cs = 0;
    int count = 0;
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = 0; dy < kWin; ++dy)
                for (int dx = 0; dx < kWin; ++dx) {
                    const double va =
                        a[static_cast<size_t>(y + dy) * w + x + dx];
                    const double vb =
                        b[static_cast<size_t>(y + dy) * w + x + dx];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            constexpr double kN = kWin * kWin;
            const double ma = sa / kN, mb = sb / kN;
            const double va = saa / kN - ma * ma;
            const double vb = sbb / kN - mb * mb;
            const double vab = sab / kN - ma * mb;
            lum += (2 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
            cs += (2 * vab + kC2) / (va + vb + kC2);
            ++count;
        }
    return {lum / count, cs / count};
}

}  // namespace

double ms_ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("ms_ssim: image shapes differ");
    const int min_dim = std::min(a.width, a.height);
    int scales = static_cast<int>(std::floor(std::log2(min_dim))) - 2;
    scales = std::max(1, scales);
    static constexpr double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363,
                                           0.1333};
    scales = std::min(scales, 5);
    double wsum = 0;
    for (int i = 0; i < scales; ++i) wsum += kWeights[i];

    std::vector<double> ga = to_gray(a), gb = to_gray(b);
    int w = a.width, h = a.height;
    double result = 1.0;
    for (int s = 0; s < scales; ++s) {
        const SsimScale sc = ssim_scale(ga, gb, w, h);
        const double weight = kWeights[s] / wsum;
        if (s + 1 < scales) {
            result *= std::pow(std::max(sc.contrast_structure, 1e-12),
                               weight);
            int wa = w, ha = h, wb = w, hb = h;
            ga = box_half(ga, wa, ha);
            gb = box_half(gb, wb, hb);
            w = wa;
            h = ha;
        } else {
            result *= std::pow(
                std::max(sc.luminance * sc.contrast_structure, 1e-12),
                weight);
        }
    }
    return result;
}

double pairwise_diversity(const std::vector<Image>& samples, RngStream& rng,
                          int pair_count) {
    if (samples.size() < 2)
        throw DataError("pairwise_diversity: need at least two samples");
    double acc = 0;
    for (int p = 0; p < pair_count; ++p) {
        const int i = rng.uniform_int(static_cast<int>(samples.size()));
        int j = rng.uniform_int(static_cast<int>(samples.size()) - 1);
        if (j >= i) ++j;
        acc += ms_ssim(samples[static_cast<size_t>(i)],
                       samples[static_cast<size_t>(j)]);
    }
    return acc / pair_count;
}

std::vector<Neighbor> nearest_neighbors(
    const std::vector<double>& query_features,
    const std::vector<std::vector<double>>& candidate_features, int k) {
    if (candidate_features.empty())
        throw DataError("nearest_neighbors: empty candidate set");
    std::vector<Neighbor> all;
    for (size_t i = 0; i < candidate_features.size(); ++i) {
        const auto& c = candidate_features[i];
        if (c.size() != query_features.size())
            throw ShapeError("nearest_neighbors: feature length mismatch");
        double d2 = 0;
        for (size_t j = 0; j < c.size(); ++j) {
            const double d = c[j] - query_features[j];
            d2 += d * d;
        }
        all.push_back({static_cast<int>(i), std::sqrt(d2)});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance
                                        : a.index < b.index;
    });
    if (k < static_cast<int>(all.size()))
        all.resize(static_cast<size_t>(std::max(k, 0)));
    return all;
}

std::vector<Neighbor> nearest_neighbors(const Image& query,
                                        const std::vector<Image>& candidates,
                                        const FeatureFn& fn, int k) {
    std::vector<std::vector<double>> feats;
    feats.reserve(candidates.size());
    for (const auto& c : candidates) feats.push_back(fn(c));
    return nearest_neighbors(fn(query), feats, k);
}

FeatureExtractor::FeatureExtractor(const ClassifierConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
    RngStream rng(seed, 51);
    int res = cfg.input_res, ch = 3, i = 0;
    while (res > 4) {
        const int out = cfg.base << i;
        downs_.push_back(Block::build(
            store_, "clsf.down" + std::to_string(i),
            {BlockKind::downsample, ch, out, i != 0, Activation::leaky_relu},
            rng));
        ch = out;
        res /= 2;
        ++i;
    }
    feat_fc_ = Linear(store_, "clsf.feature", ch * res * res,
                      cfg.feature_dim, true, rng);
    out_fc_ = Linear(store_, "clsf.out", cfg.feature_dim, cfg.classes, true,
                     rng);
}

Tensor FeatureExtractor::logits(const Tensor& images, bool training) const {
    if (images.rank() != 4 || images.dim(1) != 3 ||
        images.dim(2) != cfg_.input_res || images.dim(3) != cfg_.input_res)
        throw ShapeError("classifier expects (B,3," +
                         std::to_string(cfg_.input_res) + "," +
                         std::to_string(cfg_.input_res) + "), got " +
                         shape_str(images.shape()));
    Tensor h = images;
    for (const auto& b : downs_) h = b->forward(h, training);
    h = leaky_relu(feat_fc_.forward(flatten_batch(h)));
    return out_fc_.forward(h);
}

Tensor FeatureExtractor::features(const Tensor& images) const {
    Tensor h = images;
    for (const auto& b : downs_) h = b->forward(h, false);
    return leaky_relu(feat_fc_.forward(flatten_batch(h)));
}

std::vector<double> FeatureExtractor::probabilities(
    const Tensor& images) const {
    const Tensor lg = logits(images, false);
    const int b = lg.dim(0), k = lg.dim(1);
    std::vector<double> probs(static_cast<size_t>(b) * k);
    for (int i = 0; i < b; ++i) {
        double mx = lg.data()[static_cast<int64_t>(i) * k];
        for (int j = 1; j < k; ++j)
            mx = std::max(mx,
                          double(lg.data()[static_cast<int64_t>(i) * k + j]));
        double z = 0;
        for (int j = 0; j < k; ++j) {
            const double e =
                std::exp(double(lg.data()[static_cast<int64_t>(i) * k + j]) -
                         mx);
            probs[static_cast<size_t>(i) * k + j] = e;
            z += e;
        }
        for (int j = 0; j < k; ++j) probs[static_cast<size_t>(i) * k + j] /= z;
    }
    return probs;
}

std::vector<int> FeatureExtractor::predict(const Tensor& images) const {
    const Tensor lg = logits(images, false);
    const int b = lg.dim(0), k = lg.dim(1);
    std::vector<int> out(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (lg.data()[static_cast<int64_t>(i) * k + j] >
                lg.data()[static_cast<int64_t>(i) * k + best])
                best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

namespace {

double accuracy_on(const FeatureExtractor& net, const Tensor& images,
                   const std::vector<data::Caption>& caps, int batch) {
    const int n = images.dim(0);
    int hits = 0;
    for (int lo = 0; lo < n; lo += batch) {
        const int hi = std::min(n, lo + batch);
        Tensor chunk = Tensor::zeros({hi - lo, images.dim(1), images.dim(2),
                                      images.dim(3)});
        const int64_t plane = images.size() / n;
        std::copy(images.data() + lo * plane, images.data() + hi * plane,
                  chunk.mutable_data());
        const auto pred = net.predict(chunk);
        for (int i = lo; i < hi; ++i)
            hits += pred[static_cast<size_t>(i - lo)] ==
                    caps[static_cast<size_t>(i)].class_id();
    }
    return static_cast<double>(hits) / n;
}

}  // namespace

TrainedClassifier train_feature_classifier(const data::DatasetCache& data,
                                           const ClassifierConfig& cfg) {
    if (!data.conditional())
        throw ConfigError("classifier training needs a captioned dataset");
    const int level = data.manifest().level_of(cfg.input_res);
    auto net = std::make_unique<FeatureExtractor>(cfg, cfg.seed);
    auto params = net->store().parameters();
    AdamConfig adam;
    adam.lr = cfg.lr;
    adam.beta1 = static_cast<real_t>(0.9);
    RngStream rng(cfg.seed, 52);
    const int steps_per_epoch =
        std::max<size_t>(1, data.train_size() / cfg.batch);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int it = 0; it < steps_per_epoch; ++it) {
            auto batch = data.sample_batch(cfg.batch, rng);
            Tensor pos = Tensor::zeros({cfg.batch, cfg.classes});
            for (int i = 0; i < cfg.batch; ++i)
                pos.mutable_data()[static_cast<int64_t>(i) * cfg.classes +
                                   batch.captions[static_cast<size_t>(i)]
                                       .class_id()] = 1;
            Tensor ones_col = Tensor::full({cfg.classes, 1}, 1);
            Tape tape;
            TapeScope scope(tape);
            Tensor lg = net->logits(
                batch.pyramid[static_cast<size_t>(level)], true);
            // Softmax cross-entropy: mean_b [lse(x_b) - x_b[y_b]]. The row
            // max enters as a constant shift; the gradient is exact either
            // way since lse is shift-covariant.
            Tensor rmax = Tensor::zeros({cfg.batch, 1});
            for (int i = 0; i < cfg.batch; ++i) {
                real_t m = lg.data()[static_cast<int64_t>(i) * cfg.classes];
                for (int j = 1; j < cfg.classes; ++j)
                    m = std::max(
                        m,
                        lg.data()[static_cast<int64_t>(i) * cfg.classes + j]);
                rmax.mutable_data()[i] = m;
            }
            Tensor centered =
                sub(lg, matmul(rmax, Tensor::full({1, cfg.classes}, 1)));
            Tensor lse = add(log_op(matmul(exp_op(centered), ones_col)),
                             rmax);
            Tensor loss = scale(sub(sum_all(lse), sum_all(mul(pos, lg))),
                                real_t(1) / cfg.batch);
            tape.backward(loss, params);
            adam_step(params, adam);
        }
    }
    TrainedClassifier out;
    out.holdout_accuracy =
        accuracy_on(*net, data.split_images(level, true),
                    data.split_captions(true), cfg.batch);
    out.net = std::move(net);
    if (out.holdout_accuracy < cfg.accuracy_gate)
        throw Error("classifier held-out accuracy " +
                    std::to_string(out.holdout_accuracy) + " is below the " +
                    std::to_string(cfg.accuracy_gate) +
                    " gate; increase clsf.epochs or the dataset size");
    return out;
}

Tensor images_to_tensor(const std::vector<Image>& images) {
    if (images.empty()) throw DataError("images_to_tensor: empty batch");
    const int h = images[0].height, w = images[0].width;
    Tensor out =
        Tensor::zeros({static_cast<int>(images.size()), 3, h, w});
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w)
            throw ShapeError("images_to_tensor: ragged image sizes");
        for (size_t j = 0; j < images[i].rgb.size(); ++j)
            out.mutable_data()[i * images[i].rgb.size() + j] =
                static_cast<real_t>(images[i].rgb[j]);
    }
    return out;
}

std::vector<Image> tensor_to_images(const Tensor& batch) {
    if (batch.rank() != 4 || batch.dim(1) != 3)
        throw ShapeError("tensor_to_images: expected (B,3,H,W)");
    std::vector<Image> out(static_cast<size_t>(batch.dim(0)));
    const int64_t plane = batch.size() / batch.dim(0);
    for (int i = 0; i < batch.dim(0); ++i) {
        out[static_cast<size_t>(i)].height = batch.dim(2);
        out[static_cast<size_t>(i)].width = batch.dim(3);
        out[static_cast<size_t>(i)].rgb.resize(static_cast<size_t>(plane));
        for (int64_t j = 0; j < plane; ++j)
            out[static_cast<size_t>(i)].rgb[static_cast<size_t>(j)] =
                static_cast<float>(batch.data()[i * plane + j]);
    }
    return out;
}

}  // namespace ganlab::metrics
