#pragma once

#include <string>
#include <vector>

#include "ganlab/blocks.hpp"

namespace ganlab {

// Learned per-attribute embedding table. A caption is a bag of attribute
// ids; its embedding phi is the sum of the corresponding rows, so the order
// of attributes never matters and the empty caption maps to the zero vector.
class EmbeddingTable {
public:
    EmbeddingTable(ParamStore& ps, const std::string& prefix, int vocab_size,
                   int dim, RngStream& rng);

    // ids: one attribute-id list per sample. Unknown ids are vocabulary
    // errors.
    Tensor forward(const std::vector<std::vector<int>>& ids) const;

    int dim() const { return dim_; }
    int vocab_size() const { return vocab_; }

private:
    Parameter* rows_ = nullptr;
    int vocab_ = 0, dim_ = 0;
};

// Conditioning head: one fully-connected layer maps phi to (mu, log sigma);
// sampling uses the reparameterization c = mu + sigma * eps so gradients
// reach the head through both moments.
class CAHead {
public:
    CAHead() = default;
    CAHead(ParamStore& ps, const std::string& prefix, int in_dim, int out_dim,
           RngStream& rng);

    struct Draw {
        Tensor c;        // (B, out_dim)
        Tensor mu;       // (B, out_dim)
        Tensor sigma;    // (B, out_dim), strictly positive by construction
        Tensor epsilon;  // the noise actually used
    };

    // rng == nullptr fixes epsilon to zero, so c == mu.
    Draw sample(const Tensor& phi, RngStream* rng) const;

    int out_dim() const { return out_dim_; }

private:
    Linear fc_;
    int out_dim_ = 0;
};

// Closed-form KL(N(mu, diag(sigma^2)) || N(0, I)), averaged over the batch
// rows of (B,D) inputs; rank-1 inputs are a single sample.
Tensor kl_standard_normal(const Tensor& mu, const Tensor& sigma);

}  // namespace ganlab
