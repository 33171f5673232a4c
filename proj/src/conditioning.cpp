#include "ganlab/conditioning.hpp"

namespace ganlab {

EmbeddingTable::EmbeddingTable(ParamStore& ps, const std::string& prefix,
                               int vocab_size, int dim, RngStream& rng)
    : vocab_(vocab_size), dim_(dim) {
    rows_ = ps.add(prefix + ".rows",
                   init_normal({vocab_size, dim}, 0, real_t(0.02), rng));
}

Tensor EmbeddingTable::forward(const std::vector<std::vector<int>>& ids) const {
    const int b = static_cast<int>(ids.size());
    if (b == 0) throw ShapeError("embedding: empty batch");
    // Multi-hot counts times the table; matmul carries the gradient back to
    // the rows.
    Tensor counts = Tensor::zeros({b, vocab_});
    for (int i = 0; i < b; ++i)
        for (int id : ids[static_cast<size_t>(i)]) {
            if (id < 0 || id >= vocab_)
                throw DataError("embedding: unknown attribute id " +
                                std::to_string(id) + " (vocabulary size " +
                                std::to_string(vocab_) + ")");
            counts.mutable_data()[static_cast<int64_t>(i) * vocab_ + id] += 1;
        }
    return matmul(counts, rows_->value);
}

CAHead::CAHead(ParamStore& ps, const std::string& prefix, int in_dim,
               int out_dim, RngStream& rng)
    : fc_(ps, prefix + ".fc", in_dim, 2 * out_dim, true, rng),
      out_dim_(out_dim) {}

CAHead::Draw CAHead::sample(const Tensor& phi, RngStream* rng) const {
    Draw d;
    Tensor head = fc_.forward(phi);
    d.mu = slice_dim1(head, 0, out_dim_);
    Tensor log_sigma = slice_dim1(head, out_dim_, out_dim_);
    d.sigma = exp_op(log_sigma);
    d.epsilon = Tensor::zeros({phi.dim(0), out_dim_});
    if (rng) {
        real_t* e = d.epsilon.mutable_data();
        for (int64_t i = 0; i < d.epsilon.size(); ++i)
            e[i] = static_cast<real_t>(rng->normal());
    }
    d.c = add(d.mu, mul(d.sigma, d.epsilon));
    return d;
}

Tensor kl_standard_normal(const Tensor& mu, const Tensor& sigma) {
    if (mu.shape() != sigma.shape())
        throw ShapeError("kl_standard_normal: mu " + shape_str(mu.shape()) +
                         " and sigma " + shape_str(sigma.shape()) +
                         " must match");
    for (int64_t i = 0; i < sigma.size(); ++i)
        if (!(sigma.data()[i] > 0))
            throw NumericError("kl_standard_normal: sigma must be positive");
    const int batch = mu.rank() == 2 ? mu.dim(0) : 1;
    // 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2), averaged over the batch.
    Tensor t = add(sum_all(mul(mu, mu)), sum_all(mul(sigma, sigma)));
    t = sub(t, scale(sum_all(log_op(sigma)), 2));
    t = sub(t, Tensor::scalar(static_cast<real_t>(mu.size())));
    return scale(t, static_cast<real_t>(0.5 / batch));
}

}  // namespace ganlab
