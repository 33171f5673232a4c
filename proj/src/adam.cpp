#include "ganlab/adam.hpp"

#include <cmath>

namespace ganlab {

void Parameter::accumulate_grad(const real_t* g, int64_t n) {
    if (grad.empty()) grad.assign(static_cast<size_t>(n), real_t(0));
    for (int64_t i = 0; i < n; ++i) grad[static_cast<size_t>(i)] += g[i];
    has_grad = true;
}

void Parameter::zero_grad() {
    grad.assign(static_cast<size_t>(value.size()), real_t(0));
    has_grad = false;
}

Parameter* ParamStore::add(const std::string& name, Tensor init) {
    if (find(name))
        throw Error("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->value.set_requires_grad(true);
    p->value.impl()->param = p.get();
    params_.push_back(std::move(p));
    return params_.back().get();
}

Parameter* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

void ParamStore::add_buffer(const std::string& name,
                            std::vector<real_t>* buf) {
    buffers_.emplace_back(name, buf);
}

std::vector<Parameter*> ParamStore::parameters() const {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

void ParamStore::set_trainable(bool trainable) {
    for (const auto& p : params_) p->value.set_requires_grad(trainable);
}

int64_t ParamStore::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
    for (Parameter* p : params) {
        if (!p->has_grad)
            throw Error("adam_step: parameter '" + p->name +
                        "' carries no gradient from a backward pass");
        const size_t n = static_cast<size_t>(p->value.size());
        if (p->adam_m.empty()) {
            p->adam_m.assign(n, real_t(0));
            p->adam_v.assign(n, real_t(0));
        }
        p->step_count += 1;
        const double c1 =
            1.0 - std::pow(static_cast<double>(cfg.beta1),
                           static_cast<double>(p->step_count));
        const double c2 =
            1.0 - std::pow(static_cast<double>(cfg.beta2),
                           static_cast<double>(p->step_count));
        real_t* w = p->value.mutable_data();
        for (size_t i = 0; i < n; ++i) {
            const real_t g = p->grad[i];
            p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1 - cfg.beta1) * g;
            p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1 - cfg.beta2) * g * g;
            const real_t mhat = p->adam_m[i] / static_cast<real_t>(c1);
            const real_t vhat = p->adam_v[i] / static_cast<real_t>(c2);
            w[i] -= cfg.lr * mhat /
                    (static_cast<real_t>(std::sqrt(static_cast<double>(vhat))) +
                     cfg.eps);
        }
        p->zero_grad();
    }
}

Tensor init_normal(Shape shape, real_t mean, real_t stddev, RngStream& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    real_t* d = t.mutable_data();
    const int64_t n = t.size();
    for (int64_t i = 0; i < n; ++i)
        d[i] = mean + stddev * static_cast<real_t>(rng.normal());
    return t;
}

Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }

}  // namespace ganlab
