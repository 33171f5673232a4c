#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ganlab/rng.hpp"
#include "ganlab/tensor.hpp"

namespace ganlab {

// Trainable tensor plus its optimizer state. Gradients are accumulated by
// Tape::backward and cleared by adam_step.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<real_t> grad;
    bool has_grad = false;
    std::vector<real_t> adam_m, adam_v;
    int64_t step_count = 0;

    void accumulate_grad(const real_t* g, int64_t n);
    void zero_grad();
};

// Named model state: ordered parameters plus non-trainable buffers (batch
// norm running statistics) that checkpoints persist alongside them.
class ParamStore {
public:
    Parameter* add(const std::string& name, Tensor init);
    Parameter* find(const std::string& name) const;

    void add_buffer(const std::string& name, std::vector<real_t>* buf);

    std::vector<Parameter*> parameters() const;
    const std::vector<std::pair<std::string, std::vector<real_t>*>>& buffers()
        const {
        return buffers_;
    }

    // Flips requires_grad on every parameter; frozen parameters record no
    // gradient work at all.
    void set_trainable(bool trainable);

    int64_t parameter_count() const;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::vector<std::pair<std::string, std::vector<real_t>*>> buffers_;
};

struct AdamConfig {
    real_t lr = static_cast<real_t>(2e-4);
    real_t beta1 = static_cast<real_t>(0.5);
    real_t beta2 = static_cast<real_t>(0.999);
    real_t eps = static_cast<real_t>(1e-8);
};

// Bias-corrected ADAM update applied in place; requires every parameter to
// carry a gradient from one backward pass, clears them, bumps step_count.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg);

// Weight initializers shared by every model.
Tensor init_normal(Shape shape, real_t mean, real_t stddev, RngStream& rng);
Tensor init_zeros(Shape shape);

}  // namespace ganlab
