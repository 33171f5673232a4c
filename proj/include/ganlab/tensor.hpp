#pragma once

#include <memory>
#include <vector>

#include "ganlab/common.hpp"

namespace ganlab {

class Tape;
struct Parameter;

struct TensorImpl {
    Shape shape;
    std::vector<real_t> data;
    bool requires_grad = false;
    Parameter* param = nullptr;  // leaf gradient sink, set for parameters
    uint64_t tape_id = 0;        // tape that `node` belongs to
    int node = -1;
};

// Dense row-major value with an optional recorded history. Copies share the
// underlying buffer; values are immutable once another op has consumed them.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real_t v);
    static Tensor from(Shape shape, std::vector<real_t> values);
    static Tensor scalar(real_t v) { return full({1}, v); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[i]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

    const real_t* data() const { return impl_->data.data(); }
    real_t* mutable_data() { return impl_->data.data(); }
    const std::vector<real_t>& values() const { return impl_->data; }

    real_t item() const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    // Same buffer, no recorded history.
    Tensor detach() const;
    // Deep copy of the values, no recorded history.
    Tensor clone() const;

    TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
    friend class Tape;
};

}  // namespace ganlab
