#include "ganlab/tensor.hpp"

#include <sstream>

namespace ganlab {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (int d : shape)
        if (d <= 0)
            throw ShapeError("tensor extent must be positive, got " +
                             shape_str(shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(numel(shape)), real_t(0));
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, real_t v) {
    check_shape(shape);
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(numel(shape)), v);
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<real_t> values) {
    check_shape(shape);
    if (numel(shape) != static_cast<int64_t>(values.size()))
        throw ShapeError("tensor data length " +
                         std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

real_t Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item() requires a scalar tensor, got " +
                         shape_str(shape()));
    return impl_->data[0];
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;  // value copy keeps the original immutable
    return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(std::move(impl));
}

}  // namespace ganlab
