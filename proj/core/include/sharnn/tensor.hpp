#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sharnn/errors.hpp"
#include "sharnn/rng.hpp"

namespace sharnn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace detail {

template <class S>
struct Storage {
    std::vector<S> value;
    std::vector<S> grad;  // empty until ensure_grad()
    bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor handle. Copies share storage (and therefore the
// gradient buffer); reshape() returns a view onto the same storage. Values are
// written once by the op that creates them; only gradients accumulate.
template <class S>
class Tensor {
  public:
    using Scalar = S;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.st_ = std::make_shared<detail::Storage<S>>();
        t.st_->value.assign(static_cast<size_t>(shape_numel(shape)), S(0));
        t.st_->requires_grad = requires_grad;
        t.shape_ = std::move(shape);
        return t;
    }

    static Tensor full(Shape shape, S fill, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (S& v : t.st_->value) v = fill;
        return t;
    }

    static Tensor from(std::vector<S> values, Shape shape, bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
            throw ShapeError("value count does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.st_ = std::make_shared<detail::Storage<S>>();
        t.st_->value = std::move(values);
        t.st_->requires_grad = requires_grad;
        t.shape_ = std::move(shape);
        return t;
    }

    static Tensor uniform(Rng& rng, double lo, double hi, Shape shape, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (S& v : t.st_->value) v = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return static_cast<bool>(st_); }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size(int64_t axis) const { return shape_.at(static_cast<size_t>(axis)); }
    int64_t numel() const { return static_cast<int64_t>(st_ ? st_->value.size() : 0); }

    // Leading dimensions collapsed into rows; last dimension is the row width.
    int64_t rows() const { return shape_.empty() ? 1 : numel() / cols(); }
    int64_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

    // A Tensor is a handle onto shared storage: copies alias the same buffers,
    // so storage access stays available through const handles (e.g. tape closures).
    std::span<S> value() const { return st_->value; }

    S& at(int64_t i) const { return st_->value[static_cast<size_t>(i)]; }
    S& at(int64_t r, int64_t c) const { return st_->value[static_cast<size_t>(r * cols() + c)]; }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    void set_requires_grad(bool rg) const { st_->requires_grad = rg; }

    bool has_grad() const { return st_ && !st_->grad.empty(); }

    // Allocates the gradient buffer (zero-filled) on first use.
    std::span<S> ensure_grad() const {
        if (st_->grad.empty()) st_->grad.assign(st_->value.size(), S(0));
        return st_->grad;
    }
    std::span<S> grad() const {
        if (!has_grad()) throw ContractError("gradient read before backward()");
        return st_->grad;
    }
    void zero_grad() const {
        if (st_) st_->grad.assign(st_->grad.size(), S(0));
    }
    void drop_grad() const {
        if (st_) st_->grad.clear();
    }

    // View with a different shape over the same storage (and gradients).
    Tensor reshape(Shape shape) const {
        if (shape_numel(shape) != numel()) {
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                             " changes element count");
        }
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    // Deep copy of the values with no gradient history.
    Tensor detached() const {
        Tensor t;
        t.st_ = std::make_shared<detail::Storage<S>>();
        t.st_->value = st_->value;
        t.st_->requires_grad = false;
        t.shape_ = shape_;
        return t;
    }

    // Deep copy keeping the requires_grad flag.
    Tensor clone() const {
        Tensor t = detached();
        t.st_->requires_grad = st_->requires_grad;
        return t;
    }

    bool same_storage(const Tensor& other) const { return st_ == other.st_; }
    const void* storage_id() const { return st_.get(); }
    long storage_use_count() const { return st_.use_count(); }

  private:
    std::shared_ptr<detail::Storage<S>> st_;
    Shape shape_;
};

}  // namespace sharnn
