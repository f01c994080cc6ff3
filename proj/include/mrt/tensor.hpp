#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "mrt/common.hpp"

namespace mrt {

// Dense row-major tensor of doubles. Values are treated as immutable once a
// tensor has been handed out; mutable_data() is only used while constructing
// the buffer inside an op. The node id ties a tensor to the GradGraph that
// produced it and is meaningless outside that graph.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<double>>(numel_of(t.shape_), 0.0);
        return t;
    }

    static Tensor full(Shape shape, double v) {
        Tensor t = zeros(std::move(shape));
        for (double& x : *t.data_) x = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> values) {
        if (numel_of(shape) != static_cast<int64_t>(values.size()))
            throw dimension_error("tensor: shape " + shape_str(shape) + " does not match " +
                                  std::to_string(values.size()) + " values");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    static Tensor scalar(double v) { return from({}, {v}); }

    // Same buffer, new shape (row-major view).
    Tensor reshaped(Shape shape) const {
        if (numel_of(shape) != numel())
            throw dimension_error("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                                  " changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    const double* data() const { return data_->data(); }
    double* mutable_data() { return data_->data(); }

    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
    double at2(int64_t i, int64_t j) const { return (*data_)[static_cast<size_t>(i * shape_[1] + j)]; }

    double item() const {
        if (numel() != 1) throw contract_error("item(): tensor is not scalar, shape " + shape_str(shape_));
        return (*data_)[0];
    }

    bool same_buffer(const Tensor& o) const { return data_ == o.data_; }

    int node() const { return node_; }
    void set_node(int id) { node_ = id; }
    bool tracked() const { return node_ >= 0; }

    // Copy of the value with no graph association.
    Tensor constant() const {
        Tensor t = *this;
        t.node_ = -1;
        return t;
    }

  private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    int node_ = -1;
};

inline void require_finite(const Tensor& t, const char* what) {
    if (!all_finite(t.data(), t.numel()))
        throw numeric_error(std::string("non-finite values in ") + what);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw dimension_error(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

} // namespace mrt
