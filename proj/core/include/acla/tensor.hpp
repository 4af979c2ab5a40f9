#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acla/error.hpp"

namespace acla {

// Dense shape, up to rank 4 with trailing dims fixed at 1.  Feature maps are
// (height, width, channels); parameter matrices are (rows, cols); 3x3 kernels
// are (3, 3, c_in, c_out).
struct Shape {
    int d0 = 1, d1 = 1, d2 = 1, d3 = 1;

    std::int64_t count() const {
        return static_cast<std::int64_t>(d0) * d1 * d2 * d3;
    }
    bool operator==(const Shape&) const = default;
};

// Value-semantic dense array of 64-bit floats, optionally gradient-tracked.
// Feature maps are stored row-major with channels innermost, so the per-pixel
// channel vector is contiguous.
class Tensor {
public:
    Tensor() = default;

    static Tensor map(int height, int width, int channels);
    static Tensor matrix(int rows, int cols);
    static Tensor vec(int n);
    static Tensor scalar(double v);
    static Tensor kernel3(int c_in, int c_out);
    static Tensor of_shape(const Shape& s);

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    // Feature-map accessors (valid for any tensor; named for the map case).
    int height() const { return shape_.d0; }
    int width() const { return shape_.d1; }
    int channels() const { return shape_.d2; }

    bool is_scalar() const { return data_.size() == 1; }

    double& at(int r, int c, int ch) {
        return data_[(static_cast<std::int64_t>(r) * shape_.d1 + c) * shape_.d2 + ch];
    }
    double at(int r, int c, int ch) const {
        return data_[(static_cast<std::int64_t>(r) * shape_.d1 + c) * shape_.d2 + ch];
    }
    double& operator[](std::int64_t i) { return data_[i]; }
    double operator[](std::int64_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool on);

    // Gradient buffer, same length as data.  Allocated zero-filled on first
    // access; only meaningful while requires_grad is set.
    std::vector<double>& grad();
    const std::vector<double>& grad() const { return grad_; }
    bool has_grad() const { return !grad_.empty(); }
    void zero_grad();

    void fill(double v);

private:
    Shape shape_{};
    std::vector<double> data_;
    bool requires_grad_ = false;
    std::vector<double> grad_;
};

inline Tensor Tensor::of_shape(const Shape& s) {
    Tensor t;
    if (s.d0 < 0 || s.d1 < 0 || s.d2 < 0 || s.d3 < 0)
        throw DimensionError("tensor dims must be non-negative");
    t.shape_ = s;
    t.data_.assign(static_cast<std::size_t>(s.count()), 0.0);
    return t;
}

inline Tensor Tensor::map(int height, int width, int channels) {
    return of_shape({height, width, channels, 1});
}
inline Tensor Tensor::matrix(int rows, int cols) { return of_shape({rows, cols, 1, 1}); }
inline Tensor Tensor::vec(int n) { return of_shape({n, 1, 1, 1}); }
inline Tensor Tensor::scalar(double v) {
    Tensor t = of_shape({1, 1, 1, 1});
    t.data_[0] = v;
    return t;
}
inline Tensor Tensor::kernel3(int c_in, int c_out) { return of_shape({3, 3, c_in, c_out}); }

inline Tensor& Tensor::set_requires_grad(bool on) {
    requires_grad_ = on;
    if (!on) grad_.clear();
    return *this;
}

inline std::vector<double>& Tensor::grad() {
    if (grad_.empty()) grad_.assign(data_.size(), 0.0);
    return grad_;
}

inline void Tensor::zero_grad() {
    grad_.assign(data_.size(), 0.0);
}

inline void Tensor::fill(double v) {
    data_.assign(data_.size(), v);
}

}  // namespace acla
