#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "setmix/error.hpp"
#include "setmix/util.hpp"

namespace setmix {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? *this / n : *this;
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    // Lexicographic (x, y, z) order; the tie-break rule used everywhere a
    // geometric comparison can tie.
    friend bool lex_less(const Vec3& a, const Vec3& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.z < b.z;
    }
    friend bool operator==(const Vec3& a, const Vec3& b) {
        return a.x == b.x && a.y == b.y && a.z == b.z;
    }
};

inline double dist2(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

// Dense row-major matrix of 64-bit floats. The whole engine runs in double
// precision; gradient checks demand it.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ > 0 ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw ShapeMismatchError("ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Vec3 row_vec3(std::size_t r) const {
        const double* p = row(r);
        return {p[0], p[1], p[2]};
    }
    void set_row_vec3(std::size_t r, const Vec3& v) {
        double* p = row(r);
        p[0] = v.x;
        p[1] = v.y;
        p[2] = v.z;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// c = a * b^T   (a: n x k, b: m x k -> n x m). Rows of both operands are
// contiguous, so the inner loop is a straight dot product.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeMismatchError("matmul_nt: inner dims");
    Matrix c(a.rows(), b.rows());
    const std::size_t k = a.cols(), m = b.rows();
    parallel_for(a.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* ai = a.row(i);
            double* ci = c.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                const double* bj = b.row(j);
                double acc = 0.0;
                for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
                ci[j] = acc;
            }
        }
    });
    return c;
}

// c = a * b     (a: n x k, b: k x m -> n x m).
inline Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeMismatchError("matmul_nn: inner dims");
    Matrix c(a.rows(), b.cols());
    const std::size_t k = a.cols(), m = b.cols();
    parallel_for(a.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* ai = a.row(i);
            double* ci = c.row(i);
            for (std::size_t t = 0; t < k; ++t) {
                const double av = ai[t];
                if (av == 0.0) continue;
                const double* bt = b.row(t);
                for (std::size_t j = 0; j < m; ++j) ci[j] += av * bt[j];
            }
        }
    });
    return c;
}

// c = a^T * b   (a: n x r, b: n x m -> r x m).
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeMismatchError("matmul_tn: inner dims");
    Matrix c(a.cols(), b.cols());
    const std::size_t n = a.rows(), r = a.cols(), m = b.cols();
    // Partition over output rows so threads write disjoint memory.
    parallel_for(r, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t t = 0; t < n; ++t) {
            const double* at = a.row(t);
            const double* bt = b.row(t);
            for (std::size_t i = lo; i < hi; ++i) {
                const double av = at[i];
                if (av == 0.0) continue;
                double* ci = c.row(i);
                for (std::size_t j = 0; j < m; ++j) ci[j] += av * bt[j];
            }
        }
    });
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace setmix
