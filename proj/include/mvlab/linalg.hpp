#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mvlab {

/// Small dense row-major matrix; diffusion coefficients are dim x noise_dim.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    /// out = M x
    void apply(std::span<const double> x, std::span<double> out) const;
    [[nodiscard]] bool is_zero() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// ||A - B||_HS^2
[[nodiscard]] double hs_distance_squared(const Matrix& a, const Matrix& b);
/// Determinant by partial-pivot LU (square matrices only).
[[nodiscard]] double determinant(Matrix m);

}  // namespace mvlab
