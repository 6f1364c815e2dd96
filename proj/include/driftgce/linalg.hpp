#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftgce {

using Vector = std::vector<double>;

// Dense row-major matrix; one row per sample.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<Vector>& rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    Vector row_vector(std::size_t r) const {
        auto v = row(r);
        return {v.begin(), v.end()};
    }

    void append_row(std::span<const double> values);

    // Rows selected by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> indices) const;

    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_same_dim(std::size_t expected, std::size_t actual, const char* what);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);

// Cosine similarity in [-1, 1]. A zero-norm operand yields 0 (neutral).
double cosine_similarity(std::span<const double> a, std::span<const double> b);

Vector add(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);

// Column means over all rows; empty matrix yields an empty vector.
Vector column_means(const Matrix& m);

std::string format_vector(std::span<const double> v, int precision = 4);

}  // namespace driftgce
