#include "driftgce/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace driftgce {

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
    Matrix m;
    for (const auto& r : rows) {
        m.append_row(r);
    }
    return m;
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
        cols_ = values.size();
    }
    require_same_dim(cols_, values.size(), "Matrix::append_row");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw std::out_of_range("Matrix::select_rows: index out of range");
        }
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void require_same_dim(std::size_t expected, std::size_t actual, const char* what) {
    if (expected != actual) {
        throw DimensionError(std::string(what) + ": dimension mismatch (expected " +
                             std::to_string(expected) + ", got " + std::to_string(actual) +
                             ")");
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "squared_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector add(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "add");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "subtract");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

Vector column_means(const Matrix& m) {
    if (m.empty()) {
        return {};
    }
    Vector mean(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            mean[c] += row[c];
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(m.rows());
    }
    return mean;
}

std::string format_vector(std::span<const double> v, int precision) {
    std::string out = "(";
    char buf[64];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.*f", precision, v[i]);
        if (i > 0) {
            out += ", ";
        }
        out += buf;
    }
    out += ")";
    return out;
}

}  // namespace driftgce
