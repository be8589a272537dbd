#include "fairlink/tensor.hpp"

#include <Eigen/Core>

#include <cmath>

#include "fairlink/errors.hpp"

namespace fairlink {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_string());
    }
}

Tensor Tensor::column(std::span<const double> v) {
    return Tensor(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ValidationError("ragged rows in Tensor::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw ValidationError("item() on non-scalar tensor of shape " + shape_string());
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul shape mismatch " + a.shape_string() + " * " + b.shape_string());
    }
    Tensor out(a.rows(), b.cols());
    if (out.size() == 0 || a.cols() == 0) return out;
    MutMap(out.values().data(), out.rows(), out.cols()).noalias() =
        ConstMap(a.values().data(), a.rows(), a.cols()) * ConstMap(b.values().data(), b.rows(), b.cols());
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

}  // namespace fairlink
