#pragma once

#include <qmbdp/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qmbdp {

using Complex = std::complex<double>;
using StateVector = Eigen::VectorXcd;

/// Real sparse matrix in compressed-row form. Column indices are sorted and
/// unique within each row.
class SparseOperator {
 public:
  class Builder;

  SparseOperator() = default;

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t nnz() const noexcept { return values_.size(); }
  [[nodiscard]] bool symmetric() const noexcept { return symmetric_; }

  [[nodiscard]] std::span<const std::int64_t> row_offsets() const noexcept { return offsets_; }
  [[nodiscard]] std::span<const std::int32_t> columns() const noexcept { return columns_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

  [[nodiscard]] std::size_t row_nnz(std::size_t row) const {
    return static_cast<std::size_t>(offsets_[row + 1] - offsets_[row]);
  }
  [[nodiscard]] std::size_t max_row_nnz() const {
    std::size_t best = 0;
    for (std::size_t r = 0; r < dim_; ++r) best = std::max(best, row_nnz(r));
    return best;
  }

  [[nodiscard]] double entry(std::size_t row, std::size_t col) const {
    const auto* first = columns_.data() + offsets_[row];
    const auto* last = columns_.data() + offsets_[row + 1];
    const auto* it = std::lower_bound(first, last, static_cast<std::int32_t>(col));
    return (it != last && *it == static_cast<std::int32_t>(col)) ? values_[static_cast<std::size_t>(it - columns_.data())]
                                                                 : 0.0;
  }

  [[nodiscard]] double diagonal(std::size_t row) const { return entry(row, row); }

  /// y = A x.
  template <typename Scalar>
  void apply(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) const {
    check_dim(static_cast<std::size_t>(x.size()));
    y.resize(x.size());
    for (std::size_t r = 0; r < dim_; ++r) {
      Scalar acc{0};
      for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k)
        acc += values_[static_cast<std::size_t>(k)] * x[columns_[static_cast<std::size_t>(k)]];
      y[static_cast<Eigen::Index>(r)] = acc;
    }
  }

  template <typename Scalar>
  [[nodiscard]] Eigen::Matrix<Scalar, Eigen::Dynamic, 1> operator*(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y;
    apply(x, y);
    return y;
  }

  /// out = alpha * (A - shift) x - out, the fused update of the Chebyshev
  /// three-term recurrence. `out` may hold T_{k-1} on entry.
  void apply_recurrence(const StateVector& x, StateVector& out, double shift, double alpha) const {
    check_dim(static_cast<std::size_t>(x.size()));
    for (std::size_t r = 0; r < dim_; ++r) {
      Complex acc = -shift * x[static_cast<Eigen::Index>(r)];
      for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k)
        acc += values_[static_cast<std::size_t>(k)] * x[columns_[static_cast<std::size_t>(k)]];
      out[static_cast<Eigen::Index>(r)] = alpha * acc - out[static_cast<Eigen::Index>(r)];
    }
  }

  [[nodiscard]] double max_asymmetry() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < dim_; ++r)
      for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k)
        worst = std::max(worst, std::abs(values_[static_cast<std::size_t>(k)] -
                                         entry(static_cast<std::size_t>(columns_[static_cast<std::size_t>(k)]), r)));
    return worst;
  }

  [[nodiscard]] Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    for (std::size_t r = 0; r < dim_; ++r)
      for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k)
        m(static_cast<Eigen::Index>(r), columns_[static_cast<std::size_t>(k)]) = values_[static_cast<std::size_t>(k)];
    return m;
  }

  /// Writes "row col value" lines (0-based, full precision) after a
  /// "# dim nnz" comment line.
  void write_triplets(std::ostream& os) const {
    os << "# " << dim_ << ' ' << nnz() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < dim_; ++r)
      for (auto k = offsets_[r]; k < offsets_[r + 1]; ++k)
        os << r << ' ' << columns_[static_cast<std::size_t>(k)] << ' ' << values_[static_cast<std::size_t>(k)] << '\n';
  }

 private:
  void check_dim(std::size_t n) const {
    if (n != dim_)
      throw ValidationError("dimension mismatch: operator " + std::to_string(dim_) + ", vector " + std::to_string(n));
  }

  std::size_t dim_ = 0;
  bool symmetric_ = false;
  std::vector<std::int64_t> offsets_{0};
  std::vector<std::int32_t> columns_;
  std::vector<double> values_;
};

/// Assembles a SparseOperator one row at a time. Entries added to the current
/// row may arrive unsorted and repeated; they are merged on finish_row().
class SparseOperator::Builder {
 public:
  explicit Builder(std::size_t dim, std::size_t nnz_hint = 0) {
    if (dim > static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()))
      throw CapacityError("operators", "dimension " + std::to_string(dim) + " exceeds 32-bit column indices");
    op_.dim_ = dim;
    op_.offsets_.reserve(dim + 1);
    op_.columns_.reserve(nnz_hint);
    op_.values_.reserve(nnz_hint);
  }

  void add(std::size_t col, double value) { row_.emplace_back(static_cast<std::int32_t>(col), value); }

  void finish_row() {
    std::sort(row_.begin(), row_.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    for (std::size_t i = 0; i < row_.size();) {
      const auto col = row_[i].first;
      double sum = 0.0;
      for (; i < row_.size() && row_[i].first == col; ++i) sum += row_[i].second;
      if (sum != 0.0) {
        op_.columns_.push_back(col);
        op_.values_.push_back(sum);
      }
    }
    row_.clear();
    op_.offsets_.push_back(static_cast<std::int64_t>(op_.columns_.size()));
  }

  /// `symmetric` records a property guaranteed by the caller's construction.
  [[nodiscard]] SparseOperator finish(bool symmetric) && {
    if (op_.offsets_.size() != op_.dim_ + 1)
      throw ValidationError("builder finished after " + std::to_string(op_.offsets_.size() - 1) + " of " +
                            std::to_string(op_.dim_) + " rows");
    op_.symmetric_ = symmetric;
    return std::move(op_);
  }

 private:
  SparseOperator op_;
  std::vector<std::pair<std::int32_t, double>> row_;
};

/// Entrywise a - b; entries that cancel exactly are dropped.
inline SparseOperator difference(const SparseOperator& a, const SparseOperator& b) {
  if (a.dim() != b.dim()) throw ValidationError("difference of operators with different dimensions");
  SparseOperator::Builder builder(a.dim());
  auto add_row = [&builder](const SparseOperator& op, std::size_t r, double sign) {
    const auto offsets = op.row_offsets();
    for (auto k = static_cast<std::size_t>(offsets[r]); k < static_cast<std::size_t>(offsets[r + 1]); ++k)
      builder.add(static_cast<std::size_t>(op.columns()[k]), sign * op.values()[k]);
  };
  for (std::size_t r = 0; r < a.dim(); ++r) {
    add_row(a, r, 1.0);
    add_row(b, r, -1.0);
    builder.finish_row();
  }
  return std::move(builder).finish(a.symmetric() && b.symmetric());
}

}  // namespace qmbdp
