#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace varcon {

// Error hierarchy. Every failure mode a caller can act on has its own type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define VARCON_DEFINE_ERROR(Name)                                            \
  class Name : public Error {                                                \
  public:                                                                    \
    using Error::Error;                                                      \
  }

VARCON_DEFINE_ERROR(DegenerateCentroid);
VARCON_DEFINE_ERROR(DivergentKL);
VARCON_DEFINE_ERROR(ZeroNorm);
VARCON_DEFINE_ERROR(ShapeMismatch);
VARCON_DEFINE_ERROR(MissingPositive);
VARCON_DEFINE_ERROR(NoPositive);
VARCON_DEFINE_ERROR(MalformedFile);
VARCON_DEFINE_ERROR(InsufficientSamples);
VARCON_DEFINE_ERROR(DimMismatch);
VARCON_DEFINE_ERROR(ConfigError);
VARCON_DEFINE_ERROR(InvalidArgument);

#undef VARCON_DEFINE_ERROR

/// Dense row-major matrix of doubles.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool operator==(const Matrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Unit-norm embeddings with integer labels.
///
/// `labels` keep their original class ids; the number of distinct ids is
/// `num_classes_present()`. Rows are expected to have unit l2 norm.
struct EmbeddingBatch {
  Matrix vectors;
  std::vector<int> labels;

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  std::size_t num_classes_present() const;

  /// Throws InvalidArgument if shapes disagree, a label is negative, or a row
  /// is not unit norm within `tol`.
  void validate(double tol = 1e-9) const;
};

/// Normalizes every row of `m` in place; throws ZeroNorm on a row with norm < 1e-12.
void normalize_rows(Matrix& m);

}  // namespace varcon
