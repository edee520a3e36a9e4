#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace taskcast::kernels {

// Raw kernel signatures. All matrices are dense row-major with an explicit
// row stride equal to `cols`.
struct KernelTable {
  std::string_view name;

  // returns sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += A x, A is rows x cols
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
               const double* x, double* y);
  // y += A^T x, A is rows x cols, x has `rows` entries, y has `cols`
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y);
  // A += alpha * x y^T, A is rows x cols
  void (*ger)(double alpha, const double* x, std::size_t rows,
              const double* y, std::size_t cols, double* a);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();

// The table selected at first use. Honors TASKCAST_KERNELS=scalar|avx2.
const KernelTable& active();

// Span front-ends over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y);
void gemv_t(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
void ger(double alpha, std::span<const double> x, std::span<const double> y,
         std::span<double> a);

}  // namespace taskcast::kernels
