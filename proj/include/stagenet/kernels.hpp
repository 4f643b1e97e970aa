#pragma once

// Dense double-precision inner loops used by the autodiff tape.
//
// Every kernel has a portable scalar reference in `scalar::` and, on x86-64,
// an AVX2+FMA variant in `avx2::`. The free functions in `kernels::` forward
// to whichever table is active; selection happens once at first use from the
// CPU feature bits and can be overridden with STAGENET_ISA=scalar|avx2 or
// set_isa().

#include <cstddef>
#include <span>
#include <string_view>

namespace stagenet::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
/// Switches the dispatch table. Throws ConfigError if `isa` is unavailable.
void set_isa(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y (+)= A x with A row-major rows x cols
  void (*gemv)(const double* a, const double* x, double* y, std::size_t rows,
               std::size_t cols, bool accumulate);
  // A += alpha * x yᵀ with A row-major rows x cols
  void (*ger)(double alpha, const double* x, const double* y, double* a,
              std::size_t rows, std::size_t cols);
};

const KernelTable& table(Isa isa);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* a, const double* x, double* y, std::size_t rows,
          std::size_t cols, bool accumulate);
void ger(double alpha, const double* x, const double* y, double* a,
         std::size_t rows, std::size_t cols);
}  // namespace scalar

#ifdef STAGENET_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* a, const double* x, double* y, std::size_t rows,
          std::size_t cols, bool accumulate);
void ger(double alpha, const double* x, const double* y, double* a,
         std::size_t rows, std::size_t cols);
}  // namespace avx2
#endif

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// C[m×n] (+)= A[m×k] · B[k×n]
void gemm(std::span<const double> a, std::span<const double> b,
          std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate);
// C[m×k] += G[m×n] · B[k×n]ᵀ   (left operand gradient of a product)
void gemm_nt_acc(std::span<const double> g, std::span<const double> b,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n);
// C[k×n] += A[m×k]ᵀ · G[m×n]   (right operand gradient of a product)
void gemm_tn_acc(std::span<const double> a, std::span<const double> g,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n);

}  // namespace stagenet::kernels
