#include <atomic>
#include <cstdlib>
#include <string>

#include "stagenet/error.hpp"
#include "stagenet/kernels.hpp"

namespace stagenet::kernels {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::axpy, &scalar::gemv,
                                   &scalar::ger};
#ifdef STAGENET_HAVE_AVX2
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::axpy, &avx2::gemv,
                                 &avx2::ger};
#endif

Isa detect() {
  if (const char* env = std::getenv("STAGENET_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::kScalar;
    if (want == "avx2" && isa_available(Isa::kAvx2)) return Isa::kAvx2;
  }
  return isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> t{&table(detect())};
  return t;
}

std::atomic<Isa>& current_isa() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

inline const KernelTable& active() {
  return *current().load(std::memory_order_relaxed);
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#ifdef STAGENET_HAVE_AVX2
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
#ifdef STAGENET_HAVE_AVX2
  if (isa == Isa::kAvx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

Isa active_isa() { return current_isa().load(); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError("instruction set '" + std::string(isa_name(isa)) +
                      "' is not available on this CPU");
  }
  current_isa().store(isa);
  current().store(&table(isa));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemm(std::span<const double> a, std::span<const double> b,
          std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  const KernelTable& t = active();
  if (n == 1) {
    t.gemv(a.data(), b.data(), c.data(), m, k, accumulate);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data() + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      t.axpy(a[i * k + p], b.data() + p * n, row, n);
    }
  }
}

void gemm_nt_acc(std::span<const double> g, std::span<const double> b,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n) {
  const KernelTable& t = active();
  if (n == 1) {
    t.ger(1.0, g.data(), b.data(), c.data(), m, k);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    t.gemv(b.data(), g.data() + i * n, c.data() + i * k, k, n, true);
  }
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> g,
                 std::span<double> c, std::size_t m, std::size_t k,
                 std::size_t n) {
  const KernelTable& t = active();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      t.axpy(g[i], a.data() + i * k, c.data(), k);
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    t.ger(1.0, a.data() + i * k, g.data() + i * n, c.data(), k, n);
  }
}

}  // namespace stagenet::kernels
