#include <cstdlib>
#include <string_view>

#include "poolrank/kernels.hpp"

namespace poolrank::kernels {

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

Isa detect() noexcept {
  if (const char* forced = std::getenv("POOLRANK_ISA")) {
    const std::string_view want(forced);
    for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (want == isa_name(isa)) return isa_available(isa) ? isa : Isa::scalar;
  }
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

struct Table {
  Isa isa;
  double (*dot)(std::span<const double>, std::span<const double>) noexcept;
  double (*gather_sum)(std::span<const double>, std::span<const std::uint32_t>) noexcept;
};

const Table& table() noexcept {
  static const Table t = [] {
    switch (detect()) {
      case Isa::avx2: return Table{Isa::avx2, &avx2::dot, &avx2::gather_sum};
      case Isa::neon: return Table{Isa::neon, &neon::dot, &neon::gather_sum};
      case Isa::scalar: break;
    }
    return Table{Isa::scalar, &scalar::dot, &scalar::gather_sum};
  }();
  return t;
}

}  // namespace

Isa active_isa() noexcept { return table().isa; }

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return table().dot(a, b);
}

double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  return table().gather_sum(values, idx);
}

}  // namespace poolrank::kernels
