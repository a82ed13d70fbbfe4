#pragma once

#include <cstddef>

namespace fairrank {

// Every batch kernel comes in two flavors selected by Exec: a plain serial
// loop (the reference) and an OpenMP loop. Kernels are written so both
// produce bitwise-identical results: each iteration writes only its own
// slot, and any floating-point reduction happens afterwards in fixed index
// order. tests/unit/test_parallel.cpp asserts the equivalence.
enum class Exec { serial, parallel };

int hardware_threads();
void set_threads(int n);
int current_threads();

namespace detail {
void omp_for(std::size_t n, void (*fn)(std::size_t, void*), void* ctx);
}

template <class F>
void for_each_index(Exec mode, std::size_t n, F&& body) {
  if (mode == Exec::parallel) {
    auto trampoline = [](std::size_t i, void* ctx) { (*static_cast<F*>(ctx))(i); };
    detail::omp_for(n, trampoline, &body);
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace fairrank
