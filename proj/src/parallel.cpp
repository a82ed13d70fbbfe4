#include "fairrank/parallel.hpp"

#include <omp.h>

namespace fairrank {

int hardware_threads() { return omp_get_max_threads(); }

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int current_threads() { return omp_get_max_threads(); }

namespace detail {

void omp_for(std::size_t n, void (*fn)(std::size_t, void*), void* ctx) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i), ctx);
  }
}

}  // namespace detail
}  // namespace fairrank
