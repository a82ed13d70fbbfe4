#include <doctest.h>

#include <vector>

#include "fairrank/parallel.hpp"

using namespace fairrank;

TEST_CASE("thread helpers report sane values") {
  CHECK(hardware_threads() >= 1);
  const int before = current_threads();
  set_threads(2);
  CHECK(current_threads() == 2);
  set_threads(0);  // ignored
  CHECK(current_threads() == 2);
  set_threads(before);
}

TEST_CASE("for_each_index covers every slot in both modes") {
  for (Exec exec : {Exec::serial, Exec::parallel}) {
    std::vector<std::size_t> out(1000, 0);
    for_each_index(exec, out.size(), [&](std::size_t i) { out[i] = i * i; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == i * i);
  }
}

TEST_CASE("for_each_index with zero items is a no-op") {
  bool touched = false;
  for_each_index(Exec::parallel, 0, [&](std::size_t) { touched = true; });
  CHECK_FALSE(touched);
}
