#include "segn/runtime.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace segn {

void configure_runtime() {
#ifdef __GLIBC__
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
    return true;
  }();
  (void)tuned;
#endif
  if (const char* env = std::getenv("SEGN_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) Eigen::setNbThreads(n);
    } catch (const std::exception&) {
    }
  }
}

}  // namespace segn
