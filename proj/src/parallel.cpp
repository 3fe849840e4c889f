#include "mixbridge/parallel.hpp"

#include <cstdlib>
#include <string>

namespace mixbridge {

int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("MIXBRIDGE_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) return std::min(cap, hw);
    } catch (...) {
    }
  }
  return hw;
}

}  // namespace mixbridge
