#include "helmsman/clock.hpp"

#include <chrono>

namespace helmsman {
namespace {

thread_local double g_virtual_now_ms = 0.0;

}  // namespace

double SteadyClock::now_ms() const {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

double VirtualClock::now_ms() const { return g_virtual_now_ms; }

void VirtualClock::advance(double ms) {
  if (ms > 0) g_virtual_now_ms += ms;
}

void VirtualClock::reset() { g_virtual_now_ms = 0.0; }

const Clock& steady_clock() {
  static const SteadyClock clock;
  return clock;
}

}  // namespace helmsman
