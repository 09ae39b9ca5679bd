#pragma once

namespace helmsman {

// Millisecond time source used for stage latencies.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() const = 0;
};

class SteadyClock final : public Clock {
 public:
  double now_ms() const override;
};

// Simulated time, one timeline per thread. Scripted mock backends advance it
// by their configured latency so that latencies in traces and eval records are
// reproducible regardless of scheduling.
class VirtualClock final : public Clock {
 public:
  double now_ms() const override;

  static void advance(double ms);
  static void reset();
};

const Clock& steady_clock();

}  // namespace helmsman
