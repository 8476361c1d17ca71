#pragma once

#include <cstdint>

namespace fragflow {

// Counter-based pseudo-random stream. Every draw is a pure function of
// (seed, stream-id, counter), so two streams constructed from the same pair
// produce identical sequences no matter how execution is scheduled.
//
// child(lane) derives a new stream from (seed, stream-id, lane) without
// touching the parent, which is what makes per-trajectory / per-particle
// streams reproducible under any parallel schedule. split() is the stateful
// variant: it keys the child off the parent's current counter and advances
// the parent, so successive splits are distinct.
class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}

  RandomStream(uint64_t seed, uint64_t stream_id)
      : key_(mix(mix(seed ^ 0x7c15d2e8a1c7f02bULL) ^
                 mix(stream_id + 0x9e3779b97f4a7c15ULL))) {}

  uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix(key_ ^ counter_);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in {0, ..., n-1}. Modulo bias is < n / 2^64, irrelevant here.
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  RandomStream child(uint64_t lane) const {
    RandomStream c;
    c.key_ = mix(key_ ^ mix(lane + 0x632be59bd9b4e019ULL));
    c.counter_ = 0;
    return c;
  }

  RandomStream split() {
    uint64_t lane = counter_ ^ 0x5851f42d4c957f2dULL;
    counter_ += 0x9e3779b97f4a7c15ULL;
    return child(mix(lane));
  }

 private:
  static uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace fragflow
