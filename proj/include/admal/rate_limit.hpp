#pragma once

#include <chrono>
#include <mutex>
#include <thread>

namespace admal {

// Token bucket with capacity `burst`. acquire() blocks until a token is
// available; callers are served one at a time.
class TokenBucket {
 public:
  using clock = std::chrono::steady_clock;

  explicit TokenBucket(double per_second, double burst = 1.0)
      : rate_(per_second), capacity_(burst), tokens_(burst), last_(clock::now()) {}

  void acquire() {
    std::lock_guard lock(mu_);
    if (rate_ <= 0) return;  // unlimited
    while (true) {
      const auto now = clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      std::this_thread::sleep_for(std::chrono::duration<double>((1.0 - tokens_) / rate_));
    }
  }

  double rate() const { return rate_; }

 private:
  double rate_;
  double capacity_;
  double tokens_;
  clock::time_point last_;
  std::mutex mu_;
};

}  // namespace admal
