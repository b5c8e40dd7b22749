#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nlbranch/model.hpp"

namespace nlbranch {

/// Philox 4x64 with 10 rounds: a counter-based generator, so a stream is a
/// pure function of (key, counter). Streams are keyed (seed, replica) which
/// makes replicas reproducible and embarrassingly parallel.
struct Philox4x64 {
  static constexpr std::uint64_t kMult0 = 0xD2B74407B1CE6E93ull;
  static constexpr std::uint64_t kMult1 = 0xCA5A826395121157ull;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73Bull;

  static std::array<std::uint64_t, 4> block(std::array<std::uint64_t, 4> ctr,
                                            std::array<std::uint64_t, 2> key) {
    auto round = [](std::array<std::uint64_t, 4>& c,
                    const std::array<std::uint64_t, 2>& k) {
      const unsigned __int128 p0 = (unsigned __int128)kMult0 * c[0];
      const unsigned __int128 p1 = (unsigned __int128)kMult1 * c[2];
      const auto lo0 = (std::uint64_t)p0, hi0 = (std::uint64_t)(p0 >> 64);
      const auto lo1 = (std::uint64_t)p1, hi1 = (std::uint64_t)(p1 >> 64);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    };
    round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
      round(ctr, key);
    }
    return ctr;
  }
};

/// Buffered stream over Philox blocks. next_unit() returns doubles in the
/// open interval (0,1).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t replica)
      : key_{seed, replica}, ctr_{0, 0, 0, 0} {}

  std::uint64_t next_u64() {
    if (idx_ == 4) refill();
    return buf_[idx_++];
  }

  double next_unit() {
    return (double((next_u64() >> 12)) + 0.5) * 0x1p-52;
  }

  double next_exp() { return -std::log(next_unit()); }

 private:
  void refill() {
    buf_ = Philox4x64::block(ctr_, key_);
    idx_ = 0;
    for (int w = 0; w < 4; ++w)
      if (++ctr_[w] != 0) break;
  }
  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> ctr_;
  std::array<std::uint64_t, 4> buf_{};
  int idx_ = 4;
};

/// Walker alias table over a finite pmf; one u64 per draw (high bits pick
/// the slot, low 52 bits the coin). Supports up to 2^12 outcomes so the two
/// bit fields stay independent.
class AliasTable {
 public:
  explicit AliasTable(const std::vector<double>& weights) {
    n_ = std::uint32_t(weights.size());
    if (n_ == 0 || n_ > 4096)
      throw std::invalid_argument("alias: support size must be in [1, 4096]");
    prob_.assign(n_, 0.0);
    alias_.assign(n_, 0);
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("alias: negative weight");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("alias: zero total weight");
    std::vector<double> scaled(n_);
    for (std::uint32_t i = 0; i < n_; ++i)
      scaled[i] = weights[i] * double(n_) / total;
    std::vector<std::uint32_t> small, large;
    for (std::uint32_t i = 0; i < n_; ++i)
      (scaled[i] < 1.0 ? small : large).push_back(i);
    while (!small.empty() && !large.empty()) {
      const auto s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (auto i : large) prob_[i] = 1.0;
    for (auto i : small) prob_[i] = 1.0;
  }

  std::uint32_t sample(std::uint64_t u) const {
    const auto slot =
        std::uint32_t(((unsigned __int128)u * n_) >> 64);
    const double coin = double(u & ((std::uint64_t(1) << 52) - 1)) * 0x1p-52;
    return coin < prob_[slot] ? slot : alias_[slot];
  }

  std::uint32_t size() const { return n_; }

 private:
  std::uint32_t n_ = 0;
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

enum class Terminal { HorizonReached, Absorbed, ExplodedCap, JumpCap };

inline const char* terminal_name(Terminal t) {
  switch (t) {
    case Terminal::HorizonReached: return "horizon_reached";
    case Terminal::Absorbed: return "absorbed";
    case Terminal::ExplodedCap: return "exploded_cap";
    default: return "jump_cap";
  }
}

struct SimCaps {
  std::uint64_t state_cap = 1'000'000;
  std::uint64_t jump_cap = 10'000'000;
};

/// One trajectory. states has one more entry than jump_times and starts at
/// the initial state; jump_times are strictly increasing.
struct Path {
  std::vector<double> jump_times;
  std::vector<std::uint64_t> states;
  Terminal terminal = Terminal::HorizonReached;
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
};

namespace sim_detail {

/// Per-spec sampling tables, built once.
struct Sampler {
  AliasTable offspring;
  AliasTable immigration;
  double gamma;
  // rate dispatch hoisted out of the jump loop
  enum class RateKind { Linear, Quadratic, PowerGeneral, Table };
  RateKind rate_kind;
  double alpha = 0.0, theta = 0.0;
  const std::vector<double>* table = nullptr;

  explicit Sampler(const ModelSpec& spec)
      : offspring(spec.offspring.probs()),
        immigration(spec.immigration.probs()),
        gamma(spec.gamma) {
    if (spec.rate.is_power()) {
      alpha = spec.rate.alpha();
      theta = spec.rate.theta();
      rate_kind = theta == 1.0   ? RateKind::Linear
                  : theta == 2.0 ? RateKind::Quadratic
                                 : RateKind::PowerGeneral;
    } else {
      rate_kind = RateKind::Table;
      table = &spec.rate.table_values();
    }
  }

  double rate(std::uint64_t i) const {
    switch (rate_kind) {
      case RateKind::Linear: return alpha * double(i);
      case RateKind::Quadratic: return alpha * double(i) * double(i);
      case RateKind::PowerGeneral:
        return i == 0 ? 0.0 : alpha * std::pow(double(i), theta);
      default:
        return i < table->size() ? (*table)[i] : table->back();
    }
  }
};

struct StepOutcome {
  double time;
  std::uint64_t state;
  std::uint64_t jumps;
  Terminal terminal;
  bool hit_target;
  double hit_time;
};

/// Core jump-by-jump construction shared by all drivers: exponential hold
/// at rate r(x) + gamma, then a branching event (offspring k, jump k - 1)
/// with probability r/(r + gamma), else an immigration batch.
template <bool Record>
StepOutcome run_path(const Sampler& sampler, std::uint64_t x0, double horizon,
                     const SimCaps& caps, RngStream& rng,
                     std::optional<std::uint64_t> stop_target, Path* out) {
  std::uint64_t x = x0;
  double t = 0.0;
  std::uint64_t jumps = 0;
  StepOutcome res{0.0, x0, 0, Terminal::HorizonReached, false, 0.0};

  if constexpr (Record) {
    out->jump_times.clear();
    out->states.assign(1, x0);
  }

  for (;;) {
    const double r = sampler.rate(x);
    const double total = r + sampler.gamma;
    if (total <= 0.0) {
      res.terminal = Terminal::Absorbed;
      t = horizon;  // frozen until the horizon
      break;
    }
    const double hold = rng.next_exp() / total;
    if (t + hold > horizon) {
      t = horizon;
      res.terminal = Terminal::HorizonReached;
      break;
    }
    t += hold;
    const double u = rng.next_unit() * total;
    if (u < r) {
      const std::uint64_t k = sampler.offspring.sample(rng.next_u64());
      x = x + k - 1;  // k = 0 is the only down-step
    } else {
      x += sampler.immigration.sample(rng.next_u64());
    }
    ++jumps;
    if constexpr (Record) {
      out->jump_times.push_back(t);
      out->states.push_back(x);
    }
    if (stop_target && x == *stop_target) {
      res.hit_target = true;
      res.hit_time = t;
      res.terminal = Terminal::HorizonReached;
      break;
    }
    if (x >= caps.state_cap) {
      res.terminal = Terminal::ExplodedCap;
      break;
    }
    if (jumps >= caps.jump_cap) {
      res.terminal = Terminal::JumpCap;
      break;
    }
  }
  res.time = t;
  res.state = x;
  res.jumps = jumps;
  return res;
}

/// Runs fn(replica) for replica in [0, n) over a small thread pool.
/// Callers keep determinism by writing results into per-replica slots.
template <class Fn>
void for_each_replica(std::uint64_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0)
    threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::uint64_t>(threads, n ? n : 1));
  if (threads <= 1) {
    for (std::uint64_t r = 0; r < n; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::uint64_t> next{0};
  constexpr std::uint64_t kChunk = 16;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::uint64_t base = next.fetch_add(kChunk);
        if (base >= n) return;
        const std::uint64_t end = std::min(n, base + kChunk);
        for (std::uint64_t r = base; r < end; ++r) fn(r);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sim_detail

/// Exact simulation of one trajectory from the jump-chain construction.
/// Deterministic in (spec, x0, horizon, caps, seed, replica).
inline Path simulate(const ModelSpec& spec, std::uint64_t x0, double horizon,
                     const SimCaps& caps, std::uint64_t seed,
                     std::uint64_t replica) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon <= 0");
  if (caps.state_cap == 0 || caps.jump_cap == 0)
    throw std::invalid_argument("simulate: caps must be positive");
  sim_detail::Sampler sampler(spec);
  RngStream rng(seed, replica);
  Path path;
  path.seed = seed;
  path.replica = replica;
  const auto res = sim_detail::run_path<true>(sampler, x0, horizon, caps, rng,
                                              std::nullopt, &path);
  path.terminal = res.terminal;
  return path;
}

/// Trajectory endpoint without path recording (for large ensembles).
struct PathSummary {
  double time = 0.0;
  std::uint64_t state = 0;
  std::uint64_t jumps = 0;
  Terminal terminal = Terminal::HorizonReached;
  bool hit_target = false;
  double hit_time = 0.0;
};

inline PathSummary simulate_summary(const ModelSpec& spec, std::uint64_t x0,
                                    double horizon, const SimCaps& caps,
                                    std::uint64_t seed, std::uint64_t replica,
                                    std::optional<std::uint64_t> stop_target =
                                        std::nullopt) {
  sim_detail::Sampler sampler(spec);
  RngStream rng(seed, replica);
  const auto res = sim_detail::run_path<false>(sampler, x0, horizon, caps, rng,
                                               stop_target, nullptr);
  PathSummary s;
  s.time = res.time;
  s.state = res.state;
  s.jumps = res.jumps;
  s.terminal = res.terminal;
  s.hit_target = res.hit_target;
  s.hit_time = res.hit_time;
  return s;
}

/// Monte Carlo estimate of the expected first passage to state 0 (counted
/// from the first jump, so a start at 0 measures the return time).
struct HittingEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double censored_fraction = 0.0;
  std::uint64_t replicas = 0;
  std::uint64_t hits = 0;
};

inline HittingEstimate estimate_hitting(const ModelSpec& spec,
                                        std::uint64_t x0,
                                        std::uint64_t replicas,
                                        std::uint64_t seed,
                                        const SimCaps& caps = {},
                                        double horizon = 1e6) {
  if (replicas < 100)
    throw std::invalid_argument("estimate_hitting: needs >= 100 replicas");
  sim_detail::Sampler sampler(spec);
  std::vector<double> hit_time(replicas,
                               std::numeric_limits<double>::quiet_NaN());
  sim_detail::for_each_replica(replicas, [&](std::uint64_t r) {
    RngStream rng(seed, r);
    const auto res = sim_detail::run_path<false>(sampler, x0, horizon, caps,
                                                 rng, 0, nullptr);
    if (res.hit_target) hit_time[r] = res.hit_time;
  });
  HittingEstimate est;
  est.replicas = replicas;
  double sum = 0.0;
  for (double h : hit_time)
    if (!std::isnan(h)) {
      ++est.hits;
      sum += h;
    }
  est.censored_fraction = double(replicas - est.hits) / double(replicas);
  if (est.hits == 0)
    throw std::runtime_error(
        "estimate_hitting: every path was censored; increase the horizon or "
        "the caps");
  est.mean = sum / double(est.hits);
  double ss = 0.0;
  for (double h : hit_time)
    if (!std::isnan(h)) ss += (h - est.mean) * (h - est.mean);
  if (est.hits > 1)
    est.std_error = std::sqrt(ss / double(est.hits - 1) / double(est.hits));
  return est;
}

/// Time-weighted state occupation frequencies past a burn-in, averaged over
/// replicas. States at or above max_state go to the overflow bucket.
struct OccupationResult {
  std::vector<double> freq;
  double overflow = 0.0;
  double total_time = 0.0;
};

inline OccupationResult occupation_frequencies(
    const ModelSpec& spec, std::uint64_t x0, double horizon, double burn_in,
    std::uint64_t replicas, std::uint64_t seed, std::size_t max_state = 1024,
    const SimCaps& caps = {}) {
  if (!(horizon > burn_in))
    throw std::invalid_argument("occupation: horizon must exceed burn_in");
  sim_detail::Sampler sampler(spec);

  // Fixed-size replica blocks are merged in block order, so the result does
  // not depend on the thread count.
  constexpr std::uint64_t kBlock = 64;
  const std::uint64_t n_blocks = (replicas + kBlock - 1) / kBlock;
  std::vector<std::vector<double>> block_hist(
      n_blocks, std::vector<double>(max_state + 1, 0.0));

  sim_detail::for_each_replica(n_blocks, [&](std::uint64_t blk) {
    auto& hist = block_hist[blk];
    const std::uint64_t lo = blk * kBlock;
    const std::uint64_t hi = std::min(replicas, lo + kBlock);
    for (std::uint64_t rep = lo; rep < hi; ++rep) {
      RngStream rng(seed, rep);
      std::uint64_t x = x0;
      double t = 0.0;
      std::uint64_t jumps = 0;
      for (;;) {
        const double r = sampler.rate(x);
        const double total = r + sampler.gamma;
        double next_t;
        if (total <= 0.0)
          next_t = horizon;
        else
          next_t = t + rng.next_exp() / total;
        const double seg_lo = std::max(t, burn_in);
        const double seg_hi = std::min(next_t, horizon);
        if (seg_hi > seg_lo) {
          if (x < max_state)
            hist[x] += seg_hi - seg_lo;
          else
            hist[max_state] += seg_hi - seg_lo;
        }
        if (next_t >= horizon || total <= 0.0) break;
        t = next_t;
        const double u = rng.next_unit() * total;
        if (u < r)
          x = x + sampler.offspring.sample(rng.next_u64()) - 1;
        else
          x += sampler.immigration.sample(rng.next_u64());
        if (x >= caps.state_cap || ++jumps >= caps.jump_cap) break;
      }
    }
  });

  OccupationResult out;
  out.freq.assign(max_state, 0.0);
  for (const auto& hist : block_hist) {
    for (std::size_t s = 0; s < max_state; ++s) out.freq[s] += hist[s];
    out.overflow += hist[max_state];
  }
  for (double f : out.freq) out.total_time += f;
  out.total_time += out.overflow;
  if (out.total_time > 0.0) {
    for (double& f : out.freq) f /= out.total_time;
    out.overflow /= out.total_time;
  }
  return out;
}

}  // namespace nlbranch
