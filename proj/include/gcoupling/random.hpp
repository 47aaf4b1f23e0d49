#pragma once

// Counter-based keyed random streams.
//
// Every variate in the library is a pure function of a 64-bit key and a
// draw counter. Keys are derived hierarchically from a user seed and a list
// of integer or string tags, so two queries that name the same
// (seed, tags..., counter) always see the same number, no matter in which
// order or on which thread they are issued.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace gcoupling {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

// SplitMix64 / Stafford variant 13 finalizer.
constexpr std::uint64_t fmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t as_tag(std::uint64_t v) noexcept { return v; }
constexpr std::uint64_t as_tag(std::int64_t v) noexcept { return static_cast<std::uint64_t>(v); }
constexpr std::uint64_t as_tag(int v) noexcept { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }
constexpr std::uint64_t as_tag(unsigned v) noexcept { return v; }
constexpr std::uint64_t as_tag(std::string_view v) noexcept { return fnv1a(v); }
constexpr std::uint64_t as_tag(const char* v) noexcept { return fnv1a(v); }

}  // namespace detail

/// Derives a child key from a parent key and one tag.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t tag) noexcept {
  return detail::fmix64(parent ^ detail::fmix64(tag * 0xd1b54a32d192ed03ULL + detail::golden_gamma));
}

/// Derives a key from a seed and any number of integer / string tags.
template <typename... Tags>
constexpr std::uint64_t stream_key(std::uint64_t seed, Tags&&... tags) noexcept {
  std::uint64_t key = detail::fmix64(seed + detail::golden_gamma);
  ((key = derive_key(key, detail::as_tag(tags))), ...);
  return key;
}

/// A reproducible stream of variates: draw i is fmix64(key + (i+1)*gamma).
///
/// The stream is a cheap value type; copying it forks the counter.
class KeyedStream {
 public:
  explicit constexpr KeyedStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t position() const noexcept { return counter_; }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return detail::fmix64(key_ + counter_ * detail::golden_gamma);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  /// Exp(1) variate.
  double exponential() noexcept { return -std::log(uniform()); }

  /// Poisson(mean) by sequential inversion; large means are split into
  /// chunks so the CDF recursion never underflows.
  std::uint64_t poisson(double mean) noexcept {
    std::uint64_t total = 0;
    constexpr double chunk = 30.0;
    while (mean > chunk) {
      total += poisson_small(chunk);
      mean -= chunk;
    }
    return total + poisson_small(mean);
  }

 private:
  std::uint64_t poisson_small(double mean) noexcept {
    if (mean <= 0.0) return 0;
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gcoupling
