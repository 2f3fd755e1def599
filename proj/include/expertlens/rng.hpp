#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (key, counter) through the SplitMix64
// finalizer, so any stream can be reproduced independently of thread
// scheduling or of how many draws other streams made:
//
//   mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//            return z ^ (z >> 31)
//   draw(key, i) = mix(key + (i + 1) * 0x9E3779B97F4A7C15)
//
// Keys are derived hierarchically: derive(parent, tag) = mix(parent ^ mix(tag + GOLDEN)).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace expertlens {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

constexpr std::uint64_t derive_one(std::uint64_t parent, std::uint64_t tag) noexcept {
  return splitmix_finalize(parent ^ splitmix_finalize(tag + kGolden));
}

template <typename T>
constexpr std::uint64_t tag_bits(const T& tag) noexcept {
  if constexpr (std::is_integral_v<T> || std::is_enum_v<T>) {
    return static_cast<std::uint64_t>(tag);
  } else {
    return fnv1a(std::string_view(tag));
  }
}

}  // namespace detail

/// Child key of `parent` for a path of integer or string tags.
template <typename... Tags>
  requires(sizeof...(Tags) >= 1)
constexpr std::uint64_t derive_key(std::uint64_t parent, const Tags&... tags) noexcept {
  std::uint64_t k = parent;
  ((k = detail::derive_one(k, detail::tag_bits(tags))), ...);
  return k;
}

/// Stateless draw `index` of stream `key`.
constexpr std::uint64_t counter_draw(std::uint64_t key, std::uint64_t index) noexcept {
  return splitmix_finalize(key + (index + 1) * kGolden);
}

/// 53-bit uniform in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Standard normal as a pure function of (key, index), via Box-Muller on two
/// sub-draws. Only the cosine branch is used.
inline double counter_normal(std::uint64_t key, std::uint64_t index) noexcept {
  const double u1 = 1.0 - to_unit(counter_draw(key, 2 * index));  // (0, 1]
  const double u2 = to_unit(counter_draw(key, 2 * index + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential view of one counter stream.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next() noexcept { return counter_draw(key_, counter_++); }

  constexpr double uniform() noexcept { return to_unit(next()); }

  double normal() noexcept { return counter_normal(key_, counter_++); }

  /// Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// First `count` elements of a Fisher-Yates shuffle of `items` (in place);
  /// a uniform sample without replacement.
  template <typename T>
  void partial_shuffle(std::span<T> items, std::size_t count) noexcept {
    const std::size_t n = items.size();
    for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
      std::swap(items[i], items[i + below(n - i)]);
    }
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace expertlens
