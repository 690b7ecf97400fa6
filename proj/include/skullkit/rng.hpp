#pragma once

#include <cstdint>
#include <vector>

namespace skullkit {

// splitmix64 stream. Self-contained so that every artifact (phantoms, splits,
// defect placement, parameter init) is bit-identical across platforms and
// standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    // rejection-free modulo is fine here: n is tiny compared to 2^64
    return n == 0 ? 0 : next_u64() % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  uint64_t state_;
};

// Derive a child seed from a parent seed and a stream tag.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  Rng r(seed ^ (tag * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
  return r.next_u64();
}

// FNV-1a over raw bytes; used by determinism tests and checkpoint comparison.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace skullkit
