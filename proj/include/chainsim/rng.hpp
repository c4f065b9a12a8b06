#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "chainsim/types.hpp"

namespace chainsim {

// Deterministic generator with named substreams (per link, per function).
// Hand-rolled splitmix64/xorshift mix because the standard distributions are
// not bit-portable across library implementations and the determinism
// contract requires byte-identical reports for one seed everywhere.
class RngStream {
  public:
    explicit RngStream(uint64_t seed) : _seed(seed) {}

    // Substream identity is (name) hashed with the master seed. The same
    // name always yields the same sequence for a given seed.
    class Sub {
      public:
        Sub() : _state(0x9e3779b97f4a7c15ull) {}
        explicit Sub(uint64_t state) : _state(state ? state : 0x9e3779b97f4a7c15ull) {}

        uint64_t next_u64() {
            // splitmix64 step
            uint64_t z = (_state += 0x9e3779b97f4a7c15ull);
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            return z ^ (z >> 31);
        }
        // Uniform in [0,1) with 53 significant bits.
        double next_double() {
            return double(next_u64() >> 11) * (1.0 / 9007199254740992.0);
        }
        bool bernoulli(double p) {
            if (p <= 0.0) { next_u64(); return false; }
            if (p >= 1.0) { next_u64(); return true; }
            return next_double() < p;
        }
        uint64_t next_below(uint64_t n) {
            return n == 0 ? 0 : next_u64() % n;
        }

      private:
        uint64_t _state;
    };

    Sub& substream(const std::string& name) {
        auto it = _subs.find(name);
        if (it == _subs.end()) {
            uint64_t h = _seed;
            for (char c : name) {
                h ^= uint8_t(c);
                h *= 0x100000001b3ull;
                h ^= h >> 29;
            }
            it = _subs.emplace(name, Sub(h)).first;
        }
        return it->second;
    }

    uint64_t seed() const { return _seed; }

  private:
    uint64_t _seed;
    std::map<std::string, Sub> _subs;
};

} // namespace chainsim
