#pragma once

#include <algorithm>
#include <string>

#include "chainsim/types.hpp"

namespace chainsim {

// Compute resources of a POP or the footprint of one function instance.
struct ResourceVector {
    double cpu = 0.0;
    double mem = 0.0;
    double disk = 0.0;

    ResourceVector& operator+=(const ResourceVector& o) {
        cpu += o.cpu; mem += o.mem; disk += o.disk;
        return *this;
    }
    ResourceVector& operator-=(const ResourceVector& o) {
        cpu -= o.cpu; mem -= o.mem; disk -= o.disk;
        return *this;
    }
    friend ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
    friend ResourceVector operator-(ResourceVector a, const ResourceVector& b) { return a -= b; }

    bool fits_into(const ResourceVector& avail) const {
        return cpu <= avail.cpu && mem <= avail.mem && disk <= avail.disk;
    }
    bool operator==(const ResourceVector& o) const {
        return cpu == o.cpu && mem == o.mem && disk == o.disk;
    }
    bool non_negative() const { return cpu >= 0.0 && mem >= 0.0 && disk >= 0.0; }

    // Scalar used to sort functions before placement (largest footprint first).
    double magnitude() const { return cpu + mem + disk; }

    std::string str() const {
        return "cpu=" + std::to_string(cpu) + " mem=" + std::to_string(mem) +
               " disk=" + std::to_string(disk);
    }
};

} // namespace chainsim
