#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "revrank/common.hpp"

namespace revrank {

// Bijection between display slots and page items. slot_to_item[s] is the
// index (in original page order) of the item shown at 0-based slot s.
class Permutation {
public:
    Permutation() = default;

    explicit Permutation(std::vector<std::size_t> slot_to_item)
        : slot_to_item_(std::move(slot_to_item)) {
        std::vector<bool> seen(slot_to_item_.size(), false);
        for (std::size_t v : slot_to_item_) {
            if (v >= slot_to_item_.size() || seen[v])
                throw ArgumentError("permutation is not a bijection on " +
                                    std::to_string(slot_to_item_.size()) + " slots");
            seen[v] = true;
        }
    }

    static Permutation identity(std::size_t n) {
        std::vector<std::size_t> v(n);
        std::iota(v.begin(), v.end(), 0);
        return Permutation(std::move(v));
    }

    std::size_t size() const { return slot_to_item_.size(); }
    std::size_t item_at(std::size_t slot) const { return slot_to_item_[slot]; }
    const std::vector<std::size_t>& slots() const { return slot_to_item_; }

    std::size_t slot_of(std::size_t item) const {
        for (std::size_t s = 0; s < slot_to_item_.size(); ++s)
            if (slot_to_item_[s] == item) return s;
        throw ArgumentError("item index out of range");
    }

    // New permutation with the items at display slots a and b exchanged.
    Permutation swapped(std::size_t a, std::size_t b) const {
        Permutation p = *this;
        std::swap(p.slot_to_item_[a], p.slot_to_item_[b]);
        return p;
    }

    bool is_identity() const {
        for (std::size_t s = 0; s < slot_to_item_.size(); ++s)
            if (slot_to_item_[s] != s) return false;
        return true;
    }

    bool operator==(const Permutation& o) const = default;

private:
    std::vector<std::size_t> slot_to_item_;
};

}  // namespace revrank
