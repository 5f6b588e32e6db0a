#pragma once

#include <cstdint>
#include <vector>

#include "gisd/objective.hpp"

namespace gisd {

/// Bounded FIFO of transitions. Sampling is i.i.d. uniform with replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    /// i = 0 is the oldest retained record.
    const Transition& at(std::size_t i) const;

    std::vector<Transition> sample(std::size_t n, Rng& rng) const;

    /// Restores a buffer written out oldest-first (checkpoint resume).
    void restore(std::vector<Transition> oldest_first, std::uint64_t inserted);

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t head_ = 0;  // index of the oldest record once full
    std::uint64_t inserted_ = 0;
};

}  // namespace gisd
