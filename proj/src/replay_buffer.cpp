#include "gisd/replay_buffer.hpp"

#include <stdexcept>

namespace gisd {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
}

void ReplayBuffer::push(Transition t) {
    ++inserted_;
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
        return;
    }
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("ReplayBuffer::at");
    return data_[(head_ + i) % data_.size()];
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    if (data_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(data_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data_.size())))]);
    }
    return out;
}

void ReplayBuffer::restore(std::vector<Transition> oldest_first, std::uint64_t inserted) {
    if (oldest_first.size() > capacity_) throw std::invalid_argument("ReplayBuffer::restore: too many");
    data_ = std::move(oldest_first);
    head_ = 0;
    inserted_ = inserted;
}

}  // namespace gisd
