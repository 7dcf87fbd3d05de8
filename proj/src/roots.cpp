#include "catalpa/roots.hpp"

#include <algorithm>
#include <string>

namespace catalpa {

RootRegion::RootRegion(std::size_t capacity_words, std::size_t global_words)
    : words_(capacity_words, 0), globals_(global_words, 0) {}

FrameToken RootRegion::push(std::span<const Word> words) {
    if (words.size() > words_.size() - top_) {
        throw ContractViolation("root region overflow");
    }
    FrameToken t{static_cast<std::uint32_t>(top_), static_cast<std::uint32_t>(words.size()),
                 static_cast<std::uint32_t>(frames_.size())};
    std::copy(words.begin(), words.end(), words_.begin() + static_cast<std::ptrdiff_t>(top_));
    top_ += words.size();
    frames_.push_back(t);
    return t;
}

void RootRegion::pop(FrameToken frame) {
    if (frames_.empty()) throw ContractViolation("root frame underflow");
    if (frames_.back() != frame) throw ContractViolation("root frames must be popped in LIFO order");
    frames_.pop_back();
    // Scrub so stale words cannot be rescanned if the region regrows.
    std::fill(words_.begin() + frame.base, words_.begin() + frame.base + frame.size, Word{0});
    top_ = frame.base;
}

void RootRegion::check_live(FrameToken frame, std::size_t index) const {
    if (frame.depth >= frames_.size() || frames_[frame.depth] != frame) {
        throw ContractViolation("root frame is not live");
    }
    if (index >= frame.size) {
        throw ContractViolation("root frame index " + std::to_string(index) + " out of range");
    }
}

void RootRegion::set(FrameToken frame, std::size_t index, Word w) {
    check_live(frame, index);
    words_[frame.base + index] = w;
}

Word RootRegion::get(FrameToken frame, std::size_t index) const {
    check_live(frame, index);
    return words_[frame.base + index];
}

void RootRegion::set_global(std::size_t index, Word w) {
    if (index >= globals_.size()) throw ContractViolation("global root index out of range");
    globals_[index] = w;
}

Word RootRegion::global(std::size_t index) const {
    if (index >= globals_.size()) throw ContractViolation("global root index out of range");
    return globals_[index];
}

} // namespace catalpa
