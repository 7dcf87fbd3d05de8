#pragma once

#include "catalpa/config.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace catalpa {

/// Identifies a pushed root frame. Frames are popped in LIFO order.
struct FrameToken {
    std::uint32_t base = 0;
    std::uint32_t size = 0;
    std::uint32_t depth = 0;

    friend bool operator==(const FrameToken&, const FrameToken&) = default;
};

/// Conservatively scanned root storage standing in for the native stack and
/// globals. Any bit pattern may be stored; nothing above `top` is scanned.
class RootRegion {
public:
    RootRegion(std::size_t capacity_words, std::size_t global_words);

    FrameToken push(std::span<const Word> words);
    void pop(FrameToken frame);

    void set(FrameToken frame, std::size_t index, Word w);
    Word get(FrameToken frame, std::size_t index) const;

    void set_global(std::size_t index, Word w);
    Word global(std::size_t index) const;
    std::size_t global_count() const { return globals_.size(); }

    std::size_t top() const { return top_; }
    std::size_t capacity() const { return words_.size(); }
    std::size_t frame_depth() const { return frames_.size(); }

    /// Number of words a root scan visits.
    std::size_t scan_size() const { return globals_.size() + top_; }

    template <class F>
    void for_each_word(F&& f) const {
        for (const Word w : globals_) f(w);
        for (std::size_t i = 0; i < top_; ++i) f(words_[i]);
    }

private:
    void check_live(FrameToken frame, std::size_t index) const;

    std::vector<Word> words_;
    std::size_t top_ = 0;
    std::vector<FrameToken> frames_;
    std::vector<Word> globals_;
};

} // namespace catalpa
