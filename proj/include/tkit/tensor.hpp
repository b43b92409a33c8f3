#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <new>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace tkit {

// ─── Logit buffer accounting ────────────────────────────────────────────────

/// Process-wide byte counter for logit-lattice storage (logits and their
/// gradients). Every allocation made through LogitAllocator is recorded, so
/// the trainer can report the true peak footprint of the logit tensor.
class LogitBufferMeter {
public:
    static void on_allocate(std::size_t bytes) {
        const std::size_t now = current_.fetch_add(bytes) + bytes;
        std::size_t prev = peak_.load();
        while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
        }
    }
    static void on_deallocate(std::size_t bytes) { current_.fetch_sub(bytes); }

    static std::size_t current() { return current_.load(); }
    static std::size_t peak() { return peak_.load(); }
    /// Resets the high-water mark to the bytes currently live.
    static void reset_peak() { peak_.store(current_.load()); }

private:
    static inline std::atomic<std::size_t> current_{0};
    static inline std::atomic<std::size_t> peak_{0};
};

template <typename T>
struct LogitAllocator {
    using value_type = T;

    LogitAllocator() = default;
    template <typename U>
    LogitAllocator(const LogitAllocator<U> &) noexcept {}

    T *allocate(std::size_t n) {
        auto *p = static_cast<T *>(::operator new(n * sizeof(T)));
        LogitBufferMeter::on_allocate(n * sizeof(T));
        return p;
    }
    void deallocate(T *p, std::size_t n) noexcept {
        LogitBufferMeter::on_deallocate(n * sizeof(T));
        ::operator delete(p);
    }

    template <typename U>
    bool operator==(const LogitAllocator<U> &) const noexcept {
        return true;
    }
};

using LogitBuffer = std::vector<double, LogitAllocator<double>>;

// ─── Matrix ─────────────────────────────────────────────────────────────────

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix &o) const { return rows == o.rows && cols == o.cols; }

    friend bool operator==(const Matrix &, const Matrix &) = default;
};

// ─── LogitLattice ───────────────────────────────────────────────────────────

/// T x (U+1) x L table of unnormalized joint-network outputs.
///
/// When `label_map` is present the label axis is a compact sampled
/// vocabulary: entry i holds the vocabulary id of compact index i, and the
/// blank occupies compact index 0. Without a map the label axis is the full
/// vocabulary indexed by id.
class LogitLattice {
public:
    LogitLattice() = default;
    LogitLattice(std::size_t frames, std::size_t target_length, std::size_t labels,
                 std::optional<std::vector<int>> label_map = std::nullopt)
        : frames_(frames), target_length_(target_length), labels_(labels),
          label_map_(std::move(label_map)) {
        if (labels_ == 0) {
            throw std::invalid_argument("LogitLattice: label axis must be non-empty");
        }
        if (label_map_ && label_map_->size() != labels_) {
            throw std::invalid_argument("LogitLattice: label_map size differs from label axis");
        }
        if (label_map_) {
            auto ids = *label_map_;
            std::sort(ids.begin(), ids.end());
            if (ids.front() < 0 || std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
                throw std::invalid_argument("LogitLattice: label_map must be injective over "
                                            "non-negative ids");
            }
        }
        data_.assign(frames_ * (target_length_ + 1) * labels_, 0.0);
    }

    std::size_t frames() const { return frames_; }
    std::size_t target_length() const { return target_length_; }
    std::size_t labels() const { return labels_; }
    std::size_t element_count() const { return data_.size(); }

    std::size_t offset(std::size_t t, std::size_t u) const {
        return (t * (target_length_ + 1) + u) * labels_;
    }
    std::span<double> at(std::size_t t, std::size_t u) { return {data_.data() + offset(t, u), labels_}; }
    std::span<const double> at(std::size_t t, std::size_t u) const {
        return {data_.data() + offset(t, u), labels_};
    }

    LogitBuffer &data() { return data_; }
    const LogitBuffer &data() const { return data_; }
    const std::optional<std::vector<int>> &label_map() const { return label_map_; }

private:
    std::size_t frames_ = 0;
    std::size_t target_length_ = 0;
    std::size_t labels_ = 0;
    std::optional<std::vector<int>> label_map_;
    LogitBuffer data_;
};

} // namespace tkit
