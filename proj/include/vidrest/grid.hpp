#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidrest {

enum class ErrorKind {
    Format,
    Shape,
    Length,
    Io,
    Parameter,
    Config,
    Index,
    Serialization,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; the kind says which contract was
// violated.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Dense h x w x c array of doubles, row-major with interleaved channels.
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, int channels, double fill = 0.0);

    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    int channels() const noexcept { return c_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int y, int x, int k = 0) noexcept { return data_[index(y, x, k)]; }
    double at(int y, int x, int k = 0) const noexcept { return data_[index(y, x, k)]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Grid& other) const noexcept {
        return h_ == other.h_ && w_ == other.w_ && c_ == other.c_;
    }
    bool same_extent(const Grid& other) const noexcept {
        return h_ == other.h_ && w_ == other.w_;
    }

    std::string shape_string() const;

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t index(int y, int x, int k) const noexcept {
        return (static_cast<std::size_t>(y) * w_ + x) * c_ + k;
    }

    int h_ = 0;
    int w_ = 0;
    int c_ = 0;
    std::vector<double> data_;
};

// Displacement field in pixels: channel 0 = u (horizontal), 1 = v (vertical).
class FlowField : public Grid {
public:
    FlowField() = default;
    FlowField(int height, int width) : Grid(height, width, 2) {}
    explicit FlowField(Grid g);

    double& u(int y, int x) noexcept { return at(y, x, 0); }
    double& v(int y, int x) noexcept { return at(y, x, 1); }
    double u(int y, int x) const noexcept { return at(y, x, 0); }
    double v(int y, int x) const noexcept { return at(y, x, 1); }
};

// 1 = occluded / unreliable, 0 = valid.
class OcclusionMask : public Grid {
public:
    OcclusionMask() = default;
    OcclusionMask(int height, int width, double fill = 0.0) : Grid(height, width, 1, fill) {}
};

// Forward-backward confidence in (0, 1].
class ConfidenceMap : public Grid {
public:
    ConfidenceMap() = default;
    ConfidenceMap(int height, int width, double fill = 1.0) : Grid(height, width, 1, fill) {}
};

using Frame = Grid;
using LatentGrid = Grid;

struct FrameSequence {
    std::vector<Frame> frames;
    std::optional<double> frame_rate;

    std::size_t size() const noexcept { return frames.size(); }
    bool empty() const noexcept { return frames.empty(); }
    int height() const { return frames.empty() ? 0 : frames.front().height(); }
    int width() const { return frames.empty() ? 0 : frames.front().width(); }

    // Throws Shape on mixed extents / non-RGB frames, Parameter on values
    // outside [0, 1].
    void validate() const;
};

} // namespace vidrest
