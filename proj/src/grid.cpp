#include "vidrest/grid.hpp"

#include <cmath>
#include <sstream>

namespace vidrest {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Length: return "length error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Serialization: return "serialization error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

Grid::Grid(int height, int width, int channels, double fill)
    : h_(height), w_(width), c_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
        throw Error(ErrorKind::Shape, "negative grid dimension");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

std::string Grid::shape_string() const {
    std::ostringstream os;
    os << '(' << h_ << ", " << w_ << ", " << c_ << ')';
    return os.str();
}

FlowField::FlowField(Grid g) : Grid(std::move(g)) {
    if (channels() != 2) {
        throw Error(ErrorKind::Shape, "flow field needs 2 channels, got " + shape_string());
    }
}

void FrameSequence::validate() const {
    if (frames.empty()) return;
    const Frame& first = frames.front();
    if (first.height() < 1 || first.width() < 1 || first.channels() != 3) {
        throw Error(ErrorKind::Shape, "frames must be h x w x 3 with h, w >= 1, got " +
                                          first.shape_string());
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (!frames[i].same_shape(first)) {
            throw Error(ErrorKind::Shape, "frame " + std::to_string(i) + " has shape " +
                                              frames[i].shape_string() + ", expected " +
                                              first.shape_string());
        }
        for (double v : frames[i].values()) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw Error(ErrorKind::Parameter,
                            "frame " + std::to_string(i) + " has a value outside [0, 1]");
            }
        }
    }
}

} // namespace vidrest
