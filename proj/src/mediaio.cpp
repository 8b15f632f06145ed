#include "vidrest/mediaio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace vidrest {

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::Length, "truncated payload in " + name_);
        }
    }

    std::string_view bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

// Header token reader for PNM: whitespace separated, '#' comments to EOL.
struct PnmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(std::string_view bytes, const std::string& name) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto token = [&]() -> std::string {
        skip_space();
        std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) &&
               bytes[pos] != '#') {
            ++pos;
        }
        if (start == pos) throw Error(ErrorKind::Format, "malformed PNM header in " + name);
        return std::string(bytes.substr(start, pos - start));
    };
    auto number = [&]() -> int {
        std::string t = token();
        if (t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            throw Error(ErrorKind::Format, "malformed PNM header field '" + t + "' in " + name);
        }
        return std::stoi(t);
    };

    PnmHeader h;
    h.magic = token();
    if (h.magic != "P5" && h.magic != "P6") {
        throw Error(ErrorKind::Format, "unsupported PNM magic '" + h.magic + "' in " + name);
    }
    h.width = number();
    h.height = number();
    h.maxval = number();
    if (h.width < 1 || h.height < 1) throw Error(ErrorKind::Format, "empty PNM image " + name);
    if (h.maxval != 255) throw Error(ErrorKind::Format, "PNM maxval must be 255 in " + name);
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw Error(ErrorKind::Format, "missing separator after PNM header in " + name);
    }
    h.data_offset = pos + 1;
    return h;
}

bool is_pnm(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

unsigned char quantize(double v) {
    double q = std::round(v * 255.0);
    return static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
}

} // namespace

Frame read_pnm(const fs::path& path) {
    const std::string bytes = slurp(path);
    const PnmHeader h = parse_pnm_header(bytes, path.string());
    const int comps = h.magic == "P6" ? 3 : 1;
    const std::size_t need = static_cast<std::size_t>(h.width) * h.height * comps;
    if (bytes.size() - h.data_offset < need) {
        throw Error(ErrorKind::Length, "truncated PNM payload in " + path.string());
    }
    Frame f(h.height, h.width, 3);
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            for (int k = 0; k < 3; ++k) {
                std::size_t idx = (static_cast<std::size_t>(y) * h.width + x) * comps + (comps == 3 ? k : 0);
                f.at(y, x, k) = src[idx] / 255.0;
            }
        }
    }
    return f;
}

void write_pnm(const Frame& frame, const fs::path& path) {
    if (frame.channels() != 3 && frame.channels() != 1) {
        throw Error(ErrorKind::Shape, "PNM frames need 1 or 3 channels, got " + frame.shape_string());
    }
    const bool gray = frame.channels() == 1;
    std::string out = (gray ? "P5\n" : "P6\n") + std::to_string(frame.width()) + " " +
                      std::to_string(frame.height()) + "\n255\n";
    out.reserve(out.size() + frame.size());
    for (double v : frame.values()) out.push_back(static_cast<char>(quantize(v)));
    write_file_atomic(path, out);
}

FrameSequence read_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_pnm(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) throw Error(ErrorKind::Io, "no frames in " + dir.string());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    FrameSequence seq;
    for (const auto& f : files) seq.frames.push_back(read_pnm(f));
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
        if (!seq.frames[i].same_shape(seq.frames[0])) {
            throw Error(ErrorKind::Shape, "inconsistent frame dimensions: " + files[i].filename().string());
        }
    }
    return seq;
}

void write_frames(const FrameSequence& seq, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    char name[32];
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "frame_%05zu.ppm", i);
        write_pnm(seq.frames[i], dir / name);
    }
}

FlowField read_flo(const fs::path& path) {
    const std::string bytes = slurp(path);
    ByteReader r(bytes, path.string());
    if (bytes.size() < 4 || bytes.compare(0, 4, "PIEH") != 0) {
        throw Error(ErrorKind::Format, "bad .flo magic in " + path.string());
    }
    r.f32();
    const auto w = static_cast<std::int32_t>(r.u32());
    const auto h = static_cast<std::int32_t>(r.u32());
    if (w < 1 || h < 1 || w > (1 << 16) || h > (1 << 16)) {
        throw Error(ErrorKind::Format, "bad .flo dimensions in " + path.string());
    }
    if (r.remaining() < static_cast<std::size_t>(w) * h * 8) {
        throw Error(ErrorKind::Length, "truncated .flo payload in " + path.string());
    }
    FlowField flow(h, w);
    for (double& v : flow.values()) {
        float f = r.f32();
        if (!std::isfinite(f)) throw Error(ErrorKind::Format, "non-finite flow value in " + path.string());
        v = f;
    }
    return flow;
}

void write_flo(const FlowField& flow, const fs::path& path) {
    std::string out;
    out.reserve(12 + flow.size() * 4);
    put_f32(out, kFloMagic);
    put_u32(out, static_cast<std::uint32_t>(flow.width()));
    put_u32(out, static_cast<std::uint32_t>(flow.height()));
    for (double v : flow.values()) put_f32(out, static_cast<float>(v));
    write_file_atomic(path, out);
}

RawTensor read_raw_tensor(const fs::path& path) {
    const std::string bytes = slurp(path);
    ByteReader r(bytes, path.string());
    if (bytes.size() < 4 || bytes.compare(0, 4, "RTF1") != 0) {
        throw Error(ErrorKind::Format, "bad RawTensorFile magic in " + path.string());
    }
    r.take(4);
    RawTensor t;
    const std::uint32_t rank = r.u32();
    if (rank > 16) throw Error(ErrorKind::Format, "implausible tensor rank in " + path.string());
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.dims.push_back(r.u32());
        count *= t.dims.back();
    }
    if (r.remaining() != count * 4) {
        throw Error(ErrorKind::Length, "payload length does not match dims in " + path.string());
    }
    t.values.resize(count);
    for (double& v : t.values) {
        float f = r.f32();
        if (!std::isfinite(f)) throw Error(ErrorKind::Format, "non-finite tensor value in " + path.string());
        v = f;
    }
    return t;
}

void write_raw_tensor(const RawTensor& tensor, const fs::path& path) {
    std::size_t count = 1;
    for (auto d : tensor.dims) count *= d;
    if (count != tensor.values.size()) {
        throw Error(ErrorKind::Shape, "tensor dims do not match value count");
    }
    std::string out = "RTF1";
    put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_u32(out, d);
    for (double v : tensor.values) put_f32(out, static_cast<float>(v));
    write_file_atomic(path, out);
}

RawTensor to_raw_tensor(const Grid& grid) {
    RawTensor t;
    t.dims = {static_cast<std::uint32_t>(grid.height()), static_cast<std::uint32_t>(grid.width()),
              static_cast<std::uint32_t>(grid.channels())};
    t.values.assign(grid.values().begin(), grid.values().end());
    return t;
}

void write_report(const MetricsReport& report, const fs::path& path) {
    write_json(report_to_json(report), path);
}

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
    write_file_atomic(path, j.dump(2) + "\n");
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw Error(ErrorKind::Io, "short write to " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorKind::Io, "cannot rename into " + path.string() + ": " + ec.message());
    }
}

} // namespace vidrest
