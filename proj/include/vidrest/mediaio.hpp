#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vidrest/grid.hpp"
#include "vidrest/report.hpp"

namespace vidrest {

namespace fs = std::filesystem;

// PNM (P5/P6, maxval 255). P5 is expanded to three identical channels.
Frame read_pnm(const fs::path& path);
void write_pnm(const Frame& frame, const fs::path& path);

// Reads every .ppm/.pgm/.pnm in `dir`, in lexicographic filename order.
FrameSequence read_frames(const fs::path& dir);
// Writes frame_00000.ppm, frame_00001.ppm, ... creating `dir` if needed.
void write_frames(const FrameSequence& seq, const fs::path& dir);

// Middlebury .flo: "PIEH" tag (float 202021.25), i32 width, i32 height,
// interleaved (u, v) float32, little-endian. Values are stored as float32.
FlowField read_flo(const fs::path& path);
void write_flo(const FlowField& flow, const fs::path& path);

inline constexpr float kFloMagic = 202021.25f;

// "RTF1", u32 rank, u32 dims[rank], float32 payload, little-endian.
struct RawTensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
};

RawTensor read_raw_tensor(const fs::path& path);
void write_raw_tensor(const RawTensor& tensor, const fs::path& path);
RawTensor to_raw_tensor(const Grid& grid);

void write_report(const MetricsReport& report, const fs::path& path);
void write_json(const nlohmann::ordered_json& j, const fs::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view bytes);

} // namespace vidrest
