#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace vidrest {

// Per-frame image quality plus per-pair temporal consistency for one video.
struct MetricsReport {
    std::vector<double> psnr;    // per frame, +inf for identical frames
    std::vector<double> ssim;    // per frame
    std::vector<double> e_warp;  // per adjacent pair, raw (not x1e3)
    std::vector<double> e_inter; // per interior frame, already x255
    std::vector<std::pair<std::string, std::string>> metadata;
};

std::optional<double> mean_of(const std::vector<double>& values);

// Stable-key-order JSON form. Throws Serialization on non-finite values,
// except +inf PSNR which is written as the string "inf".
nlohmann::ordered_json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::ordered_json& j);

} // namespace vidrest
