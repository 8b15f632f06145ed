#include "vidrest/report.hpp"

#include <cmath>
#include <numeric>

#include "vidrest/grid.hpp"

namespace vidrest {

using nlohmann::ordered_json;

std::optional<double> mean_of(const std::vector<double>& values) {
    if (values.empty()) return std::nullopt;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

ordered_json number(double v, const char* field, bool allow_pos_inf) {
    if (std::isfinite(v)) return v;
    if (allow_pos_inf && v > 0 && std::isinf(v)) return "inf";
    throw Error(ErrorKind::Serialization, std::string("non-finite value in ") + field);
}

ordered_json series(const std::vector<double>& values, const char* field, bool allow_pos_inf,
                    double scale = 1.0) {
    ordered_json arr = ordered_json::array();
    for (double v : values) arr.push_back(number(v * scale, field, allow_pos_inf));
    return arr;
}

ordered_json mean_json(const std::vector<double>& values, const char* field, bool allow_pos_inf,
                       double scale = 1.0) {
    auto m = mean_of(values);
    if (!m) return nullptr;
    return number(*m * scale, field, allow_pos_inf);
}

std::vector<double> read_series(const ordered_json& arr) {
    std::vector<double> out;
    for (const auto& v : arr) {
        if (v.is_string() && v.get<std::string>() == "inf") {
            out.push_back(INFINITY);
        } else {
            out.push_back(v.get<double>());
        }
    }
    return out;
}

} // namespace

ordered_json report_to_json(const MetricsReport& r) {
    ordered_json j;
    j["psnr"] = {{"per_frame", series(r.psnr, "psnr", true)}, {"mean", mean_json(r.psnr, "psnr", true)}};
    j["ssim"] = {{"per_frame", series(r.ssim, "ssim", false)}, {"mean", mean_json(r.ssim, "ssim", false)}};
    j["e_warp"] = {{"per_pair", series(r.e_warp, "e_warp", false)},
                   {"mean", mean_json(r.e_warp, "e_warp", false)},
                   {"per_pair_x1e3", series(r.e_warp, "e_warp", false, 1e3)},
                   {"mean_x1e3", mean_json(r.e_warp, "e_warp", false, 1e3)}};
    j["e_inter"] = {{"per_triple", series(r.e_inter, "e_inter", false)},
                    {"mean", mean_json(r.e_inter, "e_inter", false)}};
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : r.metadata) meta[k] = v;
    j["metadata"] = meta;
    return j;
}

MetricsReport report_from_json(const ordered_json& j) {
    MetricsReport r;
    r.psnr = read_series(j.at("psnr").at("per_frame"));
    r.ssim = read_series(j.at("ssim").at("per_frame"));
    r.e_warp = read_series(j.at("e_warp").at("per_pair"));
    r.e_inter = read_series(j.at("e_inter").at("per_triple"));
    for (const auto& [k, v] : j.at("metadata").items()) r.metadata.emplace_back(k, v.get<std::string>());
    return r;
}

} // namespace vidrest
