#pragma once

#include <cstdint>

#include "vidrest/pipeline.hpp"
#include "vidrest/report.hpp"
#include "vidrest/synth.hpp"

namespace vidrest {

struct DemoResult {
    FrameSequence hq;
    FrameSequence lq;
    RestoreResult baseline; // both mechanisms off
    RestoreResult ours;     // config as given
    MetricsReport baseline_report;
    MetricsReport ours_report;
};

// Demo configuration for a seed: library defaults with the seed set.
Config demo_config(std::uint64_t seed);

// Synthesises, degrades and restores the demo video twice. Metrics use flows
// estimated on the clean video and PSNR/SSIM against it.
DemoResult run_demo(const Config& config, const DemoParams& params = {});

nlohmann::ordered_json demo_report_json(const DemoResult& result, const Config& config);

} // namespace vidrest
