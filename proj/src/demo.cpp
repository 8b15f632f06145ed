#include "vidrest/demo.hpp"

#include "vidrest/metrics.hpp"

namespace vidrest {

Config demo_config(std::uint64_t seed) {
    Config c;
    c.seed = seed;
    return c;
}

DemoResult run_demo(const Config& config, const DemoParams& params) {
    config.validate();
    DemoResult r;
    r.hq = synth_video(config.seed, params);
    r.lq = degrade(r.hq, config.seed, params);

    Config off = config;
    off.hlw_until = 0.0;
    off.tome_start = 0;
    off.tome_stop = 0;

    const BatchPlan plan = plan_batches(static_cast<int>(r.lq.size()), config.batch_size, config.seed);
    const FlowBank bank(r.lq, plan, config.flow_params());
    r.baseline = restore(r.lq, off, &bank);
    r.ours = restore(r.lq, config, &bank);

    const ConsistencyFlows cf = consistency_flows(r.hq, config.flow_params());
    r.baseline_report = measure(r.baseline.frames, &r.hq, cf);
    r.ours_report = measure(r.ours.frames, &r.hq, cf);
    r.baseline_report.metadata = config_echo(off);
    r.ours_report.metadata = config_echo(config);
    return r;
}

nlohmann::ordered_json demo_report_json(const DemoResult& result, const Config& config) {
    nlohmann::ordered_json j;
    j["baseline"] = report_to_json(result.baseline_report);
    j["ours"] = report_to_json(result.ours_report);
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config_echo(config)) cfg[k] = v;
    j["config"] = cfg;
    return j;
}

} // namespace vidrest
