#include "vidrest/cli.hpp"

#include <cstdio>
#include <exception>
#include <optional>

#include "CLI11.hpp"
#include "vidrest/demo.hpp"
#include "vidrest/flow.hpp"
#include "vidrest/mediaio.hpp"
#include "vidrest/metrics.hpp"
#include "vidrest/pipeline.hpp"

namespace vidrest {

namespace {

std::string config_help() {
    std::string s = "Config file: one `key = value` per line, '#' comments, unknown keys rejected.\nKeys:\n";
    for (const auto& k : config_keys()) s += "  " + std::string(k.name) + "\n      " + k.help + "\n";
    return s;
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu%s", stem, i, ext);
    return name;
}

Config resolve_config(const std::string& path, std::optional<std::uint64_t> seed, bool no_hlw, bool no_tome) {
    Config c = load_config(path);
    if (seed) c.seed = *seed;
    if (no_hlw) c.hlw_until = 0.0;
    if (no_tome) {
        c.tome_start = 0;
        c.tome_stop = 0;
    }
    c.validate();
    return c;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Temporally consistent video restoration with a toy latent diffusion model", "vidrest"};
    app.require_subcommand(1);
    app.footer(config_help());

    std::string in_dir, out_path, config_path, ref_dir;
    int block = FlowParams{}.block;
    int search = FlowParams{}.search;
    bool dump_latents = false, no_hlw = false, no_tome = false;
    std::optional<std::uint64_t> seed;
    std::uint64_t demo_seed = 0;

    auto* flow = app.add_subcommand("flow", "adjacent-pair flows (.flo) and confidences (.rtf)");
    flow->add_option("--in", in_dir, "input frame directory")->required();
    flow->add_option("--out", out_path, "output directory")->required();
    flow->add_option("--block", block, "patch size");
    flow->add_option("--search", search, "search radius");

    auto* restore_cmd = app.add_subcommand("restore", "restore a video");
    restore_cmd->add_option("--in", in_dir, "input frame directory")->required();
    restore_cmd->add_option("--out", out_path, "output directory")->required();
    restore_cmd->add_option("--config", config_path, "config file")->required();
    restore_cmd->add_option("--seed", seed, "overrides the config seed");
    restore_cmd->add_flag("--dump-latents", dump_latents, "also write final latents as .rtf");
    restore_cmd->add_flag("--no-hlw", no_hlw, "disable hierarchical latent warping");
    restore_cmd->add_flag("--no-tome", no_tome, "disable token merging");

    auto* metrics_cmd = app.add_subcommand("metrics", "consistency metrics, plus PSNR/SSIM with --ref");
    metrics_cmd->add_option("--in", in_dir, "frame directory to measure")->required();
    metrics_cmd->add_option("--ref", ref_dir, "reference frames; also used to estimate the metric flows");
    metrics_cmd->add_option("--out", out_path, "report JSON")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "correspondence and stage ablation grid as JSON");
    ablate_cmd->add_option("--in", in_dir, "input frame directory")->required();
    ablate_cmd->add_option("--out", out_path, "output JSON")->required();
    ablate_cmd->add_option("--config", config_path, "config file")->required();
    ablate_cmd->add_option("--ref", ref_dir, "reference frames for PSNR/SSIM and metric flows");
    ablate_cmd->add_option("--seed", seed, "overrides the config seed");

    auto* demo = app.add_subcommand("demo", "synthetic video: degrade, restore with and without mechanisms");
    demo->add_option("--out", out_path, "output directory")->required();
    demo->add_option("--seed", demo_seed, "seed")->required();
    demo->add_option("--config", config_path, "optional config file (seed flag wins)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (flow->parsed()) {
            const FrameSequence seq = read_frames(in_dir);
            FlowParams fp;
            fp.block = block;
            fp.search = search;
            if (block < 1 || search < 0) throw Error(ErrorKind::Parameter, "need --block >= 1 and --search >= 0");
            std::vector<std::pair<std::string, FlowField>> flows;
            std::vector<std::pair<std::string, ConfidenceMap>> confs;
            for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
                FlowField fwd = estimate_flow(seq.frames[t], seq.frames[t + 1], fp.block, fp.search);
                FlowField bwd = estimate_flow(seq.frames[t + 1], seq.frames[t], fp.block, fp.search);
                confs.emplace_back(numbered("conf", t, ".rtf"), fb_confidence(fwd, bwd));
                flows.emplace_back(numbered("flow", t, ".flo"), std::move(fwd));
                flows.emplace_back(numbered("back", t, ".flo"), std::move(bwd));
            }
            std::filesystem::create_directories(out_path);
            for (const auto& [name, f] : flows) write_flo(f, std::filesystem::path(out_path) / name);
            for (const auto& [name, c] : confs) write_raw_tensor(to_raw_tensor(c), std::filesystem::path(out_path) / name);
            out << "wrote " << flows.size() / 2 << " flow pairs to " << out_path << "\n";
        } else if (restore_cmd->parsed()) {
            const Config cfg = resolve_config(config_path, seed, no_hlw, no_tome);
            const FrameSequence seq = read_frames(in_dir);
            const RestoreResult r = restore(seq, cfg);
            write_frames(r.frames, out_path);
            if (dump_latents) {
                const auto dir = std::filesystem::path(out_path) / "latents";
                std::filesystem::create_directories(dir);
                for (std::size_t i = 0; i < r.latents.size(); ++i) {
                    write_raw_tensor(to_raw_tensor(r.latents[i]), dir / numbered("latent", i, ".rtf"));
                }
            }
            out << "restored " << r.frames.size() << " frames to " << out_path << "\n";
        } else if (metrics_cmd->parsed()) {
            const FrameSequence seq = read_frames(in_dir);
            std::optional<FrameSequence> ref;
            if (!ref_dir.empty()) ref = read_frames(ref_dir);
            const ConsistencyFlows cf = consistency_flows(ref ? *ref : seq, FlowParams{});
            MetricsReport report = measure(seq, ref ? &*ref : nullptr, cf);
            report.metadata.emplace_back("flow_source", ref ? "reference" : "input");
            write_report(report, out_path);
            out << "wrote " << out_path << "\n";
        } else if (ablate_cmd->parsed()) {
            const Config cfg = resolve_config(config_path, seed, false, false);
            const FrameSequence seq = read_frames(in_dir);
            std::optional<FrameSequence> ref;
            if (!ref_dir.empty()) ref = read_frames(ref_dir);
            const auto results = ablate(seq, cfg, ref ? &*ref : nullptr, ref ? &*ref : nullptr);
            write_json(ablation_to_json(results), out_path);
            out << "wrote " << out_path << "\n";
        } else if (demo->parsed()) {
            Config cfg = config_path.empty() ? demo_config(demo_seed) : load_config(config_path);
            cfg.seed = demo_seed;
            const DemoResult r = run_demo(cfg);
            const std::filesystem::path dir(out_path);
            const auto report = demo_report_json(r, cfg);
            write_frames(r.hq, dir / "hq");
            write_frames(r.lq, dir / "lq");
            write_frames(r.baseline.frames, dir / "baseline");
            write_frames(r.ours.frames, dir / "ours");
            write_json(report, dir / "report.json");
            out << "baseline e_warp " << report["baseline"]["e_warp"]["mean"] << ", ours e_warp "
                << report["ours"]["e_warp"]["mean"] << "\n";
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace vidrest
