#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"
#include "vidrest/cli.hpp"
#include "vidrest/mediaio.hpp"
#include "vidrest/synth.hpp"

using namespace vidrest;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

void write_video(const fs::path& dir, int frames) {
    DemoParams p;
    p.frames = frames;
    p.height = 16;
    p.width = 20;
    write_frames(degrade(synth_video(5, p), 5, p), dir);
}

std::vector<std::string> listing(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(dir)) names.push_back(fs::relative(e.path(), dir).string());
    std::sort(names.begin(), names.end());
    return names;
}

bool same_tree(const fs::path& a, const fs::path& b) {
    const auto la = listing(a);
    if (la != listing(b)) return false;
    for (const auto& n : la) {
        if (fs::is_directory(a / n)) continue;
        if (testutil::read_bytes(a / n) != testutil::read_bytes(b / n)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("help and usage errors") {
    const Run help = cli({"--help"});
    CHECK(help.code == 0);
    for (const char* word : {"flow", "restore", "metrics", "ablate", "demo", "tome.r", "flow.tau_occ", "latent_scale"})
        CHECK(help.out.find(word) != std::string::npos);
    const Run sub = cli({"restore", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--dump-latents") != std::string::npos);

    CHECK(cli({}).code == 2);
    CHECK(cli({"bogus"}).code == 2);
    CHECK(cli({"restore", "--in", "x"}).code == 2);
    CHECK(cli({"flow", "--in", "x", "--out", "y", "--block", "seven"}).code == 2);
}

TEST_CASE("runtime failures exit with 1") {
    TempDir dir;
    const Run missing = cli({"flow", "--in", (dir / "nope").string(), "--out", (dir / "o").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") != std::string::npos);

    write_video(dir / "in", 3);
    testutil::write_bytes(dir / "bad.cfg", "colour = blue\n");
    const Run bad = cli({"restore", "--in", (dir / "in").string(), "--out", (dir / "o").string(), "--config",
                         (dir / "bad.cfg").string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("colour") != std::string::npos);
}

TEST_CASE("flow subcommand writes numbered files") {
    TempDir dir;
    write_video(dir / "in", 3);
    const Run r = cli({"flow", "--in", (dir / "in").string(), "--out", (dir / "f").string(), "--block", "3",
                       "--search", "2"});
    REQUIRE(r.code == 0);
    CHECK(listing(dir / "f") == std::vector<std::string>{"back_00000.flo", "back_00001.flo", "conf_00000.rtf",
                                                         "conf_00001.rtf", "flow_00000.flo", "flow_00001.flo"});
    const FlowField f = read_flo(dir / "f" / "flow_00000.flo");
    CHECK(f.height() == 16);
    CHECK(f.width() == 20);
    const RawTensor c = read_raw_tensor(dir / "f" / "conf_00001.rtf");
    CHECK(c.dims == std::vector<std::uint32_t>{16, 20, 1});
}

TEST_CASE("restore and metrics subcommands") {
    TempDir dir;
    write_video(dir / "in", 5);
    testutil::write_bytes(dir / "c.cfg", "steps = 4\nbatch_size = 3\nflow.block = 3\nflow.search = 2\n");
    const std::vector<std::string> base{"restore", "--in", (dir / "in").string(), "--config", (dir / "c.cfg").string(),
                                        "--seed", "9", "--dump-latents"};
    auto with_out = [&](const std::string& name) {
        auto a = base;
        a.push_back("--out");
        a.push_back((dir / name).string());
        return a;
    };
    REQUIRE(cli(with_out("r1")).code == 0);
    REQUIRE(cli(with_out("r2")).code == 0);
    CHECK(same_tree(dir / "r1", dir / "r2"));
    CHECK(fs::exists(dir / "r1" / "latents" / "latent_00004.rtf"));
    CHECK(read_frames(dir / "r1").size() == 5u);

    auto plain = with_out("r3");
    plain.push_back("--no-hlw");
    plain.push_back("--no-tome");
    REQUIRE(cli(plain).code == 0);
    CHECK_FALSE(same_tree(dir / "r1", dir / "r3"));

    const Run m = cli({"metrics", "--in", (dir / "r1").string(), "--ref", (dir / "in").string(), "--out",
                       (dir / "m.json").string()});
    REQUIRE(m.code == 0);
    const auto j = nlohmann::json::parse(testutil::read_bytes(dir / "m.json"));
    CHECK(j["psnr"]["per_frame"].size() == 5u);
    CHECK(j["e_warp"]["per_pair"].size() == 4u);
    CHECK(j["e_inter"]["per_triple"].size() == 3u);
    CHECK(j["metadata"]["flow_source"] == "reference");

    REQUIRE(cli({"metrics", "--in", (dir / "r1").string(), "--out", (dir / "n.json").string()}).code == 0);
    const auto n = nlohmann::json::parse(testutil::read_bytes(dir / "n.json"));
    CHECK(n["psnr"]["mean"].is_null());
}

TEST_CASE("ablate and demo subcommands") {
    TempDir dir;
    write_video(dir / "in", 4);
    testutil::write_bytes(dir / "c.cfg", "steps = 3\nbatch_size = 4\nflow.block = 3\nflow.search = 2\n");
    REQUIRE(cli({"ablate", "--in", (dir / "in").string(), "--config", (dir / "c.cfg").string(), "--out",
                 (dir / "a.json").string()})
                .code == 0);
    const auto a = nlohmann::json::parse(testutil::read_bytes(dir / "a.json"));
    CHECK(a.dump().find("flow_cos_spatial") != std::string::npos);

    testutil::write_bytes(dir / "d.cfg", "steps = 3\n");
    for (const char* out : {"d1", "d2"})
        REQUIRE(cli({"demo", "--out", (dir / out).string(), "--seed", "2", "--config", (dir / "d.cfg").string()})
                    .code == 0);
    CHECK(same_tree(dir / "d1", dir / "d2"));
    for (const char* sub : {"hq", "lq", "baseline", "ours"}) CHECK(read_frames(dir / "d1" / sub).size() == 24u);
    const auto report = nlohmann::json::parse(testutil::read_bytes(dir / "d1" / "report.json"));
    CHECK(report.contains("baseline"));
    CHECK(report.contains("ours"));
}
