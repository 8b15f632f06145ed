#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vidrest/cli.hpp"
#include "vidrest/flow.hpp"
#include "vidrest/mediaio.hpp"
#include "vidrest/metrics.hpp"
#include "vidrest/pipeline.hpp"
#include "vidrest/tokenmerge.hpp"

namespace py = pybind11;
using namespace vidrest;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Grid to_grid(const Array& a) {
    if (a.ndim() != 3) throw Error(ErrorKind::Shape, "expected an (h, w, c) array");
    Grid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy_n(a.data(), g.size(), g.values().begin());
    return g;
}

Array to_array(const Grid& g) {
    Array a(std::vector<py::ssize_t>{g.height(), g.width(), g.channels()});
    std::copy(g.values().begin(), g.values().end(), a.mutable_data());
    return a;
}

FrameSequence to_sequence(const std::vector<Array>& frames) {
    FrameSequence s;
    for (const auto& f : frames) s.frames.push_back(to_grid(f));
    return s;
}

std::vector<Array> to_list(const FrameSequence& s) {
    std::vector<Array> out;
    for (const auto& f : s.frames) out.push_back(to_array(f));
    return out;
}

} // namespace

PYBIND11_MODULE(_vidrest, m) {
    m.doc() = "Temporally consistent video restoration with a toy latent diffusion model";

    static py::handle error = py::exception<Error>(m, "VidrestError").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_grid(a), to_grid(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_grid(a), to_grid(b)); });

    m.def(
        "estimate_flow",
        [](const Array& src, const Array& dst, int block, int search) {
            return to_array(estimate_flow(to_grid(src), to_grid(dst), block, search));
        },
        py::arg("src"), py::arg("dst"), py::arg("block") = FlowParams{}.block, py::arg("search") = FlowParams{}.search);
    m.def("warp", [](const Array& grid, const Array& flow) {
        return to_array(warp(to_grid(grid), FlowField(to_grid(flow))));
    });
    m.def("fb_confidence", [](const Array& fwd, const Array& bwd) {
        return to_array(fb_confidence(FlowField(to_grid(fwd)), FlowField(to_grid(bwd))));
    });

    m.def(
        "anneal_ratio",
        [](int step, double r, double delta, int begin, int end) {
            return anneal_ratio(step, AnnealParams{r, delta, begin, end});
        },
        py::arg("step"), py::arg("r"), py::arg("delta"), py::arg("i_beg"), py::arg("i_end"));

    m.def("read_frames", [](const std::string& dir) { return to_list(read_frames(dir)); });
    m.def("write_frames", [](const std::vector<Array>& frames, const std::string& dir) {
        write_frames(to_sequence(frames), dir);
    });
    m.def("read_flo", [](const std::string& path) { return to_array(read_flo(path)); });
    m.def("write_flo", [](const Array& flow, const std::string& path) { write_flo(FlowField(to_grid(flow)), path); });

    m.def("config_keys", [] {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& k : config_keys()) out.emplace_back(k.name, k.help);
        return out;
    });

    m.def(
        "restore",
        [](const std::vector<Array>& frames, const std::string& config_text) {
            const FrameSequence seq = to_sequence(frames);
            const Config cfg = parse_config(config_text);
            RestoreResult r;
            {
                py::gil_scoped_release release;
                r = restore(seq, cfg);
            }
            return py::make_tuple(to_list(r.frames), r.counters.latent_calls, r.counters.attention_calls);
        },
        py::arg("frames"), py::arg("config") = "",
        "Restores a list of (h, w, 3) frames in [0, 1]. `config` uses the config-file syntax. Returns "
        "(frames, latent_hook_calls, attention_hook_calls).");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line interface in-process; returns (exit_code, stdout, stderr).");
}
