#include "vidrest/latentwarp.hpp"

#include <cmath>
#include <string>

#include "vidrest/flow.hpp"

namespace vidrest {

LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double abar) {
    if (!(abar > 0.0 && abar <= 1.0)) throw Error(ErrorKind::Parameter, "abar must be in (0, 1]");
    if (!x_t.same_shape(eps)) {
        throw Error(ErrorKind::Shape, "predict_x0: " + x_t.shape_string() + " vs " + eps.shape_string());
    }
    const double s = std::sqrt(abar);
    const double n = std::sqrt(1.0 - abar);
    LatentGrid out(x_t.height(), x_t.width(), x_t.channels());
    auto xv = x_t.values();
    auto ev = eps.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = (xv[i] - n * ev[i]) / s;
    return out;
}

LatentGrid blend_warped(const LatentGrid& own, const LatentGrid& source, const FlowField& flow, const Grid& mask) {
    if (!own.same_shape(source) || !own.same_extent(flow) || !own.same_extent(mask) || mask.channels() != 1) {
        throw Error(ErrorKind::Shape, "latent warp resolution mismatch: latent " + own.shape_string() + ", flow " +
                                          flow.shape_string() + ", mask " + mask.shape_string());
    }
    const Grid warped = warp(source, flow);
    LatentGrid out(own.height(), own.width(), own.channels());
    for (int y = 0; y < own.height(); ++y) {
        for (int x = 0; x < own.width(); ++x) {
            const double m = mask.at(y, x);
            for (int k = 0; k < own.channels(); ++k) {
                out.at(y, x, k) = m * own.at(y, x, k) + (1.0 - m) * warped.at(y, x, k);
            }
        }
    }
    return out;
}

std::vector<LatentGrid> warp_keyframe_chain(std::vector<LatentGrid> keyframes, std::span<const FlowField> flows,
                                            std::span<const OcclusionMask> masks) {
    const std::size_t pairs = keyframes.empty() ? 0 : keyframes.size() - 1;
    if (flows.size() != pairs || masks.size() != pairs) {
        throw Error(ErrorKind::Config, "keyframe chain needs one flow and mask per adjacent keyframe pair");
    }
    for (std::size_t i = 1; i < keyframes.size(); ++i) {
        keyframes[i] = blend_warped(keyframes[i], keyframes[i - 1], flows[i - 1], masks[i - 1]);
    }
    return keyframes;
}

std::vector<LatentGrid> propagate_to_batch(std::vector<LatentGrid> batch, int key_index,
                                           std::span<const FlowField> flows, std::span<const OcclusionMask> masks) {
    if (key_index < 0 || static_cast<std::size_t>(key_index) >= batch.size()) {
        throw Error(ErrorKind::Index, "keyframe index outside the batch");
    }
    if (flows.size() != batch.size() - 1 || masks.size() != flows.size()) {
        throw Error(ErrorKind::Config, "batch propagation needs one flow and mask per non-key member, got " +
                                           std::to_string(flows.size()) + " for " +
                                           std::to_string(batch.size() - 1));
    }
    const LatentGrid& key = batch[key_index];
    std::size_t next = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (static_cast<int>(i) == key_index) continue;
        batch[i] = blend_warped(batch[i], key, flows[next], masks[next]);
        ++next;
    }
    return batch;
}

} // namespace vidrest
