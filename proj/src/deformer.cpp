#include <string>

#include "voxmesh/net.hpp"
#include "voxmesh/nn.hpp"

namespace voxmesh {

namespace {

std::string stage_name(int s) { return "deform.s" + std::to_string(s); }

}  // namespace

void register_deformer_params(ModelParams& params, const ArchConfig& cfg) {
    require(cfg.deform_stages >= 1, "deformer: need at least one stage");
    require(cfg.deform_layers >= 1, "deformer: need at least one graph-conv layer");
    require(cfg.gcn_hidden > 0, "deformer: hidden width must be positive");
    const Dtype dt = cfg.dtype;
    const std::int64_t in_ch = 3 + pyramid_channels(cfg);

    for (int s = 1; s <= cfg.deform_stages; ++s) {
        const std::string base = stage_name(s);
        std::int64_t win = in_ch;
        for (int l = 1; l <= cfg.deform_layers; ++l) {
            const std::string layer = base + ".g" + std::to_string(l);
            params.add_kaiming(layer + ".w", {win, cfg.gcn_hidden}, win, dt);
            params.add_zeros(layer + ".b", {cfg.gcn_hidden}, dt);
            params.add_ones(layer + ".bn.gamma", {cfg.gcn_hidden}, dt);
            params.add_zeros(layer + ".bn.beta", {cfg.gcn_hidden}, dt);
            params.add_buffer(layer + ".bn.mean", {cfg.gcn_hidden}, 0.0, dt);
            params.add_buffer(layer + ".bn.var", {cfg.gcn_hidden}, 1.0, dt);
            win = cfg.gcn_hidden;
        }
        // Zero-initialized projection: an untrained stage is the identity.
        params.add_zeros(base + ".proj.w", {cfg.gcn_hidden, 3}, dt);
        params.add_zeros(base + ".proj.b", {3}, dt);
    }
}

DeformationTrace deform(const Tensor& start, const FeaturePyramid& pyr, const SparseMatrix& adj0,
                        ModelParams& params, const ArchConfig& cfg, bool train) {
    require(start.rank() == 2 && start.dim(1) == 3, "deformer: start points must be [V,3]");
    require(adj0.rows() == start.dim(0) && adj0.cols() == start.dim(0),
            "deformer: adjacency is " + std::to_string(adj0.rows()) + "x" +
                std::to_string(adj0.cols()) + " for " + std::to_string(start.dim(0)) +
                " vertices");

    DeformationTrace trace;
    trace.initial = start;
    Tensor pts = start;
    VertexFeatures fixed;
    if (!cfg.resample_each_stage) fixed = map_pyramid(pyr, start);

    for (int s = 1; s <= cfg.deform_stages; ++s) {
        const std::string base = stage_name(s);
        VertexFeatures feats = cfg.resample_each_stage ? map_pyramid(pyr, pts) : fixed;
        Tensor h = concat({pts, feats.concat}, 1);
        for (int l = 1; l <= cfg.deform_layers; ++l) {
            const std::string layer = base + ".g" + std::to_string(l);
            Tensor y = gcn_layer(adj0, h, params.get(layer + ".w"), params.get(layer + ".b"));
            h = relu(batchnorm(y, params.get(layer + ".bn.gamma"),
                               params.get(layer + ".bn.beta"), params.buffer(layer + ".bn.mean"),
                               params.buffer(layer + ".bn.var"), train));
        }
        Tensor delta = linear(h, params.get(base + ".proj.w"), params.get(base + ".proj.b"));
        pts = add(pts, delta);
        trace.stages.push_back(pts);
    }
    return trace;
}

}  // namespace voxmesh
