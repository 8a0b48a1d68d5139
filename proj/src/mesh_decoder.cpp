#include <stdexcept>
#include <string>

#include "voxmesh/net.hpp"
#include "voxmesh/nn.hpp"

namespace voxmesh {

BundleAdjacency build_bundle_adjacency(const TemplateBundle& bundle) {
    BundleAdjacency adj;
    adj.levels.reserve(bundle.levels.size());
    for (const TriMesh& level : bundle.levels) adj.levels.push_back(build_adjacency(level));
    return adj;
}

void register_decoder_params(ModelParams& params, const ArchConfig& cfg, std::int64_t x4_numel,
                             const TemplateBundle& bundle) {
    require(x4_numel > 0, "decoder: x4_numel must be positive");
    require(bundle.level_sizes.size() == 5, "decoder: bundle must carry 5 levels");
    const Dtype dt = cfg.dtype;
    const std::int64_t n4 = bundle.level_sizes[4];

    params.add_kaiming("decoder.fc1.w", {x4_numel, cfg.fcn_hidden}, x4_numel, dt);
    params.add_zeros("decoder.fc1.b", {cfg.fcn_hidden}, dt);
    params.add_kaiming("decoder.fc2.w", {cfg.fcn_hidden, cfg.latent}, cfg.fcn_hidden, dt);
    params.add_zeros("decoder.fc2.b", {cfg.latent}, dt);
    params.add_kaiming("decoder.fc3.w", {cfg.latent, n4 * 3}, cfg.latent, dt);
    params.add_zeros("decoder.fc3.b", {n4 * 3}, dt);

    // Coarse-to-fine refinement stays in coordinate space (3 channels). The
    // finest block starts at zero so an untrained decoder emits the zero
    // displacement exactly.
    for (int k = 3; k >= 1; --k) {
        const std::string base = "decoder.gcn" + std::to_string(k);
        params.add_kaiming(base + ".w", {3, 3}, 3, dt);
        params.add_zeros(base + ".b", {3}, dt);
    }
    params.add_zeros("decoder.gcn0.w", {3, 3}, dt);
    params.add_zeros("decoder.gcn0.b", {3}, dt);
}

Tensor decode_displacement(const Tensor& x4, const TemplateBundle& bundle,
                           const BundleAdjacency& adj, ModelParams& params) {
    require(adj.levels.size() == bundle.levels.size(),
            "decoder: adjacency level count does not match the bundle");
    const std::int64_t n4 = bundle.level_sizes[4];

    Tensor z = reshape(x4, {1, x4.numel()});
    Tensor h = relu(linear(z, params.get("decoder.fc1.w"), params.get("decoder.fc1.b")));
    h = relu(linear(h, params.get("decoder.fc2.w"), params.get("decoder.fc2.b")));
    Tensor pts = reshape(linear(h, params.get("decoder.fc3.w"), params.get("decoder.fc3.b")),
                         {n4, 3});

    for (int k = 3; k >= 0; --k) {
        const std::string base = "decoder.gcn" + std::to_string(k);
        Tensor lifted = sparse_matmul(bundle.up_mats[static_cast<std::size_t>(k)], pts);
        pts = tanh(gcn_layer(adj.levels[static_cast<std::size_t>(k)], lifted,
                             params.get(base + ".w"), params.get(base + ".b")));
    }
    return pts;
}

const char* template_mode_name(TemplateMode mode) {
    switch (mode) {
        case TemplateMode::Ts: return "Ts";
        case TemplateMode::Tspe: return "Tspe";
        case TemplateMode::Td: return "Td";
        case TemplateMode::TspePlusTd: return "TspePlusTd";
        case TemplateMode::Ta: return "Ta";
    }
    throw std::runtime_error("template mode: bad enum value");
}

TemplateMode template_mode_from(const std::string& name) {
    if (name == "Ts") return TemplateMode::Ts;
    if (name == "Tspe") return TemplateMode::Tspe;
    if (name == "Td") return TemplateMode::Td;
    if (name == "TspePlusTd") return TemplateMode::TspePlusTd;
    if (name == "Ta") return TemplateMode::Ta;
    throw std::runtime_error("template mode: unknown name '" + name +
                             "' (expected Ts, Tspe, Td, TspePlusTd, or Ta)");
}

Tensor compose_template(TemplateMode mode, const Tensor& ts, const Tensor& tspe,
                        const Tensor* td) {
    require(ts.rank() == 2 && ts.dim(1) == 3, "compose_template: ts must be [V,3]");
    require(tspe.rank() == 2 && tspe.dim(1) == 3, "compose_template: tspe must be [V,3]");
    require(ts.dim(0) == tspe.dim(0), "compose_template: ts / tspe vertex counts differ");
    const bool needs_td = mode == TemplateMode::Td || mode == TemplateMode::TspePlusTd ||
                          mode == TemplateMode::Ta;
    if (needs_td) {
        require(td != nullptr, std::string("compose_template: mode ") + template_mode_name(mode) +
                                   " needs the displacement decoder output");
        require(td->rank() == 2 && td->dim(1) == 3 && td->dim(0) == ts.dim(0),
                "compose_template: td must be [V,3] with the same vertex count");
    }
    switch (mode) {
        case TemplateMode::Ts: return ts;
        case TemplateMode::Tspe: return tspe;
        case TemplateMode::Td: return *td;
        case TemplateMode::TspePlusTd: return add(tspe, *td);
        case TemplateMode::Ta: return add(ts, *td);
    }
    throw std::runtime_error("compose_template: bad enum value");
}

}  // namespace voxmesh
