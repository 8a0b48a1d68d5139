#include <string>

#include "voxmesh/net.hpp"
#include "voxmesh/nn.hpp"

namespace voxmesh {

namespace {

void check_arch(const ArchConfig& cfg) {
    require(cfg.enc_channels.size() == 5, "arch: enc_channels must list 5 widths, got " +
                                              std::to_string(cfg.enc_channels.size()));
    for (std::int64_t c : cfg.enc_channels)
        require(c > 0, "arch: encoder channel widths must be positive");
    require(!cfg.seg_loss || cfg.image_decoder,
            "arch: the segmentation head reads the decoder output; enable image_decoder or "
            "disable seg_loss");
    require(cfg.seg_classes >= 2, "arch: seg_classes must be >= 2");
}

void add_bn(ModelParams& p, const std::string& name, std::int64_t c, Dtype dt) {
    p.add_ones(name + ".gamma", {c}, dt);
    p.add_zeros(name + ".beta", {c}, dt);
    p.add_buffer(name + ".mean", {c}, 0.0, dt);
    p.add_buffer(name + ".var", {c}, 1.0, dt);
}

void add_conv_block(ModelParams& p, const std::string& name, std::int64_t ci, std::int64_t co,
                    Dtype dt) {
    p.add_kaiming(name + ".w", {co, ci, 3, 3, 3}, ci * 27, dt);
    p.add_zeros(name + ".b", {co}, dt);
    add_bn(p, name + ".bn", co, dt);
}

// Transposed-conv weight keeps its input channels on dim 0.
void add_upconv_block(ModelParams& p, const std::string& name, std::int64_t ci, std::int64_t co,
                      Dtype dt) {
    p.add_kaiming(name + ".w", {ci, co, 3, 3, 3}, ci * 27, dt);
    p.add_zeros(name + ".b", {co}, dt);
    add_bn(p, name + ".bn", co, dt);
}

Tensor run_bn_relu(const Tensor& x, ModelParams& p, const std::string& name, bool train) {
    return relu(batchnorm(x, p.get(name + ".gamma"), p.get(name + ".beta"),
                          p.buffer(name + ".mean"), p.buffer(name + ".var"), train));
}

Tensor down_block(const Tensor& x, ModelParams& p, const std::string& name, int stride,
                  bool train) {
    Tensor y = conv3d(x, p.get(name + ".w"), p.get(name + ".b"), stride, 1);
    return run_bn_relu(y, p, name + ".bn", train);
}

Tensor up_block(const Tensor& x, ModelParams& p, const std::string& name, bool train) {
    Tensor y = conv3d_transpose(x, p.get(name + ".w"), p.get(name + ".b"), 2, 1);
    return run_bn_relu(y, p, name + ".bn", train);
}

}  // namespace

std::int64_t pyramid_channels(const ArchConfig& cfg) {
    check_arch(cfg);
    const auto& c = cfg.enc_channels;
    std::int64_t total = c[0] + c[1] + c[2] + c[3] + c[4];
    if (cfg.image_decoder) total += c[3] + c[2] + c[1] + c[0];
    return total;
}

Tensor volume_tensor(const Volume& vol, Dtype dt) {
    require(vol.w > 0 && vol.h > 0 && vol.d > 0, "volume_tensor: empty volume");
    std::vector<double> vals(vol.voxels.begin(), vol.voxels.end());
    return Tensor::from_values({1, 1, vol.d, vol.h, vol.w}, vals, dt);
}

void register_unet_params(ModelParams& params, const ArchConfig& cfg) {
    check_arch(cfg);
    const auto& c = cfg.enc_channels;
    const Dtype dt = cfg.dtype;
    add_conv_block(params, "unet.stem", 1, c[0], dt);
    add_conv_block(params, "unet.down1", c[0], c[1], dt);
    add_conv_block(params, "unet.down2", c[1], c[2], dt);
    add_conv_block(params, "unet.down3", c[2], c[3], dt);
    add_conv_block(params, "unet.down4", c[3], c[4], dt);
    if (cfg.image_decoder) {
        add_upconv_block(params, "unet.up1", c[4], c[3], dt);
        add_upconv_block(params, "unet.up2", 2 * c[3], c[2], dt);
        add_upconv_block(params, "unet.up3", 2 * c[2], c[1], dt);
        add_upconv_block(params, "unet.up4", 2 * c[1], c[0], dt);
        if (cfg.seg_loss) {
            params.add_kaiming("unet.seg.w", {cfg.seg_classes, c[0], 1, 1, 1}, c[0], dt);
            params.add_zeros("unet.seg.b", {cfg.seg_classes}, dt);
        }
    }
}

FeaturePyramid unet_forward(const Volume& vol, ModelParams& params, const ArchConfig& cfg,
                            bool train) {
    check_arch(cfg);
    require(vol.d % 16 == 0 && vol.h % 16 == 0 && vol.w % 16 == 0,
            "unet: volume extents " + std::to_string(vol.w) + "x" + std::to_string(vol.h) + "x" +
                std::to_string(vol.d) +
                " must be divisible by 16; pad the volume before feature extraction");

    Tensor x = volume_tensor(vol, cfg.dtype);
    Tensor x0 = down_block(x, params, "unet.stem", 1, train);
    Tensor x1 = down_block(x0, params, "unet.down1", 2, train);
    Tensor x2 = down_block(x1, params, "unet.down2", 2, train);
    Tensor x3 = down_block(x2, params, "unet.down3", 2, train);
    Tensor x4 = down_block(x3, params, "unet.down4", 2, train);

    FeaturePyramid pyr;
    std::vector<Tensor> maps = {x0, x1, x2, x3, x4};
    if (cfg.image_decoder) {
        Tensor x5 = up_block(x4, params, "unet.up1", train);
        Tensor x6 = up_block(concat({x5, x3}, 1), params, "unet.up2", train);
        Tensor x7 = up_block(concat({x6, x2}, 1), params, "unet.up3", train);
        Tensor x8 = up_block(concat({x7, x1}, 1), params, "unet.up4", train);
        maps.insert(maps.end(), {x5, x6, x7, x8});
        if (cfg.seg_loss) {
            Tensor logits = conv3d(x8, params.get("unet.seg.w"), params.get("unet.seg.b"), 1, 0);
            pyr.seg_logits =
                reshape(logits, {cfg.seg_classes, logits.dim(2), logits.dim(3), logits.dim(4)});
        }
    }
    for (const Tensor& m : maps) {
        pyr.maps.push_back(reshape(m, {m.dim(1), m.dim(2), m.dim(3), m.dim(4)}));
        pyr.grids.push_back(make_grid_map(vol, m.dim(2), m.dim(3), m.dim(4)));
    }
    return pyr;
}

}  // namespace voxmesh
