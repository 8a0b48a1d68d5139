#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxmesh/params.hpp"
#include "voxmesh/sampling.hpp"
#include "voxmesh/templates.hpp"
#include "voxmesh/volume.hpp"

namespace voxmesh {

// Architecture knobs shared by the three networks. The widths are the desk-
// scale defaults; everything here feeds the architecture hash, so a
// checkpoint only loads into the exact same configuration.
struct ArchConfig {
    std::vector<std::int64_t> enc_channels = {8, 16, 32, 64, 128};  // X0..X4
    bool image_decoder = true;   // false = drop X5..X8 and their params
    bool seg_loss = false;       // true = add the 1x1x1 segmentation head
    std::int64_t seg_classes = 2;
    std::int64_t latent = 128;       // latent embedding length l
    std::int64_t fcn_hidden = 512;   // width between flatten(X4) and l
    std::int64_t gcn_hidden = 64;    // deformation block hidden width
    int deform_stages = 4;
    int deform_layers = 3;           // graph-conv layers per block
    bool resample_each_stage = true; // vertex features track moving vertices
    Dtype dtype = Dtype::F32;        // F64 for finite-difference checks
};

// Total channels a pyramid built from this config carries (X0..X8 or X0..X4).
std::int64_t pyramid_channels(const ArchConfig& cfg);

// [1, 1, D, H, W] tensor of the volume's intensities.
Tensor volume_tensor(const Volume& vol, Dtype dt = Dtype::F32);

// --------------------------------------------------------------------------
// Feature extractor: stem + 4 stride-2 conv blocks down, 4 stride-2
// transposed-conv blocks up with encoder skips concatenated in.
// --------------------------------------------------------------------------
void register_unet_params(ModelParams& params, const ArchConfig& cfg);
FeaturePyramid unet_forward(const Volume& vol, ModelParams& params, const ArchConfig& cfg,
                            bool train);

// --------------------------------------------------------------------------
// Mesh decoder: flatten(X4) -> fcn_hidden -> latent -> coarsest coords,
// then four upsample+graph-conv blocks back to full template resolution.
// --------------------------------------------------------------------------
struct BundleAdjacency {
    std::vector<SparseMatrix> levels;  // symmetric-normalized, fine -> coarse
};
BundleAdjacency build_bundle_adjacency(const TemplateBundle& bundle);

void register_decoder_params(ModelParams& params, const ArchConfig& cfg,
                             std::int64_t x4_numel, const TemplateBundle& bundle);
// Displacement coordinates [N0, 3] over the bundle baseline topology.
Tensor decode_displacement(const Tensor& x4, const TemplateBundle& bundle,
                           const BundleAdjacency& adj, ModelParams& params);

enum class TemplateMode { Ts, Tspe, Td, TspePlusTd, Ta };
const char* template_mode_name(TemplateMode mode);
TemplateMode template_mode_from(const std::string& name);

// Template composition over [V,3] coordinate tensors; td may be null for
// modes that do not use the displacement decoder.
Tensor compose_template(TemplateMode mode, const Tensor& ts, const Tensor& tspe,
                        const Tensor* td);

// --------------------------------------------------------------------------
// Deformer: four residual blocks; each resamples the pyramid at the current
// vertex positions, concatenates coordinates, runs graph-conv layers with
// batchnorm+ReLU, and adds a zero-initialized 3-channel projection.
// --------------------------------------------------------------------------
void register_deformer_params(ModelParams& params, const ArchConfig& cfg);

struct DeformationTrace {
    Tensor initial;              // composed template [V,3]
    std::vector<Tensor> stages;  // S1..S4, each [V,3]
};
DeformationTrace deform(const Tensor& start, const FeaturePyramid& pyr,
                        const SparseMatrix& adj0, ModelParams& params, const ArchConfig& cfg,
                        bool train);

}  // namespace voxmesh
