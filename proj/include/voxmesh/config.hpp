#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "voxmesh/losses.hpp"
#include "voxmesh/net.hpp"

namespace voxmesh {

// Bad arguments, files, or shapes: the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric breakdown (NaN/Inf loss): the CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything a training/eval run needs, fully serializable. The defaults are
// the reference recipe: feature extractor at 1e-4, everything else at 5e-5,
// batch size 1, latent 128, loss weights (5, 0.1, 0.001, 5).
struct RunConfig {
    std::string dataset;       // dataset manifest path
    std::string tpl;           // template bundle prefix (TPLB-1)
    std::string run_dir = "run";
    TemplateMode mode = TemplateMode::Ta;
    ArchConfig arch;
    LossWeights loss;
    double seg_weight = 1.0;   // cross-entropy weight when arch.seg_loss
    double lr_feature = 1e-4;
    double lr_rest = 5e-5;
    int batch_size = 1;
    int epochs = 100;
    std::uint64_t seed = 1234;
    int val_every = 1;                  // validation cadence in epochs
    std::int64_t loss_samples = 3000;   // gt surface samples per training target
    std::int64_t metric_samples = 4096; // samples per mesh for ASSD/HD
    bool strict = false;                // forbid any parallel evaluation paths
};

// True for modes whose template composition consumes the decoder output.
bool mode_uses_displacement(TemplateMode mode);

// Canonical JSON round trip. Parsing rejects unknown keys and bad values
// with ConfigError; missing keys keep their defaults.
std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
RunConfig load_config_file(const std::string& path);

// FNV-1a over the canonical serialization: any field change moves the hash.
std::uint64_t config_hash(const RunConfig& cfg);

// Hash of everything that shapes the parameter set: architecture fields,
// template mode, volume extents, and the template level sizes. Stored in
// ModelParams so checkpoints only load into an identically-shaped model.
std::uint64_t model_arch_hash(const RunConfig& cfg, int d, int h, int w,
                              const std::vector<int>& level_sizes);

}  // namespace voxmesh
