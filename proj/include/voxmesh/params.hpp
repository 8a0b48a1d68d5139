#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxmesh/rng.hpp"
#include "voxmesh/tensor.hpp"

namespace voxmesh {

// Named store for trainable parameters plus non-trainable buffers (e.g.
// batchnorm running stats). Iteration order is creation order; each
// parameter's initial values depend only on (seed, name), never on what else
// was registered, so architecture variants with fewer layers share the
// surviving weights' init.
class ModelParams {
public:
    ModelParams() = default;
    ModelParams(std::uint64_t seed, std::uint64_t arch_hash)
        : seed_(seed), arch_hash_(arch_hash) {}

    Tensor add_kaiming(const std::string& name, Shape shape, std::int64_t fan_in,
                       Dtype dt = Dtype::F32);
    Tensor add_zeros(const std::string& name, Shape shape, Dtype dt = Dtype::F32);
    Tensor add_ones(const std::string& name, Shape shape, Dtype dt = Dtype::F32);
    // Non-trainable leaf carried through checkpoints (mutated in place).
    Tensor add_buffer(const std::string& name, Shape shape, double fill,
                      Dtype dt = Dtype::F32);

    Tensor get(const std::string& name) const;
    Tensor buffer(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    const std::vector<std::string>& names() const { return order_; }
    const std::vector<std::string>& buffer_names() const { return buffer_order_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t arch_hash() const { return arch_hash_; }
    std::int64_t total_values() const;

    void zero_grad();

private:
    Tensor add_param(const std::string& name, Tensor t);

    std::uint64_t seed_ = 0;
    std::uint64_t arch_hash_ = 0;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
    std::vector<std::string> buffer_order_;
    std::map<std::string, Tensor> buffers_;
};

// Two learning-rate groups: names under the feature-extractor prefix
// ("unet.") train at lr_feature, everything else at lr_rest.
struct AdamConfig {
    double lr_feature = 1e-4;
    double lr_rest = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::string feature_prefix = "unet.";
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update from the accumulated grads; missing grads are
    // treated as zero (parameter still ages through bias correction).
    void step(ModelParams& params);
    std::int64_t steps() const { return t_; }

    const AdamConfig& config() const { return cfg_; }

private:
    friend void save_checkpoint(const ModelParams&, const Adam*, const std::string&,
                                const std::string*);
    friend void load_checkpoint(ModelParams&, Adam*, const std::string&);

    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

// "ATMRN-CKPT-1": <prefix>.json manifest (names, shapes, dtypes, seed,
// architecture hash, optimizer state keys) + <prefix>.bin little-endian blob
// of arrays concatenated in manifest order. Loading requires the existing
// ModelParams to match the manifest exactly (names, shapes, dtypes, hash).
// `meta_json`, when given, must be a JSON object; it is stored verbatim under
// the manifest's "meta" key so a checkpoint carries its full run provenance.
void save_checkpoint(const ModelParams& params, const Adam* opt, const std::string& prefix,
                     const std::string* meta_json = nullptr);
void load_checkpoint(ModelParams& params, Adam* opt, const std::string& prefix);

// The "meta" object stored at save time, as a compact JSON string ("" when
// the checkpoint has none). Does not touch the array blob.
std::string read_checkpoint_meta(const std::string& prefix);

// Architecture hash read without loading arrays (config compatibility probe).
std::uint64_t peek_checkpoint_arch_hash(const std::string& prefix);

}  // namespace voxmesh
