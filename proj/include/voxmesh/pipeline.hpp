#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "voxmesh/config.hpp"
#include "voxmesh/metrics.hpp"
#include "voxmesh/params.hpp"
#include "voxmesh/synth.hpp"
#include "voxmesh/templates.hpp"

namespace voxmesh {

// ---------------------------------------------------------------------------
// Template construction
// ---------------------------------------------------------------------------

enum class TemplateSource { Mean, Specific };

// Vertex-wise average of meshes sharing one topology; meshes that disagree
// are listed by id in the error. A (near-)degenerate average is accepted
// with a warning on `warn`.
TriMesh mean_mesh(const std::vector<TriMesh>& meshes, const std::vector<std::string>& ids,
                  std::ostream* warn = nullptr);

// Baseline mesh from the dataset's training split: the topology-checked mean
// or training mesh `index`, optionally Taubin-smoothed.
TriMesh build_baseline_mesh(const Dataset& ds, TemplateSource source, int index,
                            int smooth_iters, std::ostream* warn = nullptr);

// ---------------------------------------------------------------------------
// Model assembly: template bundle + parameter set for one configuration
// ---------------------------------------------------------------------------

struct Model {
    RunConfig cfg;
    int d = 0, h = 0, w = 0;  // volume extents the parameter shapes assume
    TemplateBundle bundle;
    BundleAdjacency ladder;   // per-level normalized adjacency for the decoder
    SparseMatrix adj0;        // finest-level adjacency for the deformer
    MeshTopology topo;        // finest-level connectivity for the losses
    Tensor baseline;          // [N0,3] template coordinates, constant
    std::int64_t x4_numel = 0;
    ModelParams params;
};

// Loads the bundle from cfg.tpl (or takes one directly) and registers the
// parameter set the mode needs: feature extractor, displacement decoder for
// modes that use it, deformation stages. The bundle's baseline serves as the
// template coordinates; whether that file holds a mean or a specific-subject
// mesh was decided when it was built.
Model build_model(const RunConfig& cfg, int d, int h, int w);
Model build_model(const RunConfig& cfg, int d, int h, int w, TemplateBundle bundle);

struct ForwardResult {
    Tensor displacement;     // decoder output [N0,3]; undefined for Ts/Tspe
    DeformationTrace trace;  // initial = composed template, stages = S1..S4
    Tensor seg_logits;       // defined only when the segmentation head ran
};
ForwardResult forward_volume(Model& model, const Volume& vol, bool train);

// Mesh with the given coordinates ([V,3] tensor values) over `faces`.
TriMesh mesh_from_points(const Tensor& pts, const std::vector<Face>& faces);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_chamfer = 0.0;  // raw (unweighted) final-stage chamfer
    double val_loss = 0.0;
    double val_assd = 0.0;
    bool validated = false;
    bool improved = false;
};

struct TrainResult {
    std::vector<EpochStats> log;
    int best_epoch = 0;
    double best_score = 0.0;  // val ASSD, or train loss when no val split
    std::string ckpt_best;
    std::string ckpt_last;
    std::string log_path;
    std::string config_hash;
    std::string manifest_hash;
};

// Full training run into cfg.run_dir: config.json, train_log.csv, best-val
// checkpoint (ckpt_best) and final checkpoint (ckpt_last), both carrying the
// serialized config, its hash, and the dataset manifest hash. Non-finite
// loss aborts with NumericError listing per-term magnitudes.
TrainResult run_training(const RunConfig& cfg, std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Evaluation / inference
// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string split = "test";
    std::string dataset_override;   // evaluate against a different manifest
    std::int64_t metric_samples = 0;  // 0 = value stored in the checkpoint
};

// Rebuilds the model from the checkpoint's embedded config, loads the
// weights, and scores every sample of the split against its gt mesh.
MetricsReport evaluate_checkpoint(const std::string& ckpt_prefix, const EvalOptions& opt = {},
                                  std::ostream* progress = nullptr);

// The run config a checkpoint was trained under (hash-checked).
RunConfig checkpoint_config(const std::string& ckpt_prefix);

struct ReconstructResult {
    TriMesh adaptive;             // composed template for this volume
    std::vector<TriMesh> stages;  // S1..S4
    std::vector<std::string> files;
};

// Single-volume inference; writes <out>_ta.obj and <out>_s1..sK.obj.
ReconstructResult reconstruct_volume(const std::string& ckpt_prefix,
                                     const std::string& volume_prefix,
                                     const std::string& out_prefix,
                                     std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Marching-cubes baseline (oracle segmentation -> surface)
// ---------------------------------------------------------------------------

struct BaselineResult {
    MetricsReport report;  // rows may be empty when every sample was skipped
    int skipped = 0;
};

// Runs marching cubes on each sample's label grid at `iso` and scores the
// result against the gt mesh; samples yielding an empty surface are skipped
// and counted.
BaselineResult baseline_marching_cubes(const std::string& manifest, const std::string& split,
                                       double iso, std::int64_t metric_samples,
                                       std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Ablation matrix
// ---------------------------------------------------------------------------

struct AblationCell {
    std::string label;
    TemplateMode mode = TemplateMode::Ta;
    bool image_decoder = true;
    bool seg_loss = false;
    std::string tpl;            // bundle prefix this cell trains against
    std::uint64_t seed = 0;     // 0 = inherit the base config's seed
};

// The seven reference rows: decoder ablation, seg-loss variant, the four
// template compositions, and the full model.
std::vector<AblationCell> default_ablation_cells(const std::string& tpl_mean,
                                                 const std::string& tpl_specific);

struct AblationRow {
    std::string label;
    std::string template_name;
    bool image_decoder = true;
    bool seg_loss = false;
    double assd = 0.0;      // test ASSD of the final (shared-horizon) model
    double hd = 0.0;
    double assd_best = 0.0; // same metrics at the best-validation snapshot
    double hd_best = 0.0;
    double seconds = 0.0;   // wall time for train + eval of this cell
    std::string error;      // non-empty = cell failed; metrics are NaN
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::string csv_path;
    std::string manifest_hash;
};

// Trains and evaluates every cell (same dataset, seed, and budget), each in
// its own subdirectory of base.run_dir, then writes ablation.csv. Every cell
// trains the same fixed schedule, and variants are compared on the final
// model (row.assd/hd); the best-validation snapshot is reported alongside.
// With a handful of validation subjects, best-epoch selection is noisy and
// tends to land every variant on the same early transient, which would
// compare the variants before they differ. Cell failures are recorded in
// their row; the table is still emitted. `jobs` cells run as independent
// parallel workers (forced to 1 in strict mode).
AblationResult run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                            int jobs = 1, std::ostream* progress = nullptr);

}  // namespace voxmesh
