#include "voxmesh/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "voxmesh/losses.hpp"
#include "voxmesh/marching_cubes.hpp"
#include "voxmesh/sampling.hpp"

namespace voxmesh {

namespace {

namespace fs = std::filesystem;

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

// One loaded dataset entry: grids, gt mesh, and the fixed surface-sample
// target the losses train against.
struct Sample {
    std::string id;
    Volume vol;
    Volume labels;
    TriMesh mesh;
    SurfaceSamples gt;
};

std::vector<Sample> load_samples(const Dataset& ds, const std::string& split,
                                 const RunConfig& cfg) {
    std::vector<Sample> out;
    for (const DatasetEntry* e : ds.split(split)) {
        Sample s;
        s.id = e->id;
        s.vol = load_volume(e->volume);
        s.labels = load_volume(e->labels);
        s.mesh = load_obj(e->mesh);
        Rng rng = named_rng(cfg.seed, "gt-samples-" + e->id);
        s.gt = sample_surface_with_normals(s.mesh, cfg.loss_samples, rng);
        out.push_back(std::move(s));
    }
    return out;
}

Tensor sample_objective(const ForwardResult& fwd, const Model& model, const Sample& s) {
    Tensor loss = mesh_loss(fwd.trace, model.topo, s.gt, model.cfg.loss);
    if (model.cfg.arch.seg_loss)
        loss = add(loss, scale(seg_cross_entropy(fwd.seg_logits, s.labels), model.cfg.seg_weight));
    return loss;
}

// Per-term magnitudes for the abort message; best effort, never throws.
std::string loss_diagnostics(const ForwardResult& fwd, const Model& model, const Sample& s) {
    try {
        double cd = 0, lap = 0, nrm = 0, edg = 0;
        for (const Tensor& st : fwd.trace.stages) {
            cd += chamfer(st, s.gt.points).item();
            lap += laplacian_loss(st, model.topo.neighbors).item();
            nrm += normal_loss(st, model.topo.faces, s.gt).item();
            edg += edge_loss(st, model.topo.edges).item();
        }
        const LossWeights& w = model.cfg.loss;
        std::ostringstream ss;
        ss << "chamfer=" << cd << " (w=" << w.chamfer << "), laplacian=" << lap
           << " (w=" << w.laplacian << "), normal=" << nrm << " (w=" << w.normal
           << "), edge=" << edg << " (w=" << w.edge << ")";
        if (model.cfg.arch.seg_loss)
            ss << ", seg=" << seg_cross_entropy(fwd.seg_logits, s.labels).item()
               << " (w=" << model.cfg.seg_weight << ")";
        return ss.str();
    } catch (const std::exception&) {
        return "(term breakdown unavailable)";
    }
}

std::string checkpoint_meta(const RunConfig& cfg, const std::string& manifest_hash,
                            const Model& model, int epoch, double score) {
    nlohmann::ordered_json m;
    m["config"] = nlohmann::ordered_json::parse(config_to_json(cfg));
    m["config_hash"] = hash_hex(config_hash(cfg));
    m["manifest_hash"] = manifest_hash;
    m["dims"] = {model.d, model.h, model.w};
    m["epoch"] = epoch;
    m["score"] = score;
    return m.dump();
}

// Checkpoint meta -> (config, manifest hash, dims), with the hash recheck
// that catches a hand-edited config.
struct CkptInfo {
    RunConfig cfg;
    std::string manifest_hash;
    int d = 0, h = 0, w = 0;
};

CkptInfo read_ckpt_info(const std::string& prefix) {
    const std::string meta = read_checkpoint_meta(prefix);
    if (meta.empty())
        throw ConfigError("checkpoint " + prefix + " carries no embedded run config");
    nlohmann::json m = nlohmann::json::parse(meta);
    CkptInfo info;
    info.cfg = config_from_json(m.at("config").dump());
    if (hash_hex(config_hash(info.cfg)) != m.at("config_hash").get<std::string>())
        throw ConfigError("checkpoint " + prefix +
                          ": embedded config does not match its stored hash");
    info.manifest_hash = m.value("manifest_hash", "");
    info.d = m.at("dims")[0].get<int>();
    info.h = m.at("dims")[1].get<int>();
    info.w = m.at("dims")[2].get<int>();
    return info;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// Template construction
// ---------------------------------------------------------------------------

TriMesh mean_mesh(const std::vector<TriMesh>& meshes, const std::vector<std::string>& ids,
                  std::ostream* warn) {
    if (meshes.empty()) throw ConfigError("mean mesh: no input meshes");
    std::vector<std::string> offenders;
    for (std::size_t i = 1; i < meshes.size(); ++i)
        if (meshes[i].faces != meshes[0].faces || meshes[i].vcount() != meshes[0].vcount())
            offenders.push_back(i < ids.size() ? ids[i] : "#" + std::to_string(i));
    if (!offenders.empty()) {
        std::string msg = "mean mesh: topology differs from " +
                          (ids.empty() ? std::string("#0") : ids[0]) + " for:";
        for (const std::string& o : offenders) msg += " " + o;
        throw ConfigError(msg);
    }
    TriMesh mean = mean_template(meshes);
    if (warn && surface_area(mean) < 1e-9)
        *warn << "warning: mean mesh is (near-)degenerate, surface area "
              << surface_area(mean) << "\n";
    return mean;
}

TriMesh build_baseline_mesh(const Dataset& ds, TemplateSource source, int index,
                            int smooth_iters, std::ostream* warn) {
    const auto train = ds.split("train");
    if (train.empty()) throw ConfigError("template: dataset has no training split");
    TriMesh base;
    if (source == TemplateSource::Mean) {
        std::vector<TriMesh> meshes;
        std::vector<std::string> ids;
        for (const DatasetEntry* e : train) {
            meshes.push_back(load_obj(e->mesh));
            ids.push_back(e->id);
        }
        base = mean_mesh(meshes, ids, warn);
    } else {
        if (index < 0 || index >= static_cast<int>(train.size()))
            throw ConfigError("template: specific index " + std::to_string(index) +
                              " outside the training split (size " +
                              std::to_string(train.size()) + ")");
        base = load_obj(train[static_cast<std::size_t>(index)]->mesh);
    }
    if (smooth_iters < 0) throw ConfigError("template: smooth iterations must be >= 0");
    if (smooth_iters > 0) base = taubin_smooth(base, smooth_iters);
    return base;
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

Model build_model(const RunConfig& cfg, int d, int h, int w) {
    if (cfg.tpl.empty()) throw ConfigError("model: no template bundle configured");
    return build_model(cfg, d, h, w, load_template_bundle(cfg.tpl));
}

Model build_model(const RunConfig& cfg, int d, int h, int w, TemplateBundle bundle) {
    if (cfg.arch.enc_channels.size() != 5)
        throw ConfigError("model: enc_channels must list 5 stages");
    // Four stride-2 halvings divide each extent by 16; below 32 the
    // bottleneck collapses to one voxel per channel, where batch
    // normalization has zero variance in train mode and explodes in eval.
    if (d < 32 || h < 32 || w < 32 || d % 16 || h % 16 || w % 16)
        throw ConfigError("model: volume extents " + std::to_string(d) + "x" +
                          std::to_string(h) + "x" + std::to_string(w) +
                          " must be multiples of 16 and at least 32 (pad the volume)");
    Model m;
    m.cfg = cfg;
    m.d = d;
    m.h = h;
    m.w = w;
    m.bundle = std::move(bundle);
    m.adj0 = build_adjacency(m.bundle.levels[0]);
    m.topo = make_topology(m.bundle.levels[0]);
    m.baseline = mesh_points_tensor(m.bundle.levels[0], cfg.arch.dtype, false);
    m.x4_numel = cfg.arch.enc_channels[4] * (d / 16) * (h / 16) * (w / 16);
    m.params = ModelParams(cfg.seed, model_arch_hash(cfg, d, h, w, m.bundle.level_sizes));
    register_unet_params(m.params, cfg.arch);
    if (mode_uses_displacement(cfg.mode)) {
        m.ladder = build_bundle_adjacency(m.bundle);
        register_decoder_params(m.params, cfg.arch, m.x4_numel, m.bundle);
    }
    register_deformer_params(m.params, cfg.arch);
    return m;
}

ForwardResult forward_volume(Model& model, const Volume& vol, bool train) {
    if (vol.d != model.d || vol.h != model.h || vol.w != model.w)
        throw ConfigError("forward: volume extents " + std::to_string(vol.d) + "x" +
                          std::to_string(vol.h) + "x" + std::to_string(vol.w) +
                          " do not match the model's " + std::to_string(model.d) + "x" +
                          std::to_string(model.h) + "x" + std::to_string(model.w));
    FeaturePyramid pyr = unet_forward(vol, model.params, model.cfg.arch, train);
    ForwardResult r;
    const Tensor* td = nullptr;
    if (mode_uses_displacement(model.cfg.mode)) {
        r.displacement = decode_displacement(pyr.maps[4], model.bundle, model.ladder, model.params);
        td = &r.displacement;
    }
    const Tensor start = compose_template(model.cfg.mode, model.baseline, model.baseline, td);
    r.trace = deform(start, pyr, model.adj0, model.params, model.cfg.arch, train);
    if (model.cfg.arch.seg_loss) r.seg_logits = pyr.seg_logits;
    return r;
}

TriMesh mesh_from_points(const Tensor& pts, const std::vector<Face>& faces) {
    const Shape& sh = pts.shape();
    if (sh.size() != 2 || sh[1] != 3)
        throw ConfigError("mesh_from_points: expected a [V,3] tensor");
    TriMesh mesh;
    mesh.vertices.resize(static_cast<std::size_t>(sh[0]));
    const std::vector<double> v = pts.values();
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        mesh.vertices[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    mesh.faces = faces;
    return mesh;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainResult run_training(const RunConfig& cfg, std::ostream* progress) {
    if (cfg.dataset.empty()) throw ConfigError("train: no dataset configured");
    const Dataset ds = load_dataset(cfg.dataset);
    Model model = build_model(cfg, static_cast<int>(ds.spec.dim_d),
                              static_cast<int>(ds.spec.dim_h), static_cast<int>(ds.spec.dim_w));

    std::vector<Sample> train_set = load_samples(ds, "train", cfg);
    std::vector<Sample> val_set = load_samples(ds, "val", cfg);
    if (train_set.empty()) throw ConfigError("train: dataset has no training split");

    fs::create_directories(cfg.run_dir);
    {
        std::ofstream cj(cfg.run_dir + "/config.json");
        if (!cj.good()) throw ConfigError("train: cannot write to " + cfg.run_dir);
        cj << config_to_json(cfg) << "\n";
    }

    AdamConfig acfg;
    acfg.lr_feature = cfg.lr_feature;
    acfg.lr_rest = cfg.lr_rest;
    Adam opt(acfg);

    TrainResult result;
    result.config_hash = hash_hex(config_hash(cfg));
    result.manifest_hash = ds.manifest_hash;
    result.ckpt_best = cfg.run_dir + "/ckpt_best";
    result.ckpt_last = cfg.run_dir + "/ckpt_last";
    result.log_path = cfg.run_dir + "/train_log.csv";
    result.best_score = std::numeric_limits<double>::infinity();

    std::ofstream log(result.log_path);
    if (!log.good()) throw ConfigError("train: cannot write " + result.log_path);
    log << "epoch,train_loss,train_chamfer,val_loss,val_assd,improved\n";

    Rng shuffle_rng = named_rng(cfg.seed, "epoch-shuffle");
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const bool have_val = !val_set.empty();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                          static_cast<std::int64_t>(i)))]);

        // Redraw the loss targets every epoch: a fixed point set is a target
        // the mesh can memorize, which shows up as train chamfer sinking
        // below what the validation surfaces support. Fresh draws keep the
        // loss an unbiased estimate of the true surface distance. Validation
        // targets stay fixed so the selection metric is stable. Streams are
        // keyed by (seed, subject, epoch), so runs remain reproducible.
        for (Sample& s : train_set) {
            Rng rng = named_rng(cfg.seed,
                                "gt-samples-" + s.id + "-e" + std::to_string(epoch));
            s.gt = sample_surface_with_normals(s.mesh, cfg.loss_samples, rng);
        }

        double epoch_loss = 0.0, epoch_cd = 0.0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                      order.size() - cursor);
            model.params.zero_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                const Sample& s = train_set[order[cursor + b]];
                ForwardResult fwd = forward_volume(model, s.vol, true);
                Tensor loss = sample_objective(fwd, model, s);
                const double lv = loss.item();
                if (!std::isfinite(lv))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", sample " + s.id + ": " +
                                       loss_diagnostics(fwd, model, s));
                epoch_loss += lv;
                epoch_cd += chamfer(fwd.trace.stages.back(), s.gt.points).item();
                backward(batch > 1 ? scale(loss, 1.0 / static_cast<double>(batch)) : loss);
            }
            opt.step(model.params);
            cursor += batch;
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = epoch_loss / static_cast<double>(train_set.size());
        st.train_chamfer = epoch_cd / static_cast<double>(train_set.size());

        if (have_val && (epoch % cfg.val_every == 0 || epoch == cfg.epochs)) {
            double vloss = 0.0, vassd = 0.0;
            for (const Sample& s : val_set) {
                ForwardResult fwd = forward_volume(model, s.vol, false);
                const double lv = sample_objective(fwd, model, s).item();
                if (!std::isfinite(lv))
                    throw NumericError("train: non-finite validation loss at epoch " +
                                       std::to_string(epoch) + ", sample " + s.id + ": " +
                                       loss_diagnostics(fwd, model, s));
                vloss += lv;
                const TriMesh pred = mesh_from_points(fwd.trace.stages.back(), model.topo.faces);
                vassd += surface_distance(pred, s.mesh, cfg.metric_samples).assd;
            }
            st.val_loss = vloss / static_cast<double>(val_set.size());
            st.val_assd = vassd / static_cast<double>(val_set.size());
            st.validated = true;
        }

        // Best = lowest val ASSD; without a val split the best checkpoint is
        // the final one and the log tracks train loss instead.
        const double score = have_val ? (st.validated ? st.val_assd : result.best_score)
                                      : st.train_loss;
        if (score < result.best_score) {
            result.best_score = score;
            result.best_epoch = epoch;
            st.improved = true;
            if (have_val) {
                const std::string meta =
                    checkpoint_meta(cfg, ds.manifest_hash, model, epoch, score);
                save_checkpoint(model.params, nullptr, result.ckpt_best, &meta);
            }
        }

        log << st.epoch << "," << fmt("%.17g", st.train_loss) << ","
            << fmt("%.17g", st.train_chamfer) << ",";
        if (st.validated)
            log << fmt("%.17g", st.val_loss) << "," << fmt("%.17g", st.val_assd);
        else
            log << ",";
        log << "," << (st.improved ? 1 : 0) << "\n";
        log.flush();

        if (progress) {
            *progress << "epoch " << epoch << "/" << cfg.epochs << " train_loss="
                      << fmt("%.6g", st.train_loss) << " chamfer="
                      << fmt("%.6g", st.train_chamfer);
            if (st.validated)
                *progress << " val_loss=" << fmt("%.6g", st.val_loss) << " val_assd="
                          << fmt("%.6g", st.val_assd);
            if (st.improved) *progress << " *";
            *progress << "\n";
        }
        result.log.push_back(st);
    }

    {
        const std::string meta = checkpoint_meta(cfg, ds.manifest_hash, model, cfg.epochs,
                                                 result.best_score);
        save_checkpoint(model.params, &opt, result.ckpt_last, &meta);
        if (!have_val) save_checkpoint(model.params, nullptr, result.ckpt_best, &meta);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation / inference
// ---------------------------------------------------------------------------

RunConfig checkpoint_config(const std::string& ckpt_prefix) {
    return read_ckpt_info(ckpt_prefix).cfg;
}

MetricsReport evaluate_checkpoint(const std::string& ckpt_prefix, const EvalOptions& opt,
                                  std::ostream* progress) {
    CkptInfo info = read_ckpt_info(ckpt_prefix);
    RunConfig cfg = info.cfg;
    if (!opt.dataset_override.empty()) cfg.dataset = opt.dataset_override;
    const Dataset ds = load_dataset(cfg.dataset);
    if (opt.dataset_override.empty() && !info.manifest_hash.empty() &&
        ds.manifest_hash != info.manifest_hash)
        throw ConfigError("eval: dataset manifest hash " + ds.manifest_hash +
                          " differs from the checkpoint's " + info.manifest_hash);
    if (static_cast<int>(ds.spec.dim_d) != info.d || static_cast<int>(ds.spec.dim_h) != info.h ||
        static_cast<int>(ds.spec.dim_w) != info.w)
        throw ConfigError("eval: checkpoint was trained at " + std::to_string(info.d) + "x" +
                          std::to_string(info.h) + "x" + std::to_string(info.w) +
                          ", dataset provides " + std::to_string(ds.spec.dim_d) + "x" +
                          std::to_string(ds.spec.dim_h) + "x" + std::to_string(ds.spec.dim_w));

    Model model = build_model(cfg, info.d, info.h, info.w);
    load_checkpoint(model.params, nullptr, ckpt_prefix);

    const std::vector<Sample> samples = load_samples(ds, opt.split, cfg);
    if (samples.empty()) throw ConfigError("eval: split \"" + opt.split + "\" is empty");
    const std::int64_t n_samples = opt.metric_samples > 0 ? opt.metric_samples
                                                          : cfg.metric_samples;

    MetricsReport report;
    report.samples_per_mesh = n_samples;
    report.template_mode = template_mode_name(cfg.mode);
    report.config_hash = hash_hex(config_hash(info.cfg));
    report.manifest_hash = ds.manifest_hash;
    for (const Sample& s : samples) {
        ForwardResult fwd = forward_volume(model, s.vol, false);
        const TriMesh pred = mesh_from_points(fwd.trace.stages.back(), model.topo.faces);
        const SurfaceDistance sd = surface_distance(pred, s.mesh, n_samples);
        report.rows.push_back({s.id, sd.assd, sd.hd, sd.hd90});
        if (progress)
            *progress << s.id << " assd=" << fmt("%.6g", sd.assd)
                      << " hd=" << fmt("%.6g", sd.hd) << "\n";
    }
    finalize_report(report);
    return report;
}

ReconstructResult reconstruct_volume(const std::string& ckpt_prefix,
                                     const std::string& volume_prefix,
                                     const std::string& out_prefix, std::ostream* progress) {
    CkptInfo info = read_ckpt_info(ckpt_prefix);
    const Volume vol = load_volume(volume_prefix);
    if (vol.d != info.d || vol.h != info.h || vol.w != info.w)
        throw ConfigError("reconstruct: volume extents " + std::to_string(vol.d) + "x" +
                          std::to_string(vol.h) + "x" + std::to_string(vol.w) +
                          " do not match the checkpoint's " + std::to_string(info.d) + "x" +
                          std::to_string(info.h) + "x" + std::to_string(info.w) +
                          " (extents must be multiples of 16)");

    Model model = build_model(info.cfg, info.d, info.h, info.w);
    load_checkpoint(model.params, nullptr, ckpt_prefix);

    ForwardResult fwd = forward_volume(model, vol, false);
    ReconstructResult out;
    out.adaptive = mesh_from_points(fwd.trace.initial, model.topo.faces);
    const std::string ta_path = out_prefix + "_ta.obj";
    save_obj(out.adaptive, ta_path);
    out.files.push_back(ta_path);
    if (progress)
        *progress << "t_a: " << out.adaptive.vcount() << " vertices -> " << ta_path << "\n";
    for (std::size_t i = 0; i < fwd.trace.stages.size(); ++i) {
        TriMesh stage = mesh_from_points(fwd.trace.stages[i], model.topo.faces);
        const std::string path = out_prefix + "_s" + std::to_string(i + 1) + ".obj";
        save_obj(stage, path);
        out.files.push_back(path);
        if (progress)
            *progress << "s" << (i + 1) << ": " << stage.vcount() << " vertices -> " << path
                      << "\n";
        out.stages.push_back(std::move(stage));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Marching-cubes baseline
// ---------------------------------------------------------------------------

BaselineResult baseline_marching_cubes(const std::string& manifest, const std::string& split,
                                       double iso, std::int64_t metric_samples,
                                       std::ostream* progress) {
    if (metric_samples < 1) throw ConfigError("baseline-mc: metric_samples must be >= 1");
    const Dataset ds = load_dataset(manifest);
    const auto entries = ds.split(split);
    if (entries.empty()) throw ConfigError("baseline-mc: split \"" + split + "\" is empty");

    BaselineResult out;
    out.report.samples_per_mesh = metric_samples;
    out.report.template_mode = "baseline-mc";
    out.report.config_hash =
        hash_hex(fnv1a("baseline-mc|iso=" + fmt("%.17g", iso) +
                       "|samples=" + std::to_string(metric_samples) + "|split=" + split));
    out.report.manifest_hash = ds.manifest_hash;
    for (const DatasetEntry* e : entries) {
        const Volume labels = load_volume(e->labels);
        const TriMesh mc = marching_cubes(labels, iso);
        if (mc.faces.empty()) {
            ++out.skipped;
            if (progress) *progress << e->id << ": empty surface at iso=" << iso << ", skipped\n";
            continue;
        }
        const TriMesh gt = load_obj(e->mesh);
        const SurfaceDistance sd = surface_distance(mc, gt, metric_samples);
        out.report.rows.push_back({e->id, sd.assd, sd.hd, sd.hd90});
        if (progress)
            *progress << e->id << " assd=" << fmt("%.6g", sd.assd) << " hd=" << fmt("%.6g", sd.hd)
                      << "\n";
    }
    if (!out.report.rows.empty()) finalize_report(out.report);
    return out;
}

// ---------------------------------------------------------------------------
// Ablation matrix
// ---------------------------------------------------------------------------

std::vector<AblationCell> default_ablation_cells(const std::string& tpl_mean,
                                                 const std::string& tpl_specific) {
    return {
        {"v1", TemplateMode::Ta, false, false, tpl_mean},       // no image decoder
        {"v2", TemplateMode::Ta, true, true, tpl_mean},         // + segmentation loss
        {"v3", TemplateMode::Tspe, true, false, tpl_specific},  // specific template
        {"v4", TemplateMode::TspePlusTd, true, false, tpl_specific},
        {"v5", TemplateMode::Td, true, false, tpl_mean},        // displacement only
        {"v6", TemplateMode::Ts, true, false, tpl_mean},        // mean template only
        {"full", TemplateMode::Ta, true, false, tpl_mean},
    };
}

AblationResult run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                            int jobs, std::ostream* progress) {
    if (cells.empty()) throw ConfigError("ablate: empty cell list");
    if (base.dataset.empty()) throw ConfigError("ablate: no dataset configured");
    const Dataset ds = load_dataset(base.dataset);  // fail fast, pin provenance
    fs::create_directories(base.run_dir);

    AblationResult result;
    result.manifest_hash = ds.manifest_hash;
    result.rows.resize(cells.size());

    int workers = std::max(1, jobs);
    if (base.strict) workers = 1;
    workers = std::min<int>(workers, static_cast<int>(cells.size()));

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const AblationCell& cell = cells[i];
            AblationRow row;
            row.label = cell.label;
            row.template_name = template_mode_name(cell.mode);
            row.image_decoder = cell.image_decoder;
            row.seg_loss = cell.seg_loss;
            const auto cell_start = std::chrono::steady_clock::now();
            try {
                RunConfig c = base;
                c.mode = cell.mode;
                c.arch.image_decoder = cell.image_decoder;
                c.arch.seg_loss = cell.seg_loss;
                if (!cell.tpl.empty()) c.tpl = cell.tpl;
                if (cell.seed != 0) c.seed = cell.seed;
                c.run_dir = base.run_dir + "/" + cell.label;
                const TrainResult tr = run_training(c, nullptr);
                const MetricsReport rep = evaluate_checkpoint(tr.ckpt_last, {});
                const MetricsReport rep_best = evaluate_checkpoint(tr.ckpt_best, {});
                const std::string cj = config_to_json(c);
                save_metrics_json(rep, c.run_dir + "/eval_test.json", &cj);
                save_metrics_csv(rep, c.run_dir + "/eval_test.csv");
                save_metrics_json(rep_best, c.run_dir + "/eval_best.json", &cj);
                save_metrics_csv(rep_best, c.run_dir + "/eval_best.csv");
                row.assd = rep.mean_assd;
                row.hd = rep.mean_hd;
                row.assd_best = rep_best.mean_assd;
                row.hd_best = rep_best.mean_hd;
            } catch (const std::exception& e) {
                row.assd = std::numeric_limits<double>::quiet_NaN();
                row.hd = std::numeric_limits<double>::quiet_NaN();
                row.assd_best = std::numeric_limits<double>::quiet_NaN();
                row.hd_best = std::numeric_limits<double>::quiet_NaN();
                row.error = e.what();
            }
            row.seconds = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - cell_start).count();
            std::lock_guard<std::mutex> lock(mu);
            result.rows[i] = row;
            if (progress) {
                *progress << cell.label << " (" << row.template_name << ")";
                if (row.error.empty())
                    *progress << " assd=" << fmt("%.6g", row.assd)
                              << " hd=" << fmt("%.6g", row.hd) << "\n";
                else
                    *progress << " FAILED: " << row.error << "\n";
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    result.csv_path = base.run_dir + "/ablation.csv";
    std::ofstream csv(result.csv_path);
    if (!csv.good()) throw ConfigError("ablate: cannot write " + result.csv_path);
    csv << "variant,template,image_decoder,seg_loss,mean_assd,mean_hd,best_assd,best_hd,"
           "seconds,error\n";
    for (const AblationRow& r : result.rows) {
        csv << r.label << "," << r.template_name << "," << (r.image_decoder ? 1 : 0) << ","
            << (r.seg_loss ? 1 : 0) << "," << fmt("%.9g", r.assd) << "," << fmt("%.9g", r.hd)
            << "," << fmt("%.9g", r.assd_best) << "," << fmt("%.9g", r.hd_best) << ","
            << fmt("%.3f", r.seconds) << "," << csv_quote(r.error) << "\n";
    }
    return result;
}

}  // namespace voxmesh
