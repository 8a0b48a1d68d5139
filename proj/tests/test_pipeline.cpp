#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "voxmesh/pipeline.hpp"

using namespace voxmesh;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

// Tiny dataset + template fixture shared by the pipeline cases. Built once;
// every test works from its own run directory.
struct Fixture {
    TempDir dir{"voxmesh_pipeline_fix"};
    Dataset ds;
    std::string manifest, tpl;

    Fixture() {
        DatasetSpec spec;
        spec.n = 6;
        spec.fractions = {0.5, 0.25, 0.25};  // 3 / 1.5->2 / 1
        spec.dim_d = spec.dim_h = spec.dim_w = 32;
        spec.mesh_subdivisions = 2;  // 162-vertex meshes
        spec.seed = 77;
        ds = build_dataset(spec, dir.sub("ds"));
        const TriMesh base = build_baseline_mesh(ds, TemplateSource::Mean, 0, 0);
        tpl = dir.sub("tpl");
        save_template_bundle(build_template_bundle(base, {4.0, 2.0, 1.5, 1.2}), tpl);
        manifest = dir.sub("ds") + "/manifest.json";
    }

    RunConfig small_config(const std::string& run_dir) const {
        RunConfig cfg;
        cfg.dataset = manifest;
        cfg.tpl = tpl;
        cfg.run_dir = run_dir;
        cfg.epochs = 2;
        cfg.seed = 11;
        cfg.loss_samples = 400;
        cfg.metric_samples = 512;
        cfg.arch.fcn_hidden = 32;
        cfg.arch.latent = 16;
        cfg.arch.gcn_hidden = 8;
        return cfg;
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config json round trip and validation") {
    RunConfig cfg;
    cfg.dataset = "ds/manifest.json";
    cfg.tpl = "tpl";
    cfg.mode = TemplateMode::TspePlusTd;
    cfg.arch.image_decoder = false;
    cfg.arch.latent = 32;
    cfg.loss.normal = 0.5;
    cfg.lr_feature = 3e-4;
    cfg.epochs = 17;
    cfg.seed = 99;
    cfg.strict = true;

    const RunConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.dataset == cfg.dataset);
    CHECK(back.mode == TemplateMode::TspePlusTd);
    CHECK(back.arch.image_decoder == false);
    CHECK(back.arch.latent == 32);
    CHECK(back.loss.normal == 0.5);
    CHECK(back.lr_feature == 3e-4);
    CHECK(back.epochs == 17);
    CHECK(back.seed == 99);
    CHECK(back.strict == true);
    CHECK(config_hash(back) == config_hash(cfg));

    RunConfig other = cfg;
    other.epochs = 18;
    CHECK(config_hash(other) != config_hash(cfg));

    CHECK_THROWS_AS(config_from_json("{\"bogus\": 1}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"arch\": {\"bogus\": 1}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"mode\": \"Tx\"}"), std::exception);
    CHECK_THROWS_AS(config_from_json("{\"optim\": {\"epochs\": 0}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"optim\": {\"lr_rest\": -1.0}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("not json"), ConfigError);
    CHECK(config_from_json("{}").epochs == RunConfig{}.epochs);
}

TEST_CASE("model arch hash tracks every shape-affecting knob") {
    RunConfig cfg;
    const std::vector<int> levels = {162, 41, 21, 14, 10};
    const auto h0 = model_arch_hash(cfg, 16, 16, 16, levels);
    CHECK(h0 == model_arch_hash(cfg, 16, 16, 16, levels));

    RunConfig m = cfg;
    m.mode = TemplateMode::Ts;
    CHECK(model_arch_hash(m, 16, 16, 16, levels) != h0);
    m = cfg;
    m.arch.image_decoder = false;
    CHECK(model_arch_hash(m, 16, 16, 16, levels) != h0);
    CHECK(model_arch_hash(cfg, 32, 16, 16, levels) != h0);
    CHECK(model_arch_hash(cfg, 16, 16, 16, {162, 41, 21, 14, 9}) != h0);

    // Training-only knobs leave the parameter shapes alone.
    m = cfg;
    m.epochs = 999;
    m.lr_rest = 1.0;
    CHECK(model_arch_hash(m, 16, 16, 16, levels) == h0);
}

TEST_CASE("mean mesh averages and reports topology offenders") {
    TriMesh a = icosphere(1, 1.0);
    TriMesh b = a;
    for (Vec3& v : b.vertices) v = v * 3.0;
    const TriMesh m = mean_mesh({a, b}, {"s0", "s1"});
    for (int i = 0; i < m.vcount(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        CHECK(m.vertices[iu].x == doctest::Approx(2.0 * a.vertices[iu].x).epsilon(1e-12));
    }

    TriMesh c = icosphere(2, 1.0);
    try {
        mean_mesh({a, c, b, c}, {"s0", "s1", "s2", "s3"});
        FAIL("expected topology mismatch");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("s1") != std::string::npos);
        CHECK(msg.find("s3") != std::string::npos);
        CHECK(msg.find("s2") == std::string::npos);
    }

    // Mesh + its reflection average to a degenerate baseline: accepted, warned.
    TriMesh r = a;
    for (Vec3& v : r.vertices) v = v * -1.0;
    std::ostringstream warn;
    const TriMesh zero = mean_mesh({a, r}, {"s0", "s1"}, &warn);
    CHECK(warn.str().find("degenerate") != std::string::npos);
    double mx = 0.0;
    for (const Vec3& v : zero.vertices) mx = std::max(mx, v.norm());
    CHECK(mx < 1e-12);
}

TEST_CASE("baseline mesh source selection") {
    const Fixture& fx = fixture();
    const auto train = fx.ds.split("train");

    const TriMesh spec0 = build_baseline_mesh(fx.ds, TemplateSource::Specific, 0, 0);
    const TriMesh want = load_obj(train[0]->mesh);
    REQUIRE(spec0.vcount() == want.vcount());
    for (int i = 0; i < spec0.vcount(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        CHECK(spec0.vertices[iu].x == want.vertices[iu].x);
        CHECK(spec0.vertices[iu].y == want.vertices[iu].y);
        CHECK(spec0.vertices[iu].z == want.vertices[iu].z);
    }

    const TriMesh smoothed = build_baseline_mesh(fx.ds, TemplateSource::Specific, 0, 5);
    CHECK(surface_area(smoothed) != surface_area(spec0));
    CHECK(smoothed.faces == spec0.faces);

    CHECK_THROWS_AS(build_baseline_mesh(fx.ds, TemplateSource::Specific, 99, 0), ConfigError);
    CHECK_THROWS_AS(build_baseline_mesh(fx.ds, TemplateSource::Specific, -1, 0), ConfigError);

    const TriMesh mean = build_baseline_mesh(fx.ds, TemplateSource::Mean, 0, 0);
    Vec3 acc{};
    for (const DatasetEntry* e : train) acc += load_obj(e->mesh).vertices[0];
    CHECK(mean.vertices[0].x ==
          doctest::Approx(acc.x / static_cast<double>(train.size())).epsilon(1e-12));
}

TEST_CASE("build model registers exactly what the mode needs") {
    const Fixture& fx = fixture();
    RunConfig cfg = fx.small_config(fx.dir.sub("unused"));

    cfg.mode = TemplateMode::Ts;
    Model ts = build_model(cfg, 32, 32, 32);
    for (const std::string& name : ts.params.names())
        CHECK(name.rfind("decoder.", 0) != 0);

    cfg.mode = TemplateMode::Ta;
    Model ta = build_model(cfg, 32, 32, 32);
    bool has_decoder = false;
    for (const std::string& name : ta.params.names())
        has_decoder = has_decoder || name.rfind("decoder.", 0) == 0;
    CHECK(has_decoder);
    CHECK(ta.params.arch_hash() != ts.params.arch_hash());
    CHECK(ta.x4_numel == 1024);  // 128 channels x 2x2x2 at 32^3

    CHECK_THROWS_AS(build_model(cfg, 48, 32, 24), ConfigError);  // not a multiple of 16
    CHECK_THROWS_AS(build_model(cfg, 16, 16, 16), ConfigError);  // bottleneck collapses
}

TEST_CASE("untrained forward is the identity on the template") {
    const Fixture& fx = fixture();
    RunConfig cfg = fx.small_config(fx.dir.sub("unused"));
    Model model = build_model(cfg, 32, 32, 32);

    const Volume vol = load_volume(fx.ds.entries[0].volume);
    ForwardResult fwd = forward_volume(model, vol, false);

    const std::vector<double> base = model.baseline.values();
    const std::vector<double> td = fwd.displacement.values();
    for (double v : td) CHECK(v == 0.0);
    const std::vector<double> init = fwd.trace.initial.values();
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(init[i] == base[i]);
    for (const Tensor& stage : fwd.trace.stages) {
        const std::vector<double> sv = stage.values();
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(sv[i] == base[i]);
    }

    Volume wrong = vol;
    wrong.d = 48;
    wrong.voxels.resize(static_cast<std::size_t>(48 * 32 * 32));
    CHECK_THROWS_AS(forward_volume(model, wrong, false), ConfigError);
}

TEST_CASE("training writes artifacts and both checkpoints carry the config") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_train");
    RunConfig cfg = fx.small_config(run.sub("r"));

    const TrainResult res = run_training(cfg);
    CHECK(res.log.size() == 2);
    CHECK(res.best_epoch >= 1);
    CHECK(std::isfinite(res.log.back().train_loss));
    CHECK(res.log.back().validated);  // val split present, cadence 1

    CHECK(std::filesystem::exists(run.sub("r") + "/config.json"));
    CHECK(std::filesystem::exists(res.ckpt_best + ".bin"));
    CHECK(std::filesystem::exists(res.ckpt_last + ".json"));
    const std::string log_text = slurp(res.log_path);
    CHECK(log_text.find("epoch,train_loss,train_chamfer,val_loss,val_assd,improved") == 0);

    // Embedded config survives and matches what we trained with.
    const RunConfig back = checkpoint_config(res.ckpt_best);
    CHECK(config_hash(back) == config_hash(cfg));

    // config.json can be fed straight back in.
    const RunConfig from_file = load_config_file(run.sub("r") + "/config.json");
    CHECK(config_hash(from_file) == config_hash(cfg));
}

TEST_CASE("strict reruns reproduce checkpoints and logs byte for byte") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_det");
    RunConfig cfg = fx.small_config(run.sub("a"));
    cfg.strict = true;
    const TrainResult a = run_training(cfg);
    cfg.run_dir = run.sub("b");
    const TrainResult b = run_training(cfg);
    CHECK(slurp(a.ckpt_last + ".bin") == slurp(b.ckpt_last + ".bin"));
    CHECK(slurp(a.ckpt_best + ".bin") == slurp(b.ckpt_best + ".bin"));
    CHECK(slurp(a.log_path) == slurp(b.log_path));
}

TEST_CASE("evaluation scores the test split and embeds provenance") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_eval");
    RunConfig cfg = fx.small_config(run.sub("r"));
    const TrainResult tr = run_training(cfg);

    const MetricsReport rep = evaluate_checkpoint(tr.ckpt_best);
    CHECK(rep.rows.size() == fx.ds.split("test").size());
    CHECK(rep.manifest_hash == fx.ds.manifest_hash);
    CHECK(rep.template_mode == "Ta");
    CHECK(rep.config_hash == tr.config_hash);
    for (const MetricsRow& r : rep.rows) {
        CHECK(r.hd >= r.assd);
        CHECK(r.assd > 0.0);
    }

    EvalOptions empty_split;
    empty_split.split = "nope";
    CHECK_THROWS_AS(evaluate_checkpoint(tr.ckpt_best, empty_split), ConfigError);

    EvalOptions more;
    more.metric_samples = 64;
    CHECK(evaluate_checkpoint(tr.ckpt_best, more).samples_per_mesh == 64);
}

TEST_CASE("checkpoint round trip reproduces eval metrics bit for bit") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_rt");
    RunConfig cfg = fx.small_config(run.sub("r"));
    cfg.strict = true;
    const TrainResult tr = run_training(cfg);
    const MetricsReport a = evaluate_checkpoint(tr.ckpt_best);
    const MetricsReport b = evaluate_checkpoint(tr.ckpt_best);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].assd == b.rows[i].assd);
        CHECK(a.rows[i].hd == b.rows[i].hd);
        CHECK(a.rows[i].hd90 == b.rows[i].hd90);
    }
    CHECK(a.mean_assd == b.mean_assd);
}

TEST_CASE("tampering with the embedded config is caught") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_tamper");
    RunConfig cfg = fx.small_config(run.sub("r"));
    cfg.epochs = 1;
    const TrainResult tr = run_training(cfg);

    std::string text = slurp(tr.ckpt_best + ".json");
    const std::string needle = "\"epochs\": 1";
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, needle.size(), "\"epochs\": 7");
    std::ofstream out(tr.ckpt_best + ".json");
    out << text;
    out.close();
    CHECK_THROWS_AS(evaluate_checkpoint(tr.ckpt_best), ConfigError);
}

TEST_CASE("reconstruct writes stage meshes that round-trip and share faces") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_rec");
    RunConfig cfg = fx.small_config(run.sub("r"));
    cfg.epochs = 1;
    const TrainResult tr = run_training(cfg);

    const std::string out_prefix = run.sub("mesh");
    const ReconstructResult rec =
        reconstruct_volume(tr.ckpt_best, fx.ds.entries[0].volume, out_prefix);
    CHECK(rec.stages.size() == 4);
    CHECK(rec.files.size() == 5);

    const TriMesh ta = load_obj(out_prefix + "_ta.obj");
    REQUIRE(ta.vcount() == rec.adaptive.vcount());
    for (int i = 0; i < ta.vcount(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        CHECK(ta.vertices[iu].x == rec.adaptive.vertices[iu].x);
        CHECK(ta.vertices[iu].y == rec.adaptive.vertices[iu].y);
        CHECK(ta.vertices[iu].z == rec.adaptive.vertices[iu].z);
    }
    for (const TriMesh& s : rec.stages) CHECK(s.faces == rec.adaptive.faces);

    CHECK_THROWS_AS(reconstruct_volume(tr.ckpt_best, run.sub("missing"), out_prefix),
                    std::exception);
}

TEST_CASE("marching-cubes baseline scores a split and skips empty surfaces") {
    const Fixture& fx = fixture();
    const BaselineResult res = baseline_marching_cubes(fx.manifest, "test", 0.5, 2000);
    CHECK(res.skipped == 0);
    CHECK(res.report.rows.size() == fx.ds.split("test").size());
    for (const MetricsRow& r : res.report.rows) CHECK(r.hd >= r.assd);
    CHECK(res.report.manifest_hash == fx.ds.manifest_hash);

    // Iso outside (0,1): every surface is empty, everything skipped.
    const BaselineResult none = baseline_marching_cubes(fx.manifest, "test", 2.0, 2000);
    CHECK(none.report.rows.empty());
    CHECK(none.skipped == static_cast<int>(fx.ds.split("test").size()));

    CHECK_THROWS_AS(baseline_marching_cubes(fx.manifest, "bogus", 0.5, 2000), ConfigError);
}

TEST_CASE("ablation matrix emits every row even with a poisoned cell") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_abl");
    RunConfig base = fx.small_config(run.sub("abl"));
    base.epochs = 1;
    base.metric_samples = 256;
    base.loss_samples = 200;

    std::vector<AblationCell> cells = {
        {"a", TemplateMode::Ts, true, false, fx.tpl},
        {"b", TemplateMode::Ta, false, false, fx.tpl},
        {"bad", TemplateMode::Ta, true, false, run.sub("no_such_bundle")},
    };
    const AblationResult res = run_ablation(base, cells, 3);
    REQUIRE(res.rows.size() == 3);
    CHECK(res.rows[0].error.empty());
    CHECK(std::isfinite(res.rows[0].assd));
    CHECK(std::isfinite(res.rows[0].assd_best));
    CHECK(res.rows[1].error.empty());
    CHECK(!res.rows[2].error.empty());
    CHECK(std::isnan(res.rows[2].assd));
    CHECK(std::isnan(res.rows[2].assd_best));
    CHECK(res.manifest_hash == fx.ds.manifest_hash);

    // Both the shared-horizon and best-validation evals land on disk.
    CHECK(std::filesystem::exists(run.sub("abl") + "/a/eval_test.json"));
    CHECK(std::filesystem::exists(run.sub("abl") + "/a/eval_best.json"));

    const std::string csv = slurp(res.csv_path);
    CHECK(csv.find("variant,template,image_decoder,seg_loss,mean_assd,mean_hd,"
                   "best_assd,best_hd,seconds,error") == 0);
    CHECK(csv.find("\nbad,") != std::string::npos);

    // The default matrix is the seven reference rows.
    const auto defaults = default_ablation_cells("m", "s");
    REQUIRE(defaults.size() == 7);
    CHECK(defaults[0].image_decoder == false);
    CHECK(defaults[1].seg_loss == true);
    CHECK(defaults[2].mode == TemplateMode::Tspe);
    CHECK(defaults[2].tpl == "s");
    CHECK(defaults[6].mode == TemplateMode::Ta);
}

TEST_CASE("segmentation-loss training moves the head and stays finite") {
    const Fixture& fx = fixture();
    TempDir run("voxmesh_pipeline_seg");
    RunConfig cfg = fx.small_config(run.sub("r"));
    cfg.arch.seg_loss = true;
    cfg.epochs = 1;
    const TrainResult tr = run_training(cfg);
    CHECK(std::isfinite(tr.log.back().train_loss));

    Model model = build_model(cfg, 32, 32, 32);
    load_checkpoint(model.params, nullptr, tr.ckpt_last);
    const std::vector<double> w = model.params.get("unet.seg.w").values();
    double mx = 0.0;
    for (double v : w) mx = std::max(mx, std::abs(v));
    CHECK(mx > 0.0);
}
