#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxmesh/pipeline.hpp"

using namespace voxmesh;

namespace {

void add_make_dataset(CLI::App& app) {
    auto* cmd = app.add_subcommand("make-dataset", "Generate a synthetic shape dataset");
    auto spec = std::make_shared<DatasetSpec>();
    auto out_dir = std::make_shared<std::string>();
    auto dims = std::make_shared<int>(0);
    auto fracs = std::make_shared<std::vector<double>>();
    cmd->add_option("--out", *out_dir, "output directory")->required();
    cmd->add_option("--n", spec->n, "number of subjects");
    cmd->add_option("--seed", spec->seed, "master seed");
    cmd->add_option("--bumpiness", spec->bumpiness, "shape irregularity in [0, 0.3]");
    cmd->add_option("--modes", spec->mode_count, "bump modes per shape (1..8)");
    cmd->add_option("--dims", *dims, "cubic volume extent (multiple of 16, >= 32 to train)");
    cmd->add_option("--blur", spec->blur_passes, "intensity smoothing passes");
    cmd->add_option("--subdiv", spec->mesh_subdivisions, "gt mesh subdivision level");
    cmd->add_option("--fractions", *fracs, "train/val/test fractions")->expected(3);
    cmd->callback([cmd, spec, out_dir, dims, fracs] {
        if (cmd->count("--dims")) spec->dim_d = spec->dim_h = spec->dim_w = *dims;
        if (cmd->count("--fractions"))
            spec->fractions = {(*fracs)[0], (*fracs)[1], (*fracs)[2]};
        const Dataset ds = build_dataset(*spec, *out_dir);
        std::cout << "wrote " << ds.entries.size() << " subjects to " << *out_dir << " (train "
                  << ds.split("train").size() << ", val " << ds.split("val").size() << ", test "
                  << ds.split("test").size() << ")\n"
                  << "manifest " << *out_dir << "/manifest.json hash " << ds.manifest_hash
                  << "\n";
    });
}

void add_make_template(CLI::App& app) {
    auto* cmd = app.add_subcommand("make-template", "Build a template bundle from a dataset");
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto source = std::make_shared<std::string>("mean");
    auto index = std::make_shared<int>(0);
    auto smooth = std::make_shared<int>(0);
    auto factors = std::make_shared<std::vector<double>>();
    cmd->add_option("--dataset", *manifest, "dataset manifest")->required();
    cmd->add_option("--out", *out, "bundle file prefix")->required();
    cmd->add_option("--source", *source, "mean | specific")
        ->check(CLI::IsMember({"mean", "specific"}));
    cmd->add_option("--index", *index, "training mesh index for --source specific");
    cmd->add_option("--smooth", *smooth, "Taubin smoothing iterations");
    cmd->add_option("--factors", *factors, "fine-to-coarse decimation factors")->expected(4);
    cmd->callback([cmd, manifest, out, source, index, smooth, factors] {
        const Dataset ds = load_dataset(*manifest);
        const TemplateSource src =
            *source == "mean" ? TemplateSource::Mean : TemplateSource::Specific;
        const TriMesh base = build_baseline_mesh(ds, src, *index, *smooth, &std::cerr);
        std::array<double, 4> f = kDefaultFactors;
        if (cmd->count("--factors")) f = {(*factors)[0], (*factors)[1], (*factors)[2], (*factors)[3]};
        const TemplateBundle bundle = build_template_bundle(base, f);
        save_template_bundle(bundle, *out);
        std::cout << "template " << *out << " levels:";
        for (int n : bundle.level_sizes) std::cout << " " << n;
        std::cout << "\n";
    });
}

// Shared flag set for train/ablate; applies only the flags actually passed
// on top of the config file (or the defaults).
struct TrainFlags {
    std::string config_file, dataset, tpl, run_dir, mode;
    int epochs = 0, batch = 0, val_every = 0;
    double lr_feature = 0, lr_rest = 0;
    std::uint64_t seed = 0;
    std::int64_t loss_samples = 0, metric_samples = 0, latent = 0;
    bool strict = false, no_image_decoder = false, seg_loss = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON run config; flags override it");
        cmd->add_option("--dataset", dataset, "dataset manifest");
        cmd->add_option("--template", tpl, "template bundle prefix");
        cmd->add_option("--run-dir", run_dir, "output directory");
        cmd->add_option("--mode", mode, "Ts | Tspe | Td | TspePlusTd | Ta");
        cmd->add_option("--epochs", epochs);
        cmd->add_option("--batch-size", batch);
        cmd->add_option("--val-every", val_every, "validation cadence in epochs");
        cmd->add_option("--lr-feature", lr_feature, "feature-extractor learning rate");
        cmd->add_option("--lr-rest", lr_rest, "learning rate for everything else");
        cmd->add_option("--seed", seed);
        cmd->add_option("--loss-samples", loss_samples, "gt samples for the training loss");
        cmd->add_option("--metric-samples", metric_samples, "samples per mesh for ASSD/HD");
        cmd->add_option("--latent", latent, "latent embedding width");
        cmd->add_flag("--strict", strict, "strict determinism (no parallel paths)");
        cmd->add_flag("--no-image-decoder", no_image_decoder, "encoder-only features");
        cmd->add_flag("--seg-loss", seg_loss, "add the segmentation head and loss");
    }

    RunConfig resolve(CLI::App* cmd) const {
        RunConfig cfg = config_file.empty() ? RunConfig{} : load_config_file(config_file);
        if (cmd->count("--dataset")) cfg.dataset = dataset;
        if (cmd->count("--template")) cfg.tpl = tpl;
        if (cmd->count("--run-dir")) cfg.run_dir = run_dir;
        if (cmd->count("--mode")) cfg.mode = template_mode_from(mode);
        if (cmd->count("--epochs")) cfg.epochs = epochs;
        if (cmd->count("--batch-size")) cfg.batch_size = batch;
        if (cmd->count("--val-every")) cfg.val_every = val_every;
        if (cmd->count("--lr-feature")) cfg.lr_feature = lr_feature;
        if (cmd->count("--lr-rest")) cfg.lr_rest = lr_rest;
        if (cmd->count("--seed")) cfg.seed = seed;
        if (cmd->count("--loss-samples")) cfg.loss_samples = loss_samples;
        if (cmd->count("--metric-samples")) cfg.metric_samples = metric_samples;
        if (cmd->count("--latent")) cfg.arch.latent = latent;
        if (cmd->count("--strict")) cfg.strict = true;
        if (cmd->count("--no-image-decoder")) cfg.arch.image_decoder = false;
        if (cmd->count("--seg-loss")) cfg.arch.seg_loss = true;
        if (cfg.dataset.empty()) throw ConfigError("no dataset given (--dataset or config file)");
        if (cfg.tpl.empty()) throw ConfigError("no template given (--template or config file)");
        // Re-validate the merged result through the canonical round trip.
        return config_from_json(config_to_json(cfg));
    }
};

void add_train(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train a model");
    auto flags = std::make_shared<TrainFlags>();
    flags->add_to(cmd);
    cmd->callback([cmd, flags] {
        const RunConfig cfg = flags->resolve(cmd);
        const TrainResult res = run_training(cfg, &std::cout);
        std::cout << "best epoch " << res.best_epoch << " (score "
                  << res.best_score << ")\n"
                  << "checkpoints: " << res.ckpt_best << " " << res.ckpt_last << "\n"
                  << "log: " << res.log_path << "\n";
    });
}

void add_eval(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    auto ckpt = std::make_shared<std::string>();
    auto opts = std::make_shared<EvalOptions>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--checkpoint", *ckpt, "checkpoint prefix")->required();
    cmd->add_option("--split", opts->split, "train | val | test");
    cmd->add_option("--dataset", opts->dataset_override, "override the checkpoint's dataset");
    cmd->add_option("--samples", opts->metric_samples, "samples per mesh for ASSD/HD");
    cmd->add_option("--out", *out, "report prefix (default: alongside the checkpoint)");
    cmd->callback([ckpt, opts, out] {
        const MetricsReport report = evaluate_checkpoint(*ckpt, *opts, &std::cout);
        std::string prefix = *out;
        if (prefix.empty())
            prefix = (std::filesystem::path(*ckpt).parent_path() / ("eval_" + opts->split))
                         .string();
        const std::string cj = config_to_json(checkpoint_config(*ckpt));
        save_metrics_json(report, prefix + ".json", &cj);
        save_metrics_csv(report, prefix + ".csv");
        std::cout << "mean assd " << report.mean_assd << ", hd " << report.mean_hd << ", hd90 "
                  << report.mean_hd90 << " over " << report.rows.size() << " subjects\n"
                  << "report: " << prefix << ".json\n";
    });
}

void add_reconstruct(CLI::App& app) {
    auto* cmd = app.add_subcommand("reconstruct", "Run one volume through a checkpoint");
    auto ckpt = std::make_shared<std::string>();
    auto vol = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--checkpoint", *ckpt, "checkpoint prefix")->required();
    cmd->add_option("--volume", *vol, "volume file prefix")->required();
    cmd->add_option("--out", *out, "output mesh prefix")->required();
    cmd->callback([ckpt, vol, out] { reconstruct_volume(*ckpt, *vol, *out, &std::cout); });
}

void add_baseline_mc(CLI::App& app) {
    auto* cmd = app.add_subcommand("baseline-mc",
                                   "Marching-cubes-on-labels baseline over a split");
    auto manifest = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("test");
    auto iso = std::make_shared<double>(0.5);
    auto samples = std::make_shared<std::int64_t>(4096);
    auto out = std::make_shared<std::string>();
    cmd->add_option("--dataset", *manifest, "dataset manifest")->required();
    cmd->add_option("--split", *split, "train | val | test");
    cmd->add_option("--iso", *iso, "isosurface level");
    cmd->add_option("--samples", *samples, "samples per mesh for ASSD/HD");
    cmd->add_option("--out", *out, "report prefix (default: baseline_mc_<split>)");
    cmd->callback([manifest, split, iso, samples, out] {
        const BaselineResult res =
            baseline_marching_cubes(*manifest, *split, *iso, *samples, &std::cout);
        if (res.report.rows.empty()) {
            std::cerr << "warning: every sample produced an empty surface at iso=" << *iso
                      << " (" << res.skipped << " skipped); no report written\n";
            return;
        }
        if (res.skipped > 0)
            std::cerr << "warning: " << res.skipped << " sample(s) skipped (empty surface)\n";
        std::string prefix = out->empty() ? "baseline_mc_" + *split : *out;
        nlohmann::ordered_json cj;
        cj["iso"] = *iso;
        cj["samples"] = *samples;
        cj["split"] = *split;
        const std::string cjs = cj.dump();
        save_metrics_json(res.report, prefix + ".json", &cjs);
        save_metrics_csv(res.report, prefix + ".csv");
        std::cout << "mean assd " << res.report.mean_assd << ", hd " << res.report.mean_hd
                  << " over " << res.report.rows.size() << " subjects\n"
                  << "report: " << prefix << ".json\n";
    });
}

void add_ablate(CLI::App& app) {
    auto* cmd = app.add_subcommand("ablate", "Train and score the reference variant matrix");
    auto flags = std::make_shared<TrainFlags>();
    flags->add_to(cmd);
    auto tpl_spe = std::make_shared<std::string>();
    auto jobs = std::make_shared<int>(1);
    cmd->add_option("--template-spe", *tpl_spe,
                    "specific-subject bundle for the Tspe rows (default: --template)");
    cmd->add_option("--jobs", *jobs, "parallel cells");
    cmd->callback([cmd, flags, tpl_spe, jobs] {
        const RunConfig base = flags->resolve(cmd);
        const std::string spe = tpl_spe->empty() ? base.tpl : *tpl_spe;
        const AblationResult res =
            run_ablation(base, default_ablation_cells(base.tpl, spe), *jobs, &std::cout);
        std::cout << "variant  template    imgdec seg   assd        hd\n";
        for (const AblationRow& r : res.rows) {
            char line[160];
            std::snprintf(line, sizeof line, "%-8s %-11s %-6d %-5d %-11.6g %-11.6g %s\n",
                          r.label.c_str(), r.template_name.c_str(), r.image_decoder ? 1 : 0,
                          r.seg_loss ? 1 : 0, r.assd, r.hd, r.error.c_str());
            std::cout << line;
        }
        std::cout << "table: " << res.csv_path << "\n";
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive-template mesh reconstruction from voxel volumes"};
    app.require_subcommand(1);
    add_make_dataset(app);
    add_make_template(app);
    add_train(app);
    add_eval(app);
    add_reconstruct(app);
    add_baseline_mc(app);
    add_ablate(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
