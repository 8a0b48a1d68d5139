#include "voxmesh/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "voxmesh/rng.hpp"

namespace voxmesh {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
}

}  // namespace

bool mode_uses_displacement(TemplateMode mode) {
    return mode == TemplateMode::Td || mode == TemplateMode::TspePlusTd ||
           mode == TemplateMode::Ta;
}

std::string config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["dataset"] = cfg.dataset;
    j["template"] = cfg.tpl;
    j["run_dir"] = cfg.run_dir;
    j["mode"] = template_mode_name(cfg.mode);

    ordered_json arch;
    arch["enc_channels"] = cfg.arch.enc_channels;
    arch["image_decoder"] = cfg.arch.image_decoder;
    arch["seg_loss"] = cfg.arch.seg_loss;
    arch["seg_classes"] = cfg.arch.seg_classes;
    arch["latent"] = cfg.arch.latent;
    arch["fcn_hidden"] = cfg.arch.fcn_hidden;
    arch["gcn_hidden"] = cfg.arch.gcn_hidden;
    arch["deform_stages"] = cfg.arch.deform_stages;
    arch["deform_layers"] = cfg.arch.deform_layers;
    arch["resample_each_stage"] = cfg.arch.resample_each_stage;
    arch["dtype"] = dtype_name(cfg.arch.dtype);
    j["arch"] = arch;

    ordered_json loss;
    loss["chamfer"] = cfg.loss.chamfer;
    loss["laplacian"] = cfg.loss.laplacian;
    loss["normal"] = cfg.loss.normal;
    loss["edge"] = cfg.loss.edge;
    loss["seg"] = cfg.seg_weight;
    j["loss"] = loss;

    ordered_json optim;
    optim["lr_feature"] = cfg.lr_feature;
    optim["lr_rest"] = cfg.lr_rest;
    optim["batch_size"] = cfg.batch_size;
    optim["epochs"] = cfg.epochs;
    j["optim"] = optim;

    j["seed"] = cfg.seed;
    j["val_every"] = cfg.val_every;
    j["loss_samples"] = cfg.loss_samples;
    j["metric_samples"] = cfg.metric_samples;
    j["strict"] = cfg.strict;
    return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(j,
               {"dataset", "template", "run_dir", "mode", "arch", "loss", "optim", "seed",
                "val_every", "loss_samples", "metric_samples", "strict"},
               "top level");

    RunConfig cfg;
    try {
        cfg.dataset = j.value("dataset", cfg.dataset);
        cfg.tpl = j.value("template", cfg.tpl);
        cfg.run_dir = j.value("run_dir", cfg.run_dir);
        if (j.contains("mode")) cfg.mode = template_mode_from(j["mode"].get<std::string>());

        if (j.contains("arch")) {
            const auto& a = j["arch"];
            check_keys(a,
                       {"enc_channels", "image_decoder", "seg_loss", "seg_classes", "latent",
                        "fcn_hidden", "gcn_hidden", "deform_stages", "deform_layers",
                        "resample_each_stage", "dtype"},
                       "arch");
            if (a.contains("enc_channels"))
                cfg.arch.enc_channels = a["enc_channels"].get<std::vector<std::int64_t>>();
            cfg.arch.image_decoder = a.value("image_decoder", cfg.arch.image_decoder);
            cfg.arch.seg_loss = a.value("seg_loss", cfg.arch.seg_loss);
            cfg.arch.seg_classes = a.value("seg_classes", cfg.arch.seg_classes);
            cfg.arch.latent = a.value("latent", cfg.arch.latent);
            cfg.arch.fcn_hidden = a.value("fcn_hidden", cfg.arch.fcn_hidden);
            cfg.arch.gcn_hidden = a.value("gcn_hidden", cfg.arch.gcn_hidden);
            cfg.arch.deform_stages = a.value("deform_stages", cfg.arch.deform_stages);
            cfg.arch.deform_layers = a.value("deform_layers", cfg.arch.deform_layers);
            cfg.arch.resample_each_stage =
                a.value("resample_each_stage", cfg.arch.resample_each_stage);
            if (a.contains("dtype"))
                cfg.arch.dtype = dtype_from_name(a["dtype"].get<std::string>());
        }
        if (j.contains("loss")) {
            const auto& l = j["loss"];
            check_keys(l, {"chamfer", "laplacian", "normal", "edge", "seg"}, "loss");
            cfg.loss.chamfer = l.value("chamfer", cfg.loss.chamfer);
            cfg.loss.laplacian = l.value("laplacian", cfg.loss.laplacian);
            cfg.loss.normal = l.value("normal", cfg.loss.normal);
            cfg.loss.edge = l.value("edge", cfg.loss.edge);
            cfg.seg_weight = l.value("seg", cfg.seg_weight);
        }
        if (j.contains("optim")) {
            const auto& o = j["optim"];
            check_keys(o, {"lr_feature", "lr_rest", "batch_size", "epochs"}, "optim");
            cfg.lr_feature = o.value("lr_feature", cfg.lr_feature);
            cfg.lr_rest = o.value("lr_rest", cfg.lr_rest);
            cfg.batch_size = o.value("batch_size", cfg.batch_size);
            cfg.epochs = o.value("epochs", cfg.epochs);
        }
        cfg.seed = j.value("seed", cfg.seed);
        cfg.val_every = j.value("val_every", cfg.val_every);
        cfg.loss_samples = j.value("loss_samples", cfg.loss_samples);
        cfg.metric_samples = j.value("metric_samples", cfg.metric_samples);
        cfg.strict = j.value("strict", cfg.strict);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (cfg.val_every < 1) throw ConfigError("config: val_every must be >= 1");
    if (cfg.loss_samples < 1) throw ConfigError("config: loss_samples must be >= 1");
    if (cfg.metric_samples < 1) throw ConfigError("config: metric_samples must be >= 1");
    if (cfg.lr_feature <= 0 || cfg.lr_rest <= 0)
        throw ConfigError("config: learning rates must be positive");
    if (cfg.loss.chamfer < 0 || cfg.loss.laplacian < 0 || cfg.loss.normal < 0 ||
        cfg.loss.edge < 0 || cfg.seg_weight < 0)
        throw ConfigError("config: loss weights must be nonnegative");
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(config_to_json(cfg)); }

std::uint64_t model_arch_hash(const RunConfig& cfg, int d, int h, int w,
                              const std::vector<int>& level_sizes) {
    std::ostringstream ss;
    ss << "arch|enc=";
    for (auto c : cfg.arch.enc_channels) ss << c << ",";
    ss << "|imgdec=" << cfg.arch.image_decoder << "|seg=" << cfg.arch.seg_loss
       << "|segc=" << cfg.arch.seg_classes << "|latent=" << cfg.arch.latent
       << "|fcn=" << cfg.arch.fcn_hidden << "|gcn=" << cfg.arch.gcn_hidden
       << "|stages=" << cfg.arch.deform_stages << "|layers=" << cfg.arch.deform_layers
       << "|resample=" << cfg.arch.resample_each_stage
       << "|dtype=" << dtype_name(cfg.arch.dtype) << "|mode=" << template_mode_name(cfg.mode)
       << "|dims=" << d << "x" << h << "x" << w << "|levels=";
    for (int n : level_sizes) ss << n << ",";
    return fnv1a(ss.str());
}

}  // namespace voxmesh
