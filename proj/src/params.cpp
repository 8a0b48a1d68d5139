#include "voxmesh/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace voxmesh {

namespace {

void write_tensor(std::ofstream& out, const Tensor& t) {
    if (t.dtype() == Dtype::F32)
        out.write(reinterpret_cast<const char*>(t.data<float>()),
                  t.numel() * static_cast<std::int64_t>(sizeof(float)));
    else
        out.write(reinterpret_cast<const char*>(t.data<double>()),
                  t.numel() * static_cast<std::int64_t>(sizeof(double)));
}

void read_tensor(std::ifstream& in, Tensor& t, const std::string& name) {
    if (t.dtype() == Dtype::F32)
        in.read(reinterpret_cast<char*>(t.data<float>()),
                t.numel() * static_cast<std::int64_t>(sizeof(float)));
    else
        in.read(reinterpret_cast<char*>(t.data<double>()),
                t.numel() * static_cast<std::int64_t>(sizeof(double)));
    require(in.good(), "checkpoint: truncated blob reading " + name);
}

}  // namespace

Tensor ModelParams::add_param(const std::string& name, Tensor t) {
    require(params_.count(name) == 0 && buffers_.count(name) == 0,
            "ModelParams: duplicate name " + name);
    order_.push_back(name);
    params_.emplace(name, t);
    return t;
}

Tensor ModelParams::add_kaiming(const std::string& name, Shape shape, std::int64_t fan_in,
                                Dtype dt) {
    require(fan_in > 0, "ModelParams: fan_in must be positive for " + name);
    Tensor t = Tensor::zeros(shape, dt, /*requires_grad=*/true);
    Rng rng = named_rng(seed_, name);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> vals(static_cast<size_t>(t.numel()));
    for (auto& v : vals) v = rng.uniform(-bound, bound);
    t.set_values(vals);
    return add_param(name, t);
}

Tensor ModelParams::add_zeros(const std::string& name, Shape shape, Dtype dt) {
    return add_param(name, Tensor::zeros(shape, dt, /*requires_grad=*/true));
}

Tensor ModelParams::add_ones(const std::string& name, Shape shape, Dtype dt) {
    return add_param(name, Tensor::full(shape, 1.0, dt, /*requires_grad=*/true));
}

Tensor ModelParams::add_buffer(const std::string& name, Shape shape, double fill, Dtype dt) {
    require(params_.count(name) == 0 && buffers_.count(name) == 0,
            "ModelParams: duplicate name " + name);
    Tensor t = Tensor::full(shape, fill, dt, /*requires_grad=*/false);
    buffer_order_.push_back(name);
    buffers_.emplace(name, t);
    return t;
}

Tensor ModelParams::get(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "ModelParams: unknown parameter " + name);
    return it->second;
}

Tensor ModelParams::buffer(const std::string& name) const {
    auto it = buffers_.find(name);
    require(it != buffers_.end(), "ModelParams: unknown buffer " + name);
    return it->second;
}

std::int64_t ModelParams::total_values() const {
    std::int64_t n = 0;
    for (const auto& name : order_) n += params_.at(name).numel();
    return n;
}

void ModelParams::zero_grad() {
    for (const auto& name : order_) params_.at(name).zero_grad();
}

void Adam::step(ModelParams& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        Tensor p = params.get(name);
        const double lr =
            name.rfind(cfg_.feature_prefix, 0) == 0 ? cfg_.lr_feature : cfg_.lr_rest;
        auto& mom = state_[name];
        const auto n = static_cast<size_t>(p.numel());
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        require(mom.m.size() == n, "Adam: state shape drifted for " + name);
        const bool has_grad = p.has_grad();
        std::vector<double> g = has_grad ? p.grad_values() : std::vector<double>(n, 0.0);
        std::vector<double> vals = p.values();
        for (size_t i = 0; i < n; ++i) {
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.set_values(vals);
    }
}

void save_checkpoint(const ModelParams& params, const Adam* opt, const std::string& prefix,
                     const std::string* meta_json) {
    nlohmann::ordered_json j;
    j["version"] = "ATMRN-CKPT-1";
    j["seed"] = params.seed();
    j["arch_hash"] = params.arch_hash();
    if (meta_json) {
        nlohmann::ordered_json meta = nlohmann::ordered_json::parse(*meta_json);
        require(meta.is_object(), "save_checkpoint: meta must be a JSON object");
        j["meta"] = meta;
    }

    nlohmann::ordered_json plist = nlohmann::ordered_json::array();
    for (const auto& name : params.names()) {
        Tensor t = params.get(name);
        plist.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", dtype_name(t.dtype())}});
    }
    j["params"] = plist;

    nlohmann::ordered_json blist = nlohmann::ordered_json::array();
    for (const auto& name : params.buffer_names()) {
        Tensor t = params.buffer(name);
        blist.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", dtype_name(t.dtype())}});
    }
    j["buffers"] = blist;

    if (opt) {
        nlohmann::ordered_json o;
        o["t"] = opt->t_;
        nlohmann::ordered_json keys = nlohmann::ordered_json::array();
        for (const auto& [name, mom] : opt->state_)
            keys.push_back({{"name", name}, {"size", mom.m.size()}});
        o["state_keys"] = keys;
        j["optimizer"] = o;
    }

    std::ofstream hdr(prefix + ".json");
    require(hdr.good(), "save_checkpoint: cannot open " + prefix + ".json");
    hdr << j.dump(2) << "\n";

    std::ofstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "save_checkpoint: cannot open " + prefix + ".bin");
    for (const auto& name : params.names()) {
        Tensor t = params.get(name);
        write_tensor(blob, t);
    }
    for (const auto& name : params.buffer_names()) {
        Tensor t = params.buffer(name);
        write_tensor(blob, t);
    }
    if (opt) {
        for (const auto& [name, mom] : opt->state_) {
            blob.write(reinterpret_cast<const char*>(mom.m.data()),
                       static_cast<std::int64_t>(mom.m.size() * sizeof(double)));
            blob.write(reinterpret_cast<const char*>(mom.v.data()),
                       static_cast<std::int64_t>(mom.v.size() * sizeof(double)));
        }
    }
    require(blob.good(), "save_checkpoint: write failed for " + prefix + ".bin");
}

std::string read_checkpoint_meta(const std::string& prefix) {
    std::ifstream hdr(prefix + ".json");
    require(hdr.good(), "read_checkpoint_meta: cannot open " + prefix + ".json");
    nlohmann::ordered_json j;
    hdr >> j;
    require(j.value("version", "") == std::string("ATMRN-CKPT-1"),
            "read_checkpoint_meta: unsupported version in " + prefix + ".json");
    if (!j.contains("meta")) return "";
    return j["meta"].dump();
}

void load_checkpoint(ModelParams& params, Adam* opt, const std::string& prefix) {
    std::ifstream hdr(prefix + ".json");
    require(hdr.good(), "load_checkpoint: cannot open " + prefix + ".json");
    nlohmann::json j;
    hdr >> j;
    require(j.value("version", "") == std::string("ATMRN-CKPT-1"),
            "load_checkpoint: unsupported version in " + prefix + ".json");
    require(j.at("arch_hash").get<std::uint64_t>() == params.arch_hash(),
            "load_checkpoint: architecture hash mismatch (checkpoint " +
                std::to_string(j.at("arch_hash").get<std::uint64_t>()) + ", model " +
                std::to_string(params.arch_hash()) + ")");

    const auto& plist = j.at("params");
    require(plist.size() == params.names().size(),
            "load_checkpoint: parameter count mismatch");
    for (size_t i = 0; i < plist.size(); ++i) {
        const std::string name = plist[i].at("name").get<std::string>();
        require(name == params.names()[i], "load_checkpoint: parameter order mismatch at " + name);
        Tensor t = params.get(name);
        require(plist[i].at("shape").get<Shape>() == t.shape(),
                "load_checkpoint: shape mismatch for " + name);
        require(dtype_from_name(plist[i].at("dtype").get<std::string>()) == t.dtype(),
                "load_checkpoint: dtype mismatch for " + name);
    }
    const auto& blist = j.at("buffers");
    require(blist.size() == params.buffer_names().size(),
            "load_checkpoint: buffer count mismatch");
    for (size_t i = 0; i < blist.size(); ++i) {
        const std::string name = blist[i].at("name").get<std::string>();
        require(name == params.buffer_names()[i],
                "load_checkpoint: buffer order mismatch at " + name);
        require(blist[i].at("shape").get<Shape>() == params.buffer(name).shape(),
                "load_checkpoint: shape mismatch for buffer " + name);
    }

    std::ifstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "load_checkpoint: cannot open " + prefix + ".bin");
    for (const auto& name : params.names()) {
        Tensor t = params.get(name);
        read_tensor(blob, t, name);
    }
    for (const auto& name : params.buffer_names()) {
        Tensor t = params.buffer(name);
        read_tensor(blob, t, name);
    }

    if (opt && j.contains("optimizer")) {
        opt->t_ = j["optimizer"].at("t").get<std::int64_t>();
        opt->state_.clear();
        for (const auto& key : j["optimizer"].at("state_keys")) {
            const std::string name = key.at("name").get<std::string>();
            const auto n = key.at("size").get<size_t>();
            Adam::Moments mom;
            mom.m.resize(n);
            mom.v.resize(n);
            blob.read(reinterpret_cast<char*>(mom.m.data()),
                      static_cast<std::int64_t>(n * sizeof(double)));
            blob.read(reinterpret_cast<char*>(mom.v.data()),
                      static_cast<std::int64_t>(n * sizeof(double)));
            require(blob.good(), "load_checkpoint: truncated optimizer state for " + name);
            opt->state_.emplace(name, std::move(mom));
        }
    } else if (opt) {
        opt->t_ = 0;
        opt->state_.clear();
    }
}

std::uint64_t peek_checkpoint_arch_hash(const std::string& prefix) {
    std::ifstream hdr(prefix + ".json");
    require(hdr.good(), "peek_checkpoint_arch_hash: cannot open " + prefix + ".json");
    nlohmann::json j;
    hdr >> j;
    require(j.value("version", "") == std::string("ATMRN-CKPT-1"),
            "peek_checkpoint_arch_hash: unsupported version");
    return j.at("arch_hash").get<std::uint64_t>();
}

}  // namespace voxmesh
