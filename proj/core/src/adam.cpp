#include <cmath>
#include <fstream>

#include "json.hpp"
#include "mm/errors.hpp"
#include "mm/tensor.hpp"

namespace mm {

Tensor& ParameterStore::add(const std::string& name, std::vector<int> shape,
                            std::vector<double> init) {
    if (entries_.count(name)) throw StateError("ParameterStore: duplicate parameter " + name);
    Entry e;
    e.tensor = Tensor::from(std::move(shape), std::move(init), /*requires_grad=*/true);
    e.m.assign(e.tensor.numel(), 0.0);
    e.v.assign(e.tensor.numel(), 0.0);
    return entries_.emplace(name, std::move(e)).first->second.tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("ParameterStore: unknown parameter " + name);
    return it->second.tensor;
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("ParameterStore: unknown parameter " + name);
    return it->second.tensor;
}

void ParameterStore::zero_grad() {
    for (auto& [name, e] : entries_) {
        (void)name;
        e.tensor.grad().assign(e.tensor.numel(), 0.0);
    }
}

void adam_step(ParameterStore& store, const AdamOptions& opts) {
    store.set_step(store.step() + 1);
    const double t = static_cast<double>(store.step());
    const double bc1 = 1.0 - std::pow(opts.beta1, t);
    const double bc2 = 1.0 - std::pow(opts.beta2, t);
    for (auto& [name, e] : store.entries()) {
        auto& g = e.tensor.grad();
        if (g.size() != e.tensor.numel())
            throw StateError("adam_step: gradient missing for parameter " + name);
        auto& w = e.tensor.data();
        for (size_t i = 0; i < w.size(); ++i) {
            e.m[i] = opts.beta1 * e.m[i] + (1.0 - opts.beta1) * g[i];
            e.v[i] = opts.beta2 * e.v[i] + (1.0 - opts.beta2) * g[i] * g[i];
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            w[i] -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
        }
        g.assign(w.size(), 0.0);
    }
}

void save_checkpoint(const ParameterStore& store, const std::string& config_json,
                     const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["step"] = store.step();
    j["config"] = config_json.empty() ? nlohmann::json::object()
                                      : nlohmann::json::parse(config_json);
    auto& params = j["params"] = nlohmann::json::array();
    for (const auto& [name, e] : store.entries()) {
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = e.tensor.shape();
        p["values"] = e.tensor.data();
        p["m"] = e.m;
        p["v"] = e.v;
        params.push_back(std::move(p));
    }
    std::ofstream out(path);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out << j.dump();
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

std::string load_checkpoint(ParameterStore& store, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_checkpoint: " + path + ": " + e.what());
    }
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw IoError("load_checkpoint: unsupported checkpoint version in " + path);
    store = ParameterStore();
    store.set_step(j.value("step", 0L));
    for (const auto& p : j["params"]) {
        const std::string name = p["name"].get<std::string>();
        Tensor& t = store.add(name, p["shape"].get<std::vector<int>>(),
                              p["values"].get<std::vector<double>>());
        auto& e = store.entries().at(name);
        e.m = p["m"].get<std::vector<double>>();
        e.v = p["v"].get<std::vector<double>>();
        if (e.m.size() != t.numel() || e.v.size() != t.numel())
            throw IoError("load_checkpoint: moment shape mismatch for " + name);
    }
    return j["config"].dump();
}

}  // namespace mm
