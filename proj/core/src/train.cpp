#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "mm/errors.hpp"
#include "mm/pipeline.hpp"
#include "mm/rng.hpp"

namespace mm {

namespace {

struct StoreSnapshot {
    std::map<std::string, std::array<std::vector<double>, 3>> data;  // values, m, v
    long step = 0;
};

StoreSnapshot snapshot(const ParameterStore& store) {
    StoreSnapshot s;
    s.step = store.step();
    for (const auto& [name, e] : store.entries())
        s.data[name] = {e.tensor.data(), e.m, e.v};
    return s;
}

void restore(ParameterStore& store, const StoreSnapshot& s) {
    store.set_step(s.step);
    for (auto& [name, e] : store.entries()) {
        const auto& d = s.data.at(name);
        e.tensor.data() = d[0];
        e.m = d[1];
        e.v = d[2];
    }
}

}  // namespace

TrainResult train(const std::string& kind, const std::vector<DatasetRecord>& dataset,
                  const TrainOptions& opts, uint64_t seed) {
    if (dataset.empty()) throw InvalidArgument("train: empty dataset");
    if (opts.epochs < 0 || opts.batch_size < 1)
        throw InvalidArgument("train: bad epochs/batch_size");
    const ProblemSample::Kind pkind = dataset[0].sample.kind;
    for (const auto& r : dataset)
        if (r.sample.kind != pkind) throw InvalidArgument("train: mixed problem kinds in dataset");

    TrainResult result;
    result.model = make_deformer(kind, state_param_count(pkind), seed);
    DeformerModel& model = result.model;

    const size_t ns = dataset.size();
    std::vector<InputState> states;
    std::vector<Tensor> targets;
    states.reserve(ns);
    targets.reserve(ns);
    for (const auto& rec : dataset) {
        states.push_back(record_state(rec));
        std::vector<double> t(rec.target.size() * 2);
        for (size_t i = 0; i < rec.target.size(); ++i) {
            t[2 * i] = rec.target[i].x;
            t[2 * i + 1] = rec.target[i].y;
        }
        targets.push_back(Tensor::from({static_cast<int>(rec.target.size()), 2}, std::move(t)));
    }
    auto sample_loss = [&](size_t i) {
        return l1_loss(deform_tensor(model, dataset[i].mesh, states[i]), targets[i]);
    };

    double init_sum = 0.0;
    for (size_t i = 0; i < ns; ++i) init_sum += sample_loss(i).value();
    result.initial_loss = init_sum / static_cast<double>(ns);
    result.log = "initial loss " + std::to_string(result.initial_loss) + "\n";

    if (!opts.checkpoint_dir.empty())
        std::filesystem::create_directories(opts.checkpoint_dir);

    Rng brng(seed, "batching");
    std::vector<size_t> order(ns);
    for (size_t i = 0; i < ns; ++i) order[i] = i;
    StoreSnapshot last_good = snapshot(model.params);

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        for (size_t i = ns; i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(brng.uniform_int(0, static_cast<int>(i) - 1))]);
        double epoch_sum = 0.0;
        for (size_t b0 = 0; b0 < ns; b0 += static_cast<size_t>(opts.batch_size)) {
            const size_t b1 = std::min(ns, b0 + static_cast<size_t>(opts.batch_size));
            model.params.zero_grad();
            Tensor batch_loss;
            for (size_t i = b0; i < b1; ++i) {
                Tensor l = sample_loss(order[i]);
                epoch_sum += l.value();
                batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(b1 - b0));
            if (!std::isfinite(batch_loss.value())) {
                restore(model.params, last_good);
                result.nan_abort = true;
                result.log += "epoch " + std::to_string(epoch) +
                              ": non-finite loss, aborting with last-good parameters\n";
                return result;
            }
            batch_loss.backward();
            adam_step(model.params, opts.adam);
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(ns));
        result.log += "epoch " + std::to_string(epoch) + " loss " +
                      std::to_string(result.epoch_loss.back()) + "\n";
        last_good = snapshot(model.params);
        if (!opts.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d.json", epoch);
            save_deformer(model, opts.checkpoint_dir + "/" + name);
            save_deformer(model, opts.checkpoint_dir + "/latest.json");
        }
    }
    return result;
}

}  // namespace mm
