#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sharnn/checkpoint_format.hpp"
#include "sharnn/config.hpp"
#include "sharnn/errors.hpp"
#include "sharnn/model.hpp"
#include "sharnn/optimizer.hpp"
#include "sharnn/rng.hpp"
#include "sharnn/tensor.hpp"

namespace sharnn {

// Binds the in-memory training state (model parameters, optimizer moments,
// RNG state, progress counters) to the raw on-disk layout. Parameter tensors
// are stored under their canonical names from ShaRnn::visit_params; optimizer
// moments mirror them as "opt.m.<name>" / "opt.v.<name>"; folded gate vectors
// travel as "<gate>.folded" constants. The model config rides in the metadata
// block as the same key=value lines the config file uses, alongside bare
// "epoch", "step", "opt_t" and "rng" keys.

// Everything a checkpoint file carries, decoded but not yet bound to live
// training objects. `opt_t == 0` with empty moments means the file holds no
// optimizer state (fresh model or deployment artifact).
template <class S>
struct LoadedCheckpoint {
    Config cfg;
    ShaRnn<S> model;
    int64_t epoch = 0;
    int64_t step = 0;
    std::vector<std::vector<S>> opt_m;
    std::vector<std::vector<S>> opt_v;
    int64_t opt_t = 0;
    std::string rng_hex;  // empty when the file carries no RNG state

    bool has_optimizer_state() const { return opt_t > 0 || !opt_m.empty(); }
};

namespace detail {

template <class S>
ckpt::RawTensor to_raw_tensor(const std::string& name, const Tensor<S>& t) {
    ckpt::RawTensor rt;
    rt.name = name;
    for (int64_t i = 0; i < t.rank(); ++i) rt.dims.push_back(static_cast<uint32_t>(t.size(i)));
    rt.data.reserve(static_cast<size_t>(t.numel()));
    for (S v : t.value()) rt.data.push_back(static_cast<float>(v));
    return rt;
}

template <class S>
void fill_from_raw(const ckpt::RawTensor& rt, Tensor<S>& t) {
    if (static_cast<size_t>(t.rank()) != rt.dims.size())
        throw FormatError("checkpoint tensor '" + rt.name + "' has rank " +
                          std::to_string(rt.dims.size()) + ", model expects " +
                          std::to_string(t.rank()));
    for (int64_t i = 0; i < t.rank(); ++i) {
        if (static_cast<int64_t>(rt.dims[static_cast<size_t>(i)]) != t.size(i))
            throw FormatError("checkpoint tensor '" + rt.name + "' dim " + std::to_string(i) +
                              " is " + std::to_string(rt.dims[static_cast<size_t>(i)]) +
                              ", model expects " + std::to_string(t.size(i)));
    }
    std::span<S> dst = t.value();
    for (size_t i = 0; i < rt.data.size(); ++i) dst[i] = static_cast<S>(rt.data[i]);
}

inline bool is_config_key(const std::string& k) {
    return k.rfind("model.", 0) == 0 || k.rfind("train.", 0) == 0 || k.rfind("lamb.", 0) == 0;
}

}  // namespace detail

// Serializes the full training state. Pass opt == nullptr for a model-only
// file (e.g. a folded deployment artifact) and rng == nullptr to omit the
// stream state.
template <class S>
ckpt::RawCheckpoint to_raw_checkpoint(ShaRnn<S>& model, const Config& cfg, int64_t epoch,
                                      int64_t step, const MinTrustLamb<S>* opt = nullptr,
                                      const Rng* rng = nullptr) {
    ckpt::RawCheckpoint raw;

    // Config keys double as metadata lines; bare keys carry progress.
    const std::string cfg_text = render_config(cfg);
    size_t pos = 0;
    while (pos < cfg_text.size()) {
        size_t nl = cfg_text.find('\n', pos);
        if (nl == std::string::npos) nl = cfg_text.size();
        const std::string line = cfg_text.substr(pos, nl - pos);
        pos = nl + 1;
        const size_t eq = line.find('=');
        if (eq != std::string::npos) raw.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    raw.meta["epoch"] = std::to_string(epoch);
    raw.meta["step"] = std::to_string(step);
    if (rng != nullptr) raw.meta["rng"] = rng->state_hex();

    std::vector<std::string> param_names;
    model.visit_params([&](const std::string& name, Tensor<S>& t) {
        param_names.push_back(name);
        raw.tensors.push_back(detail::to_raw_tensor(name, t));
    });
    model.visit_constants([&](const std::string& name, Tensor<S>& t) {
        raw.tensors.push_back(detail::to_raw_tensor(name, t));
    });

    if (opt != nullptr) {
        raw.meta["opt_t"] = std::to_string(opt->step_count());
        const auto& m = opt->moments_m();
        const auto& v = opt->moments_v();
        if (!m.empty() && m.size() != param_names.size())
            throw ContractError("optimizer tracks " + std::to_string(m.size()) +
                                " tensors, model has " + std::to_string(param_names.size()));
        for (size_t i = 0; i < m.size(); ++i) {
            ckpt::RawTensor rm, rv;
            rm.name = "opt.m." + param_names[i];
            rv.name = "opt.v." + param_names[i];
            rm.dims = {static_cast<uint32_t>(m[i].size())};
            rv.dims = {static_cast<uint32_t>(v[i].size())};
            rm.data.reserve(m[i].size());
            rv.data.reserve(v[i].size());
            for (S x : m[i]) rm.data.push_back(static_cast<float>(x));
            for (S x : v[i]) rv.data.push_back(static_cast<float>(x));
            raw.tensors.push_back(std::move(rm));
            raw.tensors.push_back(std::move(rv));
        }
    }
    return raw;
}

template <class S>
void save_checkpoint(const std::string& path, ShaRnn<S>& model, const Config& cfg, int64_t epoch,
                     int64_t step, const MinTrustLamb<S>* opt = nullptr,
                     const Rng* rng = nullptr) {
    ckpt::write_checkpoint_file(path, to_raw_checkpoint(model, cfg, epoch, step, opt, rng));
}

// Rebuilds the training state from decoded bytes. The returned model is fully
// constructed or an exception leaves nothing half-written: tensors are only
// copied after every expected name and shape has been verified present.
template <class S>
LoadedCheckpoint<S> from_raw_checkpoint(const ckpt::RawCheckpoint& raw) {
    LoadedCheckpoint<S> out;

    std::string cfg_text;
    for (const auto& [k, v] : raw.meta) {
        if (detail::is_config_key(k)) cfg_text += k + "=" + v + "\n";
    }
    out.cfg = parse_config(cfg_text);
    out.epoch = ckpt::meta_get_i64(raw, "epoch");
    out.step = ckpt::meta_get_i64(raw, "step");
    if (raw.meta.count("rng")) out.rng_hex = raw.meta.at("rng");
    if (raw.meta.count("opt_t")) out.opt_t = ckpt::meta_get_i64(raw, "opt_t");

    std::map<std::string, const ckpt::RawTensor*> by_name;
    for (const ckpt::RawTensor& rt : raw.tensors) {
        if (!by_name.emplace(rt.name, &rt).second)
            throw FormatError("checkpoint holds tensor '" + rt.name + "' twice");
    }
    const bool folded = [&] {
        for (const ckpt::RawTensor& rt : raw.tensors) {
            const std::string suffix = ".folded";
            if (rt.name.size() > suffix.size() &&
                rt.name.compare(rt.name.size() - suffix.size(), suffix.size(), suffix) == 0)
                return true;
        }
        return false;
    }();

    Rng scratch(0);  // init values are overwritten below
    out.model = ShaRnn<S>::init(out.cfg.model, scratch);
    if (folded) out.model.fold();

    // Verify the name sets agree before touching the model.
    std::vector<std::string> param_names;
    std::vector<std::string> expected;
    out.model.visit_params([&](const std::string& name, Tensor<S>&) {
        param_names.push_back(name);
        expected.push_back(name);
    });
    out.model.visit_constants(
        [&](const std::string& name, Tensor<S>&) { expected.push_back(name); });
    for (const std::string& name : expected) {
        if (!by_name.count(name)) throw FormatError("checkpoint is missing tensor '" + name + "'");
    }
    const bool want_moments = out.opt_t > 0;
    if (want_moments) {
        for (const std::string& name : param_names) {
            if (!by_name.count("opt.m." + name) || !by_name.count("opt.v." + name))
                throw FormatError("checkpoint is missing optimizer moments for '" + name + "'");
        }
    }
    size_t recognized = expected.size() + (want_moments ? 2 * param_names.size() : 0);
    if (by_name.size() != recognized)
        throw FormatError("checkpoint holds " + std::to_string(by_name.size()) +
                          " tensors, expected " + std::to_string(recognized) +
                          " for this config");

    out.model.visit_params([&](const std::string& name, Tensor<S>& t) {
        detail::fill_from_raw(*by_name.at(name), t);
    });
    out.model.visit_constants([&](const std::string& name, Tensor<S>& t) {
        detail::fill_from_raw(*by_name.at(name), t);
    });
    if (want_moments) {
        out.model.visit_params([&](const std::string& name, Tensor<S>& t) {
            const ckpt::RawTensor& rm = *by_name.at("opt.m." + name);
            const ckpt::RawTensor& rv = *by_name.at("opt.v." + name);
            if (rm.data.size() != static_cast<size_t>(t.numel()) || rv.data.size() != rm.data.size())
                throw FormatError("optimizer moments for '" + name + "' have the wrong size");
            std::vector<S> m(rm.data.size()), v(rv.data.size());
            for (size_t i = 0; i < m.size(); ++i) m[i] = static_cast<S>(rm.data[i]);
            for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rv.data[i]);
            out.opt_m.push_back(std::move(m));
            out.opt_v.push_back(std::move(v));
        });
    }
    return out;
}

template <class S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
    return from_raw_checkpoint<S>(ckpt::read_checkpoint_file(path));
}

// Strips training-only state out of a raw checkpoint: folds every gate into
// its static vector and drops optimizer moments and RNG state. The result is
// a deployment artifact; training can not resume from it.
template <class S>
ckpt::RawCheckpoint fold_raw_checkpoint(const ckpt::RawCheckpoint& raw) {
    LoadedCheckpoint<S> loaded = from_raw_checkpoint<S>(raw);
    if (loaded.model.any_gate_folded()) throw ContractError("model folded twice");
    loaded.model.fold();
    return to_raw_checkpoint(loaded.model, loaded.cfg, loaded.epoch, loaded.step);
}

}  // namespace sharnn
