#pragma once

#include <string>
#include <vector>

#include "modit/checkpoint.hpp"
#include "modit/config.hpp"
#include "modit/dataset.hpp"
#include "modit/sampler.hpp"
#include "modit/training.hpp"

namespace modit {

template <class T>
Trainer<T> make_trainer(const RunConfig& cfg) {
    Trainer<T> tr;
    const DenoiserConfig mc = denoiser_config(cfg);
    tr.params = init_params<T>(mc, static_cast<uint64_t>(cfg.get_int("train.seed")));
    tr.opt.cfg.lr = static_cast<T>(cfg.get_real("train.lr"));
    tr.opt.cfg.beta1 = static_cast<T>(cfg.get_real("train.beta1"));
    tr.opt.cfg.beta2 = static_cast<T>(cfg.get_real("train.beta2"));
    tr.opt.cfg.eps = static_cast<T>(cfg.get_real("train.eps"));
    tr.opt.cfg.weight_decay = static_cast<T>(cfg.get_real("train.weight_decay"));
    tr.sched = build_schedule<T>(static_cast<int>(cfg.get_int("schedule.T")),
                                 static_cast<T>(cfg.get_real("schedule.beta_start")),
                                 static_cast<T>(cfg.get_real("schedule.beta_end")));
    tr.weights.lambda_t = static_cast<T>(cfg.get_real("train.lambda_t"));
    tr.weights.lambda_read = static_cast<T>(cfg.get_real("train.lambda_read"));
    tr.weights.lambda_lks = static_cast<T>(cfg.get_real("train.lambda_lks"));
    tr.weights.lambda_v = static_cast<T>(cfg.get_real("train.lambda_v"));
    tr.phase_enabled = cfg.get_bool("phase.enabled");
    tr.phase_in_training = cfg.get_bool("phase.apply_in_training");
    tr.phase_cfg = phase_config(cfg);
    tr.masks = build_mask_set<T>(mc.t_frames, mc.t_frames,
                                 static_cast<int>(cfg.get_int("mask.bandwidth")),
                                 static_cast<T>(cfg.get_real("mask.sigma")));
    tr.seed = static_cast<uint64_t>(cfg.get_int("train.seed"));
    tr.batch = static_cast<int>(cfg.get_int("train.batch"));
    tr.threads = env_thread_cap();
    return tr;
}

template <class T>
SamplerConfig sampler_config(const RunConfig& cfg) {
    SamplerConfig sc;
    sc.mode = cfg.get_enum("sampler.mode") == "ddpm" ? SamplerMode::ddpm : SamplerMode::ddim;
    sc.seed = static_cast<uint64_t>(cfg.get_int("sampler.seed"));
    sc.resample_inner = static_cast<int>(cfg.get_int("sampler.resample_inner"));
    sc.phase_enabled = cfg.get_bool("phase.enabled");
    sc.phase = phase_config(cfg);
    sc.window_overlap = static_cast<int>(cfg.get_int("sampler.window_overlap"));
    return sc;
}

// beta0 is the source-frame expression row of each pair.
template <class T>
std::vector<TrainItem<T>> items_from_pairs(const std::vector<DataPair>& pairs) {
    std::vector<TrainItem<T>> items;
    items.reserve(pairs.size());
    for (const auto& p : pairs) {
        TrainItem<T> it;
        it.beta0 = row_slice(p.expression, 0, 1).template cast<T>();
        it.audio = p.audio.template cast<T>();
        it.x0 = p.expression.template cast<T>();
        items.push_back(std::move(it));
    }
    return items;
}

template <class T>
Checkpoint trainer_to_checkpoint(Trainer<T>& tr, const RunConfig& cfg) {
    Checkpoint ck;
    ck.config = cfg.values();
    ck.opt_step = tr.opt.step;
    ck.steps_done = tr.step_count;
    std::vector<Matrix<T>*> plist;
    for_each_param(tr.params, [&](const std::string&, Matrix<T>& m) { plist.push_back(&m); });
    tr.opt.ensure_slots(plist);
    size_t idx = 0;
    for_each_param(tr.params, [&](const std::string& name, Matrix<T>& m) {
        ck.tensors.emplace_back("param." + name, m.template cast<float>());
        ck.tensors.emplace_back("adam_m." + name, tr.opt.m[idx].template cast<float>());
        ck.tensors.emplace_back("adam_v." + name, tr.opt.v[idx].template cast<float>());
        ++idx;
    });
    return ck;
}

template <class T>
void checkpoint_to_trainer(const Checkpoint& ck, Trainer<T>& tr) {
    tr.opt.step = ck.opt_step;
    tr.step_count = ck.steps_done;
    std::vector<Matrix<T>*> plist;
    for_each_param(tr.params, [&](const std::string&, Matrix<T>& m) { plist.push_back(&m); });
    tr.opt.ensure_slots(plist);
    size_t idx = 0;
    for_each_param(tr.params, [&](const std::string& name, Matrix<T>& m) {
        const MatF* pv = ck.find("param." + name);
        const MatF* mv = ck.find("adam_m." + name);
        const MatF* vv = ck.find("adam_v." + name);
        if (!pv || !mv || !vv)
            throw DataError("checkpoint missing tensor for parameter '" + name + "'");
        if (pv->rows != m.rows || pv->cols != m.cols)
            throw DataError("checkpoint tensor '" + name + "' has incompatible shape");
        m = pv->template cast<T>();
        tr.opt.m[idx] = mv->template cast<T>();
        tr.opt.v[idx] = vv->template cast<T>();
        ++idx;
    });
}

// A checkpoint is loadable only when the model geometry it was written with
// matches the active configuration.
inline void check_checkpoint_compat(const Checkpoint& ck, const RunConfig& cfg) {
    for (const std::string& key : RunConfig::model_keys()) {
        auto it = ck.config.find(key);
        if (it == ck.config.end())
            throw DataError("checkpoint: missing config key " + key);
        if (it->second != cfg.values().at(key))
            throw DataError("checkpoint: incompatible " + key + " (checkpoint " + it->second +
                            ", run " + cfg.values().at(key) + ")");
    }
}

}  // namespace modit
