#include <cstdio>
#include <iostream>
#include <sstream>

#include "modit/ablation.hpp"
#include "modit/blink.hpp"
#include "modit/cli.hpp"
#include "modit/gradcheck_suite.hpp"
#include "modit/metrics.hpp"
#include "modit/pipeline.hpp"

namespace modit {

namespace {

std::string format_metric_line(long long step, double l_t, double l_v, double l_total) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\n", step, l_t, l_v, l_total);
    return buf;
}

void check_dataset_dims(const DatasetDims& dims, const RunConfig& cfg) {
    if (dims.audio_dim != cfg.get_int("model.audio_dim"))
        throw DataError("dataset audio_dim " + std::to_string(dims.audio_dim) +
                        " does not match model.audio_dim");
    if (dims.coeff_dim != cfg.get_int("model.coeff_dim"))
        throw DataError("dataset coeff_dim " + std::to_string(dims.coeff_dim) +
                        " does not match model.coeff_dim");
}

template <class T>
void train_impl(const RunConfig& cfg, const std::vector<DataPair>& pairs,
                const std::string& out_ckpt, const std::string& resume_path,
                const std::string& metrics_path) {
    Trainer<T> tr = make_trainer<T>(cfg);
    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        check_checkpoint_compat(ck, cfg);
        checkpoint_to_trainer(ck, tr);
    }
    const std::vector<TrainItem<T>> items = items_from_pairs<T>(pairs);
    const long long target_steps = cfg.get_int("train.steps");

    std::string log = "step\tl_t\tl_v\tl_total\n";
    while (tr.step_count < target_steps) {
        StepMetrics<T> m = tr.train_step(items);
        log += format_metric_line(m.step, static_cast<double>(m.l_t), static_cast<double>(m.l_v),
                                  static_cast<double>(m.l_total));
    }
    Checkpoint ck = trainer_to_checkpoint(tr, cfg);
    save_checkpoint(out_ckpt, ck);
    write_text_atomic(metrics_path.empty() ? out_ckpt + ".metrics.tsv" : metrics_path, log);
}

template <class T>
void sample_impl(const RunConfig& cfg, const Checkpoint& ck, const DataPair& pair, int frames,
                 const std::string& out_base) {
    Trainer<T> tr = make_trainer<T>(cfg);
    checkpoint_to_trainer(ck, tr);

    Matrix<T> audio = row_slice(pair.audio.cast<T>(), 0, frames);
    Matrix<T> beta0 = row_slice(pair.expression.cast<T>(), 0, 1);
    SamplerConfig sc = sampler_config<T>(cfg);
    Matrix<T> gen = sample(beta0, audio, tr.params, tr.sched, tr.masks, sc);

    write_trace(out_base + ".trace.txt", gen.template cast<float>());

    DataPair out_pair;
    out_pair.audio = audio.template cast<float>();
    out_pair.expression = gen.template cast<float>();
    out_pair.blink.assign(frames, 0.0f);
    write_dataset(out_base + ".gen.mdtd", {out_pair});

    const int windows =
        frames == tr.params.cfg.t_frames
            ? 1
            : static_cast<int>(
                  window_starts(frames, tr.params.cfg.t_frames, sc.window_overlap).size());
    std::ostringstream summary;
    summary << "seed\t" << sc.seed << '\n'
            << "mode\t" << (sc.mode == SamplerMode::ddim ? "ddim" : "ddpm") << '\n'
            << "phase_order\t"
            << (sc.phase.order == PhaseOrder::algorithm_literal ? "algorithm_literal"
                                                                : "prose_order")
            << '\n'
            << "phase_enabled\t" << (sc.phase_enabled ? "true" : "false") << '\n'
            << "t_threshold\t" << sc.phase.t_threshold << '\n'
            << "frames\t" << frames << '\n'
            << "windows\t" << windows << '\n';
    write_text_atomic(out_base + ".summary.txt", summary.str());
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const std::string& out_path) {
    const SynthSpec spec = synth_spec(cfg);
    write_dataset(out_path, gen_pairs(spec));
    std::cout << "wrote " << spec.num_pairs << " pairs (" << spec.t_frames << " frames, audio dim "
              << spec.audio_dim << ") to " << out_path << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& data_path, const std::string& out_ckpt,
               const std::string& resume_path, const std::string& metrics_path) {
    DatasetDims dims;
    const std::vector<DataPair> pairs = read_dataset(data_path, &dims);
    check_dataset_dims(dims, cfg);
    if (dims.t_frames != cfg.get_int("model.frames"))
        throw DataError("dataset frames " + std::to_string(dims.t_frames) +
                        " does not match model.frames");
    if (cfg.get_enum("precision") == "f64")
        train_impl<double>(cfg, pairs, out_ckpt, resume_path, metrics_path);
    else
        train_impl<float>(cfg, pairs, out_ckpt, resume_path, metrics_path);
    std::cout << "trained " << cfg.get_int("train.steps") << " steps -> " << out_ckpt << "\n";
}

void cmd_sample(const RunConfig& cfg, const std::string& ckpt_path, const std::string& data_path,
                int pair_index, const std::string& out_base) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    check_checkpoint_compat(ck, cfg);
    DatasetDims dims;
    const std::vector<DataPair> pairs = read_dataset(data_path, &dims);
    check_dataset_dims(dims, cfg);
    if (pair_index < 0 || pair_index >= dims.num_pairs)
        throw DataError("pair index " + std::to_string(pair_index) + " out of range");
    int frames = static_cast<int>(cfg.get_int("sampler.frames"));
    if (frames == 0) frames = dims.t_frames;
    if (frames > dims.t_frames)
        throw DataError("requested " + std::to_string(frames) + " frames but dataset pairs have " +
                        std::to_string(dims.t_frames));
    if (cfg.get_enum("precision") == "f64")
        sample_impl<double>(cfg, ck, pairs[pair_index], frames, out_base);
    else
        sample_impl<float>(cfg, ck, pairs[pair_index], frames, out_base);
    std::cout << "sampled " << frames << " frames -> " << out_base << ".trace.txt\n";
}

void cmd_eval(const std::string& generated_path, const std::string& reference_path,
              const std::string& ckpt_path, const std::string& out_path) {
    const MatF gen = read_trace(generated_path);
    const MatF ref = read_trace(reference_path);
    if (!gen.same_shape(ref))
        throw DataError("eval: sequence length/width mismatch (" + std::to_string(gen.rows) + "x" +
                        std::to_string(gen.cols) + " vs " + std::to_string(ref.rows) + "x" +
                        std::to_string(ref.cols) + ")");
    const MatD g = gen.cast<double>();
    const MatD r = ref.cast<double>();

    std::ostringstream ss;
    char buf[96];
    auto put = [&](const char* name, double v) {
        std::snprintf(buf, sizeof(buf), "%s\t%.9g\n", name, v);
        ss << buf;
    };
    put("mse", sequence_mse(g, r));
    double vel = 0.0;
    if (g.rows >= 2) {
        for (int i = 0; i + 1 < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                const double dv =
                    (g.at(i + 1, j) - g.at(i, j)) - (r.at(i + 1, j) - r.at(i, j));
                vel += dv * dv;
            }
        vel /= static_cast<double>(g.rows - 1) * g.cols;
    }
    put("velocity_mse", vel);
    put("jitter_generated", g.rows >= 3 ? jitter_metric(g) : 0.0);
    put("jitter_reference", r.rows >= 3 ? jitter_metric(r) : 0.0);
    put("jitter_difference",
        g.rows >= 3 ? jitter_metric(g) - jitter_metric(r) : 0.0);

    if (!ckpt_path.empty()) {
        Checkpoint ck = load_checkpoint(ckpt_path);
        const MatF* mean = ck.find("basis.mean");
        const MatF* u_id = ck.find("basis.u_id");
        const MatF* u_exp = ck.find("basis.u_exp");
        if (mean && u_id && u_exp) {
            ToyFaceBasis<double> basis;
            basis.vertices = mean->rows;
            basis.mean = mean->cast<double>();
            basis.u_id = u_id->cast<double>();
            basis.u_exp = u_exp->cast<double>();
            ss << "blink_distance_curve";
            MatD alpha(1, basis.u_id.rows);
            for (int i = 0; i < g.rows; ++i) {
                MatD beta = row_slice(g, i, 1);
                MatD verts = assemble_shape(alpha, beta, basis);
                std::snprintf(buf, sizeof(buf), "\t%.9g",
                              eye_closure_distance(verts, basis.upper_eyelid, basis.lower_eyelid));
                ss << buf;
            }
            ss << '\n';
        }
    }

    if (out_path.empty())
        std::cout << ss.str();
    else
        write_text_atomic(out_path, ss.str());
}

int cmd_gradcheck(const RunConfig& cfg, const std::string& out_path, bool inject_fault) {
    GradSuiteResult res = run_gradcheck_suite(cfg, inject_fault);
    const std::string tsv = res.to_tsv();
    if (out_path.empty())
        std::cout << tsv;
    else
        write_text_atomic(out_path, tsv);
    if (!res.pass()) {
        std::cerr << "gradcheck: max relative error " << res.overall << " exceeds 1e-4\n";
        return kExitNumeric;
    }
    return kExitOk;
}

void cmd_ablate(const RunConfig& cfg, const std::string& spec_path, const std::string& data_path,
                const std::string& out_path) {
    const AblationSpec spec = parse_ablation_spec(spec_path);
    DatasetDims dims;
    const std::vector<DataPair> pairs = read_dataset(data_path, &dims);
    check_dataset_dims(dims, cfg);
    if (dims.t_frames != cfg.get_int("model.frames"))
        throw DataError("dataset frames do not match model.frames");
    AblationReport report = run_ablation(cfg, spec, pairs);
    if (out_path.empty())
        std::cout << report.text;
    else
        write_text_atomic(out_path, report.text);
}

}  // namespace modit
