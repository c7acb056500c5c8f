#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prseg/checkpoint.hpp"
#include "prseg/data.hpp"
#include "prseg/decoder.hpp"
#include "prseg/metrics.hpp"
#include "prseg/model.hpp"
#include "prseg/optim.hpp"
#include "prseg/rng.hpp"

namespace prseg {

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct TrainParams {
    int steps = 600;
    int batch_size = 4;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int log_every = 25;
    int eval_every = 0;  // 0 = evaluate only after the last step
};

struct RunConfig {
    std::uint64_t seed = 7;

    ShapeFamily family = ShapeFamily::stripes;
    int num_images = 32;
    int eval_images = 8;
    int height = 64;
    int width = 64;
    int num_classes = 4;
    double noise_std = 0.25;

    DecoderConfig model;
    TrainParams train;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) unknown.push_back(key);
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown key(s) in " + where + ":";
        for (const auto& k : unknown) msg += " '" + k + "'";
        throw std::invalid_argument(msg);
    }
}

template <class T>
inline void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    detail::check_keys(j, "config root", {"seed", "task", "model", "train"});
    RunConfig c;
    c.model.dim = 48;  // desk-scale default; the full-size width is 512
    detail::maybe(j, "seed", c.seed);

    if (j.contains("task")) {
        const auto& t = j.at("task");
        detail::check_keys(t, "task",
                           {"family", "num_images", "eval_images", "image_size", "num_classes", "noise_std"});
        std::string family = family_name(c.family);
        detail::maybe(t, "family", family);
        c.family = family_from_name(family);
        detail::maybe(t, "num_images", c.num_images);
        detail::maybe(t, "eval_images", c.eval_images);
        if (t.contains("image_size")) {
            const auto& s = t.at("image_size");
            if (s.is_array()) {
                if (s.size() != 2) throw std::invalid_argument("config: image_size array must be [h, w]");
                c.height = s.at(0).get<int>();
                c.width = s.at(1).get<int>();
            } else {
                c.height = c.width = s.get<int>();
            }
        }
        detail::maybe(t, "num_classes", c.num_classes);
        detail::maybe(t, "noise_std", c.noise_std);
    }
    c.model.num_classes = c.num_classes;

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, "model", {"dim", "blocks", "rho", "group_size", "alpha", "scales", "final_concat",
                                        "selection", "temperature"});
        detail::maybe(m, "dim", c.model.dim);
        detail::maybe(m, "blocks", c.model.blocks);
        detail::maybe(m, "rho", c.model.rho);
        detail::maybe(m, "group_size", c.model.group_size);
        detail::maybe(m, "alpha", c.model.alpha);
        detail::maybe(m, "scales", c.model.scales);
        detail::maybe(m, "final_concat", c.model.final_concat);
        std::string sel = selection_name(c.model.selection);
        detail::maybe(m, "selection", sel);
        c.model.selection = selection_from_name(sel);
        detail::maybe(m, "temperature", c.model.temperature);
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, "train",
                           {"steps", "batch_size", "lr", "momentum", "weight_decay", "log_every", "eval_every"});
        detail::maybe(t, "steps", c.train.steps);
        detail::maybe(t, "batch_size", c.train.batch_size);
        detail::maybe(t, "lr", c.train.lr);
        detail::maybe(t, "momentum", c.train.momentum);
        detail::maybe(t, "weight_decay", c.train.weight_decay);
        detail::maybe(t, "log_every", c.train.log_every);
        detail::maybe(t, "eval_every", c.train.eval_every);
    }
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"seed", c.seed},
        {"task",
         {{"family", family_name(c.family)},
          {"num_images", c.num_images},
          {"eval_images", c.eval_images},
          {"image_size", {c.height, c.width}},
          {"num_classes", c.num_classes},
          {"noise_std", c.noise_std}}},
        {"model",
         {{"dim", c.model.dim},
          {"blocks", c.model.blocks},
          {"rho", c.model.rho},
          {"group_size", c.model.group_size},
          {"alpha", c.model.alpha},
          {"scales", c.model.scales},
          {"final_concat", c.model.final_concat},
          {"selection", selection_name(c.model.selection)},
          {"temperature", c.model.temperature}}},
        {"train",
         {{"steps", c.train.steps},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},
          {"momentum", c.train.momentum},
          {"weight_decay", c.train.weight_decay},
          {"log_every", c.train.log_every},
          {"eval_every", c.train.eval_every}}}};
}

/// Every structural error a run could hit mid-flight is raised here,
/// before any training work starts.
inline void validate_config(const RunConfig& c) {
    if (c.model.scales != 1 && c.model.scales != 4)
        throw std::invalid_argument("config: scales must be 1 or 4");
    const int div = c.model.scales == 4 ? 32 : 8;
    if (c.height % div != 0 || c.width % div != 0)
        throw std::invalid_argument("config: image size " + std::to_string(c.height) + "x" +
                                    std::to_string(c.width) + " is not divisible by " + std::to_string(div));
    if (c.model.rho < 0.0 || c.model.rho > 1.0) throw std::invalid_argument("config: rho must lie in [0,1]");
    if (c.model.group_size < 1) throw std::invalid_argument("config: group_size must be >= 1");
    if (c.model.rho > 0.0) {
        const int coarsest = c.model.scales == 4 ? 32 : 8;
        for (int stride = div == 32 ? 4 : 8; stride <= coarsest; stride *= 2) {
            if ((c.height / stride) % c.model.group_size != 0 || (c.width / stride) % c.model.group_size != 0)
                throw std::invalid_argument("config: feature map " + std::to_string(c.height / stride) + "x" +
                                            std::to_string(c.width / stride) + " at stride " +
                                            std::to_string(stride) + " is not divisible by group_size " +
                                            std::to_string(c.model.group_size));
        }
    }
    if (c.model.blocks < 1) throw std::invalid_argument("config: blocks must be >= 1");
    if (c.model.dim < 1) throw std::invalid_argument("config: dim must be >= 1");
    if (c.model.alpha < 0.0) throw std::invalid_argument("config: alpha must be >= 0");
    if (c.num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
    if (c.num_images < 1 || c.eval_images < 1) throw std::invalid_argument("config: need training and eval images");
    if (c.train.steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    if (c.train.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (c.train.log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
}

/// Reads a config file and applies the PRSEG_SEED environment override.
inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
    RunConfig c = config_from_json(j);
    if (const char* env = std::getenv("PRSEG_SEED")) {
        c.seed = std::strtoull(env, nullptr, 10);
        std::cerr << "seed overridden by PRSEG_SEED=" << c.seed << "\n";
    }
    validate_config(c);
    return c;
}

// ---------------------------------------------------------------------------
// dataset wiring
// ---------------------------------------------------------------------------

inline SyntheticTask train_task(const RunConfig& c) {
    return SyntheticTask{mix(c.seed, 1), c.num_images, c.height, c.width, c.num_classes, c.family, c.noise_std};
}

inline SyntheticTask eval_task(const RunConfig& c) {
    return SyntheticTask{mix(c.seed, 2), c.eval_images, c.height, c.width, c.num_classes, c.family, c.noise_std};
}

struct EvalResult {
    double miou = 0.0;
    double pixel_acc = 0.0;
};

/// Inference-mode pass over a dataset: logits are upsampled to label
/// resolution, argmaxed, and scored dataset-wide.
inline EvalResult evaluate_model(const PrsegModel& model, const std::vector<Sample>& samples, Rng& rng) {
    if (samples.empty()) throw std::invalid_argument("evaluate_model: empty dataset");
    SegScorer scorer(model.cfg.num_classes);
    for (const auto& s : samples) {
        const ForwardResult fr = model_forward(model, s.image, Mode::inference, rng);
        const Tensor up = upsample_bilinear(fr.logits, s.label.dim(0), s.label.dim(1));
        scorer.add(argmax_channels(up), s.label);
    }
    return {scorer.miou(), scorer.pixel_accuracy()};
}

// ---------------------------------------------------------------------------
// checkpoint glue
// ---------------------------------------------------------------------------

inline std::string rng_to_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline Rng rng_from_string(const std::string& s) {
    Rng rng;
    std::istringstream is(s);
    is >> rng;
    if (!is) throw std::runtime_error("checkpoint: malformed rng state");
    return rng;
}

inline void save_train_checkpoint(const std::string& path, const PrsegModel& model, const Sgd& opt,
                                  const Rng& train_rng, const RunConfig& cfg) {
    std::vector<std::pair<std::string, Tensor>> tensors = named_params(model);
    const auto& vel = opt.velocity();
    const std::size_t nparams = tensors.size();
    for (std::size_t i = 0; i < nparams; ++i)
        tensors.emplace_back("opt.m." + tensors[i].first,
                             Tensor::from_data(tensors[i].second.shape(), vel[i]));
    nlohmann::json meta;
    meta["format"] = 1;
    meta["step"] = opt.step_count();
    meta["rng_train"] = rng_to_string(train_rng);
    meta["config"] = config_to_json(cfg);
    save_checkpoint(path, tensors, meta);
}

/// Copies checkpointed tensors into a freshly initialized model, by name.
inline void restore_params(PrsegModel& model, const Checkpoint& ckpt) {
    for (auto& [name, t] : named_params(model)) {
        const auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
        if (it->second.shape() != t.shape())
            throw std::runtime_error("checkpoint: tensor " + name + " has shape " +
                                     shape_str(it->second.shape()) + ", model expects " + shape_str(t.shape()));
        t.mutable_data() = it->second.data();
        t.zero_grad();
    }
}

inline PrsegModel model_from_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg) {
    Rng init_rng = seeded(mix(cfg.seed, 3));
    PrsegModel model = init_model(cfg.model, init_rng);
    restore_params(model, ckpt);
    return model;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct RunOutputs {
    std::vector<MetricsRecord> records;
    double final_miou = 0.0;
    double final_pixel_acc = 0.0;
    double final_fraction = 0.0;  // mean selected fraction over the last quarter of logged steps
    double wall_seconds = 0.0;
    std::string checkpoint_path;
};

namespace detail {

inline nlohmann::json record_to_json(const MetricsRecord& r) {
    nlohmann::json j{{"step", r.step},
                     {"loss_ce", r.loss_ce},
                     {"loss_reg", r.loss_reg},
                     {"loss_total", r.loss_total},
                     {"fractions", r.block_fractions}};
    if (r.miou >= 0.0) {
        j["miou"] = r.miou;
        j["pixel_acc"] = r.pixel_acc;
    }
    return j;
}

inline double mean_fraction(const MetricsRecord& r) {
    if (r.block_fractions.empty()) return 0.0;
    double acc = 0.0;
    for (double f : r.block_fractions) acc += f;
    return acc / static_cast<double>(r.block_fractions.size());
}

}  // namespace detail

/// Train per the config; when out_dir is nonempty, writes metrics.jsonl,
/// summary.json, checkpoint.bin and timing.txt there. checkpoint.bin is
/// refreshed at every log point, so an interrupted run can be resumed
/// from its directory and continues exactly as if it had never stopped
/// (a resumed run logs from the resume point onward).
inline RunOutputs run_train(const RunConfig& cfg, const std::string& out_dir, const std::string& resume = "") {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();

    const std::vector<Sample> train_set = generate_dataset(train_task(cfg));
    const std::vector<Sample> eval_set = generate_dataset(eval_task(cfg));

    Rng init_rng = seeded(mix(cfg.seed, 3));
    PrsegModel model = init_model(cfg.model, init_rng);
    NamedParams params = named_params(model);
    Sgd opt(SgdConfig{cfg.train.lr, cfg.train.momentum, cfg.train.weight_decay, cfg.train.steps, 0.9}, params);
    Rng train_rng = seeded(mix(cfg.seed, 4));

    int start_step = 0;
    if (!resume.empty()) {
        const Checkpoint ckpt = load_checkpoint(resume);
        if (config_to_json(config_from_json(ckpt.meta.at("config"))) != config_to_json(cfg))
            throw std::runtime_error("resume: checkpoint config does not match the requested config");
        restore_params(model, ckpt);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto it = ckpt.tensors.find("opt.m." + params[i].first);
            if (it == ckpt.tensors.end()) throw std::runtime_error("resume: missing momentum for " + params[i].first);
            opt.velocity()[i] = it->second.data();
        }
        start_step = ckpt.meta.at("step").get<int>();
        opt.set_step_count(start_step);
        train_rng = rng_from_string(ckpt.meta.at("rng_train").get<std::string>());
        if (start_step >= cfg.train.steps)
            throw std::runtime_error("resume: checkpoint is already at step " + std::to_string(start_step));
    }

    RunOutputs out;
    std::ofstream metrics_stream;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        out.checkpoint_path = (std::filesystem::path(out_dir) / "checkpoint.bin").string();
        metrics_stream.open(std::filesystem::path(out_dir) / "metrics.jsonl", std::ios::trunc);
        if (!metrics_stream) throw std::runtime_error("run_train: cannot write metrics in " + out_dir);
    }

    const int B = cfg.train.batch_size;
    for (int step = start_step + 1; step <= cfg.train.steps; ++step) {
        double ce = 0.0, reg = 0.0, total = 0.0;
        std::vector<double> fractions;
        for (int b = 0; b < B; ++b) {
            const Sample& s = train_set[static_cast<std::size_t>(
                uniform_int(train_rng, 0, static_cast<int>(train_set.size()) - 1))];
            const ForwardResult fr = model_forward(model, s.image, Mode::training, train_rng);
            const LossParts parts = total_loss(fr.logits, s.label, fr.qs, cfg.model);
            backward(scale(parts.total, 1.0 / B));
            ce += parts.ce.value() / B;
            reg += parts.reg.value() / B;
            total += parts.total.value() / B;
            if (fractions.empty()) fractions.assign(fr.qs.size(), 0.0);
            for (std::size_t i = 0; i < fr.qs.size(); ++i) {
                double f = 0.0;
                for (double v : fr.qs[i].data()) f += v;
                fractions[i] += f / static_cast<double>(fr.qs[i].size()) / B;
            }
        }
        opt.step(params);

        const bool last = step == cfg.train.steps;
        if (step % cfg.train.log_every == 0 || last) {
            MetricsRecord rec;
            rec.step = step;
            rec.loss_ce = ce;
            rec.loss_reg = reg;
            rec.loss_total = total;
            rec.block_fractions = fractions;
            const bool do_eval = last || (cfg.train.eval_every > 0 && step % cfg.train.eval_every == 0);
            if (do_eval) {
                Rng eval_rng = seeded(mix(mix(cfg.seed, 5), static_cast<std::uint64_t>(step)));
                const EvalResult ev = evaluate_model(model, eval_set, eval_rng);
                rec.miou = ev.miou;
                rec.pixel_acc = ev.pixel_acc;
            }
            rec.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (!out_dir.empty()) {
                metrics_stream << detail::record_to_json(rec).dump() << "\n";
                metrics_stream.flush();
                save_train_checkpoint(out.checkpoint_path, model, opt, train_rng, cfg);
            }
            out.records.push_back(std::move(rec));
        }
    }

    const MetricsRecord& final_rec = out.records.back();
    out.final_miou = final_rec.miou;
    out.final_pixel_acc = final_rec.pixel_acc;
    const std::size_t tail = std::max<std::size_t>(1, out.records.size() / 4);
    for (std::size_t i = out.records.size() - tail; i < out.records.size(); ++i)
        out.final_fraction += detail::mean_fraction(out.records[i]);
    out.final_fraction /= static_cast<double>(tail);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!out_dir.empty()) {
        const std::filesystem::path dir(out_dir);
        {
            nlohmann::json summary{{"steps", cfg.train.steps},
                                   {"final_miou", out.final_miou},
                                   {"final_pixel_acc", out.final_pixel_acc},
                                   {"final_fraction", out.final_fraction},
                                   {"config", config_to_json(cfg)}};
            std::ofstream ss(dir / "summary.json", std::ios::trunc);
            ss << summary.dump(2) << "\n";
        }
        {
            std::ofstream ts(dir / "timing.txt", std::ios::trunc);
            ts << out.wall_seconds << " s\n";
        }
    }
    return out;
}

/// Evaluates a checkpoint on the config's held-out split. With the
/// training config this reproduces the final training-time numbers.
inline EvalResult run_eval(const std::string& checkpoint_path, const RunConfig& cfg) {
    validate_config(cfg);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const PrsegModel model = model_from_checkpoint(ckpt, cfg);
    const std::vector<Sample> eval_set = generate_dataset(eval_task(cfg));
    Rng eval_rng = seeded(mix(mix(cfg.seed, 5), static_cast<std::uint64_t>(cfg.train.steps)));
    return evaluate_model(model, eval_set, eval_rng);
}

// ---------------------------------------------------------------------------
// ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string value;
    double miou = 0.0;
    double pixel_acc = 0.0;
    double mean_fraction = 0.0;
};

inline RunConfig apply_axis(RunConfig cfg, const std::string& axis, const std::string& value) {
    if (axis == "rho")
        cfg.model.rho = std::stod(value);
    else if (axis == "group_size")
        cfg.model.group_size = std::stoi(value);
    else if (axis == "blocks")
        cfg.model.blocks = std::stoi(value);
    else if (axis == "dim")
        cfg.model.dim = std::stoi(value);
    else if (axis == "alpha")
        cfg.model.alpha = std::stod(value);
    else if (axis == "selection")
        cfg.model.selection = selection_from_name(value);
    else
        throw std::invalid_argument("ablate: unknown axis '" + axis +
                                    "' (expected rho, group_size, blocks, dim, alpha or selection)");
    return cfg;
}

/// One full training run per value; every run shares the base seed so
/// rows differ only along the axis.
inline std::vector<AblationRow> run_ablation(const RunConfig& base, const std::string& axis,
                                             const std::vector<std::string>& values) {
    if (values.empty()) throw std::invalid_argument("ablate: no values given");
    std::vector<AblationRow> rows;
    for (const auto& v : values) {
        const RunConfig cfg = apply_axis(base, axis, v);
        validate_config(cfg);
        const RunOutputs r = run_train(cfg, "");
        rows.push_back({v, r.final_miou, r.final_pixel_acc, r.final_fraction});
    }
    return rows;
}

}  // namespace prseg
