#include <catch2/catch_amalgamated.hpp>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "prseg/train.hpp"

using namespace prseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("prseg_train_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string dir(const std::string& name) const { return (path / name).string(); }
};

RunConfig tiny_config() {
    RunConfig c;
    c.seed = 9;
    c.family = ShapeFamily::rectangles;
    c.num_images = 4;
    c.eval_images = 2;
    c.height = c.width = 32;
    c.num_classes = 3;
    c.noise_std = 0.2;
    c.model.dim = 8;
    c.model.blocks = 1;
    c.model.rho = 0.5;
    c.model.group_size = 2;
    c.model.num_classes = 3;
    c.model.scales = 1;
    c.train.steps = 6;
    c.train.batch_size = 2;
    c.train.lr = 0.05;
    c.train.log_every = 2;
    c.train.eval_every = 0;
    return c;
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config defaults and json round-trip", "[train]") {
    const RunConfig d = config_from_json(nlohmann::json::object());
    CHECK(d.seed == 7);
    CHECK(d.family == ShapeFamily::stripes);
    CHECK(d.height == 64);
    CHECK(d.width == 64);
    CHECK(d.num_classes == 4);
    CHECK(d.noise_std == 0.25);
    CHECK(d.model.dim == 48);
    CHECK(d.model.blocks == 2);
    CHECK(d.model.rho == 0.5);
    CHECK(d.model.group_size == 4);
    CHECK(d.model.alpha == 0.4);
    CHECK(d.model.scales == 1);
    CHECK(d.model.final_concat);
    CHECK(d.model.selection == Selection::dcsm);
    CHECK(d.model.num_classes == 4);
    CHECK(d.train.steps == 600);
    CHECK(d.train.batch_size == 4);
    CHECK(d.train.lr == 0.01);
    CHECK(d.train.momentum == 0.9);
    CHECK(d.train.weight_decay == 0.0005);
    CHECK(d.train.log_every == 25);
    CHECK(d.train.eval_every == 0);

    const RunConfig c = tiny_config();
    const RunConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("config parsing accepts both image_size forms and rejects junk", "[train]") {
    nlohmann::json j;
    j["task"]["image_size"] = 32;
    RunConfig c = config_from_json(j);
    CHECK(c.height == 32);
    CHECK(c.width == 32);

    j["task"]["image_size"] = {64, 32};
    c = config_from_json(j);
    CHECK(c.height == 64);
    CHECK(c.width == 32);

    j["task"]["image_size"] = {64, 32, 16};
    CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);

    CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"task", {{"bogus", 1}}}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"model", {{"rho_", 0.5}}}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"train", {{"steps", 5}, {"warmup", 2}}}}), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json({{"model", {{"selection", "round_robin"}}}}), std::invalid_argument);
}

TEST_CASE("validate_config flags structural problems early", "[train]") {
    auto broken = [](auto&& tweak) {
        RunConfig c = tiny_config();
        tweak(c);
        return c;
    };
    CHECK_NOTHROW(validate_config(tiny_config()));
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.model.scales = 3; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.height = 20; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.model.rho = 1.5; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.model.group_size = 3; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.model.blocks = 0; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.model.dim = 0; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.num_classes = 1; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.train.steps = 0; })), std::invalid_argument);
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) { c.train.batch_size = 0; })), std::invalid_argument);
    // with rotation disabled the patch divisibility rule does not apply
    CHECK_NOTHROW(validate_config(broken([](RunConfig& c) {
        c.model.rho = 0.0;
        c.model.group_size = 3;
    })));
    // multi-scale needs divisibility at the coarsest stride too
    CHECK_THROWS_AS(validate_config(broken([](RunConfig& c) {
        c.model.scales = 4;
        c.height = c.width = 32;  // 32/32 = 1x1 map, not divisible by 2
        c.model.group_size = 2;
    })), std::invalid_argument);
}

TEST_CASE("load_config_file reads json and honors the seed override", "[train]") {
    TempDir tmp("cfg");
    {
        std::ofstream out(tmp.dir("ok.json"));
        out << R"({"seed": 5, "task": {"image_size": 32}, "train": {"steps": 2}})";
    }
    const RunConfig c = load_config_file(tmp.dir("ok.json"));
    CHECK(c.seed == 5);
    CHECK(c.train.steps == 2);

    ::setenv("PRSEG_SEED", "123", 1);
    const RunConfig o = load_config_file(tmp.dir("ok.json"));
    ::unsetenv("PRSEG_SEED");
    CHECK(o.seed == 123);

    {
        std::ofstream out(tmp.dir("bad.json"));
        out << "{not json";
    }
    CHECK_THROWS_AS(load_config_file(tmp.dir("bad.json")), std::runtime_error);
    CHECK_THROWS_AS(load_config_file(tmp.dir("missing.json")), std::runtime_error);
}

TEST_CASE("train and eval splits are disjoint streams", "[train]") {
    const RunConfig c = tiny_config();
    const SyntheticTask tr = train_task(c);
    const SyntheticTask ev = eval_task(c);
    CHECK(tr.seed != ev.seed);
    CHECK(generate_sample(tr, 0).image.data() != generate_sample(ev, 0).image.data());
}

TEST_CASE("rng state round-trips through a string", "[train]") {
    Rng a = seeded(1234);
    for (int i = 0; i < 17; ++i) a();  // advance into the stream
    Rng b = rng_from_string(rng_to_string(a));
    for (int i = 0; i < 50; ++i) REQUIRE(a() == b());
    CHECK_THROWS_AS(rng_from_string(""), std::runtime_error);
}

TEST_CASE("run_train is deterministic in memory", "[train]") {
    const RunConfig c = tiny_config();
    const RunOutputs a = run_train(c, "");
    const RunOutputs b = run_train(c, "");
    REQUIRE(a.records.size() == b.records.size());
    REQUIRE(a.records.size() == 3);  // steps 2, 4, 6 at log_every 2
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].step == b.records[i].step);
        CHECK(a.records[i].loss_ce == b.records[i].loss_ce);
        CHECK(a.records[i].loss_reg == b.records[i].loss_reg);
        CHECK(a.records[i].loss_total == b.records[i].loss_total);
        CHECK(a.records[i].block_fractions == b.records[i].block_fractions);
    }
    CHECK(a.final_miou == b.final_miou);
    CHECK(a.final_pixel_acc == b.final_pixel_acc);
    CHECK(a.final_fraction == b.final_fraction);
    // only the last record carries eval numbers when eval_every is 0
    CHECK(a.records[0].miou == -1.0);
    CHECK(a.records[2].miou >= 0.0);
    CHECK(a.records[2].miou == a.final_miou);
}

TEST_CASE("run_train writes the run directory", "[train]") {
    TempDir tmp("rundir");
    const RunConfig c = tiny_config();
    const RunOutputs out = run_train(c, tmp.dir("run"));

    const std::string metrics = slurp(tmp.dir("run") + "/metrics.jsonl");
    int lines = 0;
    std::istringstream ms(metrics);
    std::string line;
    while (std::getline(ms, line)) {
        const nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("loss_total"));
        CHECK_FALSE(j.contains("wall_clock"));
        ++lines;
    }
    CHECK(lines == 3);

    const nlohmann::json summary = nlohmann::json::parse(slurp(tmp.dir("run") + "/summary.json"));
    CHECK(summary.at("final_miou").get<double>() == out.final_miou);
    CHECK(summary.at("final_fraction").get<double>() == out.final_fraction);
    CHECK(summary.at("config") == config_to_json(c));
    CHECK_FALSE(summary.contains("wall_seconds"));

    CHECK_FALSE(slurp(tmp.dir("run") + "/timing.txt").empty());

    const Checkpoint ck = load_checkpoint(out.checkpoint_path);
    CHECK(ck.meta.at("step").get<int>() == 6);
    CHECK(ck.tensors.count("dec.phi.weight") == 1);
    CHECK(ck.tensors.count("opt.m.dec.phi.weight") == 1);

    // two runs of the same config produce byte-identical metrics artifacts
    run_train(c, tmp.dir("again"));
    CHECK(slurp(tmp.dir("again") + "/metrics.jsonl") == metrics);
    CHECK(slurp(tmp.dir("again") + "/summary.json") == slurp(tmp.dir("run") + "/summary.json"));
}

TEST_CASE("run_eval reproduces the final training evaluation", "[train]") {
    TempDir tmp("eval");
    const RunConfig c = tiny_config();
    const RunOutputs out = run_train(c, tmp.dir("run"));
    const EvalResult ev = run_eval(out.checkpoint_path, c);
    CHECK(ev.miou == out.final_miou);
    CHECK(ev.pixel_acc == out.final_pixel_acc);
}

TEST_CASE("a mid-run checkpoint resumes into the exact same trajectory", "[train]") {
    TempDir tmp("resume");
    RunConfig c = tiny_config();
    c.train.steps = 8;
    c.train.log_every = 1;
    c.train.eval_every = 4;

    const RunOutputs straight = run_train(c, tmp.dir("straight"));
    REQUIRE(straight.records.size() == 8);

    // replay the first four steps with the public pieces and checkpoint there
    const std::vector<Sample> train_set = generate_dataset(train_task(c));
    Rng init_rng = seeded(mix(c.seed, 3));
    PrsegModel model = init_model(c.model, init_rng);
    NamedParams params = named_params(model);
    Sgd opt(SgdConfig{c.train.lr, c.train.momentum, c.train.weight_decay, c.train.steps, 0.9}, params);
    Rng train_rng = seeded(mix(c.seed, 4));
    const int B = c.train.batch_size;
    for (int step = 1; step <= 4; ++step) {
        for (int b = 0; b < B; ++b) {
            const Sample& s = train_set[static_cast<std::size_t>(
                uniform_int(train_rng, 0, static_cast<int>(train_set.size()) - 1))];
            const ForwardResult fr = model_forward(model, s.image, Mode::training, train_rng);
            const LossParts parts = total_loss(fr.logits, s.label, fr.qs, c.model);
            backward(scale(parts.total, 1.0 / B));
        }
        opt.step(params);
    }
    const std::string half = tmp.dir("half.bin");
    save_train_checkpoint(half, model, opt, train_rng, c);

    const RunOutputs resumed = run_train(c, tmp.dir("resumed"), half);
    REQUIRE(resumed.records.size() == 4);  // steps 5..8
    for (std::size_t i = 0; i < 4; ++i) {
        const MetricsRecord& r = resumed.records[i];
        const MetricsRecord& s = straight.records[4 + i];
        CHECK(r.step == s.step);
        CHECK(r.loss_ce == s.loss_ce);
        CHECK(r.loss_reg == s.loss_reg);
        CHECK(r.loss_total == s.loss_total);
        CHECK(r.block_fractions == s.block_fractions);
        CHECK(r.miou == s.miou);
    }
    CHECK(resumed.final_miou == straight.final_miou);

    // the final checkpoints agree tensor for tensor, bit for bit
    const Checkpoint a = load_checkpoint(tmp.dir("straight") + "/checkpoint.bin");
    const Checkpoint b = load_checkpoint(tmp.dir("resumed") + "/checkpoint.bin");
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (const auto& [name, t] : a.tensors) {
        REQUIRE(b.tensors.count(name) == 1);
        CHECK(t.data() == b.tensors.at(name).data());
    }
    CHECK(a.meta.at("rng_train") == b.meta.at("rng_train"));

    // a finished checkpoint cannot be resumed further
    CHECK_THROWS_AS(run_train(c, "", tmp.dir("straight") + "/checkpoint.bin"), std::runtime_error);
    // nor can one with a different config
    RunConfig other = c;
    other.noise_std = 0.3;
    CHECK_THROWS_AS(run_train(other, "", half), std::runtime_error);
}

TEST_CASE("ablation runs one row per value on a shared seed", "[train]") {
    RunConfig c = tiny_config();
    c.train.steps = 4;
    const auto rows = run_ablation(c, "rho", {"0", "0.5"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].value == "0");
    CHECK(rows[0].mean_fraction == 0.0);
    CHECK(rows[1].value == "0.5");
    CHECK(rows[1].mean_fraction > 0.0);
    CHECK(rows[0].miou >= 0.0);
    CHECK(rows[1].miou <= 1.0);

    CHECK_THROWS_AS(run_ablation(c, "rho", {}), std::invalid_argument);
    CHECK_THROWS_AS(run_ablation(c, "clip", {"1"}), std::invalid_argument);
}

TEST_CASE("apply_axis reaches every advertised knob", "[train]") {
    const RunConfig base = tiny_config();
    CHECK(apply_axis(base, "rho", "0.25").model.rho == 0.25);
    CHECK(apply_axis(base, "group_size", "4").model.group_size == 4);
    CHECK(apply_axis(base, "blocks", "3").model.blocks == 3);
    CHECK(apply_axis(base, "dim", "16").model.dim == 16);
    CHECK(apply_axis(base, "alpha", "0.1").model.alpha == 0.1);
    CHECK(apply_axis(base, "selection", "random").model.selection == Selection::random);
    CHECK_THROWS_AS(apply_axis(base, "depth", "2"), std::invalid_argument);
}

TEST_CASE("evaluate_model scores an untrained model sanely", "[train]") {
    const RunConfig c = tiny_config();
    Rng init = seeded(mix(c.seed, 3));
    const PrsegModel model = init_model(c.model, init);
    const auto eval_set = generate_dataset(eval_task(c));
    Rng rng = seeded(1);
    const EvalResult ev = evaluate_model(model, eval_set, rng);
    CHECK(ev.miou >= 0.0);
    CHECK(ev.miou <= 1.0);
    CHECK(ev.pixel_acc >= 0.0);
    CHECK(ev.pixel_acc <= 1.0);
    CHECK_THROWS_AS(evaluate_model(model, {}, rng), std::invalid_argument);
}
