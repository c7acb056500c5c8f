#include <catch2/catch_amalgamated.hpp>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "prseg/checkpoint.hpp"
#include "prseg/model.hpp"
#include "prseg/rng.hpp"

using namespace prseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("prseg_ckpt_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("tensors round-trip bit for bit", "[checkpoint]") {
    TempDir tmp;
    Rng rng = seeded(21);
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<double> vals = {0.0, -0.0, 1.0 / 3.0, -1e-300, 1e300, 42.5};
    tensors.emplace_back("a", Tensor::from_data({2, 3}, std::move(vals)));
    std::vector<double> more(40);
    for (double& v : more) v = normal(rng);
    tensors.emplace_back("b.weight", Tensor::from_data({5, 8}, std::move(more)));

    nlohmann::json meta;
    meta["step"] = 17;
    meta["rng"] = "some stream state";
    save_checkpoint(tmp.file("ck.bin"), tensors, meta);

    const Checkpoint ck = load_checkpoint(tmp.file("ck.bin"));
    CHECK(ck.meta.at("step").get<int>() == 17);
    CHECK(ck.meta.at("rng").get<std::string>() == "some stream state");
    CHECK_FALSE(ck.meta.contains("tensors"));
    REQUIRE(ck.tensors.size() == 2);
    CHECK(ck.tensors.at("a").shape() == Shape{2, 3});
    CHECK(ck.tensors.at("b.weight").shape() == Shape{5, 8});
    // exact payloads, including signed zero and the extreme magnitudes
    CHECK(ck.tensors.at("a").data() == tensors[0].second.data());
    CHECK(std::signbit(ck.tensors.at("a").data()[1]));
    CHECK(ck.tensors.at("b.weight").data() == tensors[1].second.data());
}

TEST_CASE("a whole model round-trips through a checkpoint", "[checkpoint]") {
    TempDir tmp;
    DecoderConfig cfg;
    cfg.dim = 8;
    cfg.blocks = 2;
    cfg.num_classes = 3;
    cfg.scales = 1;
    Rng init = seeded(22);
    PrsegModel m = init_model(cfg, init);
    save_checkpoint(tmp.file("model.bin"), named_params(m), {{"step", 0}});

    Rng init2 = seeded(23);  // different init, then restore
    PrsegModel m2 = init_model(cfg, init2);
    const Checkpoint ck = load_checkpoint(tmp.file("model.bin"));
    for (auto& [name, t] : named_params(m2)) {
        REQUIRE(ck.tensors.count(name) == 1);
        t.mutable_data() = ck.tensors.at(name).data();
    }
    for (const auto& [name, t] : named_params(m))
        for (const auto& [name2, t2] : named_params(m2))
            if (name == name2) CHECK(t.data() == t2.data());
}

TEST_CASE("the header is validated", "[checkpoint]") {
    TempDir tmp;
    CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.bin")), std::runtime_error);

    {
        std::ofstream out(tmp.file("junk.bin"), std::ios::binary);
        out << "NOTATALLACHECKPOINT";
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("junk.bin")), std::runtime_error);

    {
        std::ofstream out(tmp.file("short.bin"), std::ios::binary);
        out << "PRSEG";
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("short.bin")), std::runtime_error);

    // valid file, then truncate the payload
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back("t", Tensor::ones({64}));
    save_checkpoint(tmp.file("full.bin"), tensors, {});
    std::ifstream in(tmp.file("full.bin"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out(tmp.file("trunc.bin"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 32));
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.bin")), std::runtime_error);

    // manifest length running past the end
    {
        std::ofstream out(tmp.file("badlen.bin"), std::ios::binary);
        out.write(bytes.data(), 8);
        std::string len;
        detail::put_u64(len, 1u << 20);
        out.write(len.data(), 8);
        out << "{}";
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("badlen.bin")), std::runtime_error);
}

TEST_CASE("duplicate tensor names are rejected at save time", "[checkpoint]") {
    TempDir tmp;
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back("x", Tensor::ones({2}));
    tensors.emplace_back("x", Tensor::ones({2}));
    CHECK_THROWS_AS(save_checkpoint(tmp.file("dup.bin"), tensors, {}), std::invalid_argument);
}

TEST_CASE("saving twice yields identical bytes", "[checkpoint]") {
    TempDir tmp;
    Rng rng = seeded(24);
    std::vector<double> vals(32);
    for (double& v : vals) v = normal(rng);
    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back("w", Tensor::from_data({4, 8}, std::move(vals)));
    nlohmann::json meta = {{"step", 3}, {"config", {{"dim", 8}}}};
    save_checkpoint(tmp.file("a.bin"), tensors, meta);
    save_checkpoint(tmp.file("b.bin"), tensors, meta);
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    const std::string a = slurp(tmp.file("a.bin"));
    CHECK_FALSE(a.empty());
    CHECK(a == slurp(tmp.file("b.bin")));
}
