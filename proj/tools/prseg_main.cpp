#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prseg/prseg.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const std::string& resume) {
    const prseg::RunConfig cfg = prseg::load_config_file(config_path);
    const prseg::RunOutputs r = prseg::run_train(cfg, out_dir, resume);
    std::cout << "trained " << cfg.train.steps << " steps\n"
              << "final mIoU " << r.final_miou << ", pixel acc " << r.final_pixel_acc << ", selected fraction "
              << r.final_fraction << "\n"
              << "outputs in " << out_dir << " (" << r.wall_seconds << " s)\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path) {
    const prseg::RunConfig cfg = prseg::load_config_file(config_path);
    const prseg::EvalResult ev = prseg::run_eval(checkpoint, cfg);
    std::cout << "mIoU " << ev.miou << "\npixel acc " << ev.pixel_acc << "\n";
    return 0;
}

int cmd_ablate(const std::string& axis, const std::string& values_csv, const std::string& config_path,
               const std::string& out_path) {
    const prseg::RunConfig cfg = prseg::load_config_file(config_path);
    const std::vector<std::string> values = split_csv(values_csv);
    const auto rows = prseg::run_ablation(cfg, axis, values);
    std::printf("%-12s %-10s %-10s %-10s\n", axis.c_str(), "mIoU", "pixel_acc", "fraction");
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        std::printf("%-12s %-10.4f %-10.4f %-10.4f\n", r.value.c_str(), r.miou, r.pixel_acc, r.mean_fraction);
        jrows.push_back({{"value", r.value},
                         {"miou", r.miou},
                         {"pixel_acc", r.pixel_acc},
                         {"mean_fraction", r.mean_fraction}});
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw std::runtime_error("ablate: cannot write " + out_path);
        out << nlohmann::json{{"axis", axis}, {"rows", jrows}}.dump(2) << "\n";
    }
    return 0;
}

int cmd_erf(const std::string& checkpoint, const std::string& center_arg, const std::string& out_path,
            const std::string& config_path, int probe_images) {
    prseg::RunConfig cfg;
    const prseg::Checkpoint ckpt = prseg::load_checkpoint(checkpoint);
    if (!config_path.empty())
        cfg = prseg::load_config_file(config_path);
    else
        cfg = prseg::config_from_json(ckpt.meta.at("config"));
    const prseg::PrsegModel model = prseg::model_from_checkpoint(ckpt, cfg);

    int r = -1, c = -1;
    if (std::sscanf(center_arg.c_str(), "%d,%d", &r, &c) != 2)
        throw std::invalid_argument("erf: --center expects 'row,col', got '" + center_arg + "'");

    prseg::SyntheticTask task = prseg::eval_task(cfg);
    task.num_images = probe_images;
    std::vector<prseg::Tensor> images;
    for (const auto& s : prseg::generate_dataset(task)) images.push_back(s.image);

    prseg::Rng rng = prseg::seeded(prseg::mix(cfg.seed, 6));
    const prseg::ErfResult erf = prseg::erf_probe(model, images, r, c, rng);

    nlohmann::json j{{"center", {r, c}}, {"height", erf.height}, {"width", erf.width}, {"heat", erf.heat}};
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("erf: cannot write " + out_path);
    out << j.dump() << "\n";

    int nonzero = 0;
    for (double v : erf.heat)
        if (v != 0.0) ++nonzero;
    std::cout << "erf heat map " << erf.height << "x" << erf.width << ", " << nonzero
              << " nonzero pixels, written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-rotate segmentation decoder harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", resume, checkpoint, axis, values, center = "4,4",
                             out_path = "erf.json", ablate_out;
    int probe_images = 4;

    auto* train = app.add_subcommand("train", "train on the synthetic task");
    train->add_option("--config", config_path, "config JSON")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--resume", resume, "checkpoint to continue from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--config", config_path, "config JSON")->required();

    auto* ablate = app.add_subcommand("ablate", "sweep one config axis");
    ablate->add_option("--axis", axis, "rho|group_size|blocks|dim|alpha|selection")->required();
    ablate->add_option("--values", values, "comma-separated values")->required();
    ablate->add_option("--config", config_path, "config JSON")->required();
    ablate->add_option("--out", ablate_out, "write the table as JSON");

    auto* erf = app.add_subcommand("erf", "effective receptive field probe");
    erf->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    erf->add_option("--center", center, "probe pixel as row,col");
    erf->add_option("--out", out_path, "output JSON path")->required();
    erf->add_option("--config", config_path, "config JSON (defaults to the one in the checkpoint)");
    erf->add_option("--images", probe_images, "number of probe images");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config_path, out_dir, resume);
        if (*eval) return cmd_eval(checkpoint, config_path);
        if (*ablate) return cmd_ablate(axis, values, config_path, ablate_out);
        if (*erf) return cmd_erf(checkpoint, center, out_path, config_path, probe_images);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
