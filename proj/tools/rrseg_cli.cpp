// rrseg command-line tool. Links only the C API (rrseg.h).
#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <string>

#include "rrseg.h"

namespace {

int report(int code) {
    if (code != RRSEG_OK) std::fprintf(stderr, "error: %s\n", rrseg_last_error());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rrseg: two-stage referring image segmentation"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train a model");
    std::string train_config, train_data, train_out;
    train->add_option("--config", train_config, "config file (key=value)")->required();
    train->add_option("--data", train_data, "dataset root")->required();
    train->add_option("--out", train_out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_out = "report.json", eval_split = "test";
    eval->add_option("--ckpt", eval_ckpt, "checkpoint")->required();
    eval->add_option("--data", eval_data, "dataset root")->required();
    eval->add_option("--out", eval_out, "report JSON path");
    eval->add_option("--split", eval_split, "dataset split (default test)");

    auto* predict = app.add_subcommand("predict", "segment one image");
    std::string pr_ckpt, pr_image, pr_text, pr_out;
    bool pr_dump = false;
    predict->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
    predict->add_option("--image", pr_image, "input image (PNG or PGM)")->required();
    predict->add_option("--text", pr_text, "referring expression")->required();
    predict->add_option("--out", pr_out, "output mask path (default <image>.mask.png)");
    predict->add_flag("--dump-prompts", pr_dump, "also write the dense prompt heatmap (PGM)");

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic triplet dataset");
    std::string sy_spec, sy_out, sy_split = "train";
    int64_t sy_n = 0;
    synth->add_option("--spec", sy_spec, "generator spec file (key=value)");
    synth->add_option("--n", sy_n, "number of samples")->required();
    synth->add_option("--out", sy_out, "output directory")->required();
    synth->add_option("--split", sy_split, "manifest split name (default train)");

    auto* diag = app.add_subcommand("diagnose", "attribute errors per sample");
    std::string dg_ckpt, dg_data, dg_split = "test", dg_out;
    diag->add_option("--ckpt", dg_ckpt, "checkpoint")->required();
    diag->add_option("--data", dg_data, "dataset root")->required();
    diag->add_option("--split", dg_split, "dataset split (default test)");
    diag->add_option("--out", dg_out, "per-sample JSONL report path");

    CLI11_PARSE(app, argc, argv);

    if (*train) return report(rrseg_train(train_config.c_str(), train_data.c_str(),
                                          train_out.c_str()));
    if (*eval)
        return report(rrseg_eval(eval_ckpt.c_str(), eval_data.c_str(), eval_split.c_str(),
                                 eval_out.c_str()));
    if (*predict) {
        std::string out = pr_out.empty() ? pr_image + ".mask.png" : pr_out;
        std::string dense;
        if (pr_dump) {
            std::string stem = pr_image;
            size_t dot = stem.find_last_of('.');
            if (dot != std::string::npos) stem = stem.substr(0, dot);
            dense = stem + ".dense.pgm";
        }
        return report(rrseg_predict_file(pr_ckpt.c_str(), pr_image.c_str(), pr_text.c_str(),
                                         out.c_str(), dense.empty() ? nullptr : dense.c_str()));
    }
    if (*synth)
        return report(rrseg_synth_data(sy_spec.empty() ? nullptr : sy_spec.c_str(), sy_n,
                                       sy_out.c_str(), sy_split.c_str()));
    if (*diag) {
        int64_t ok = 0, loc = 0, seg = 0;
        int code = rrseg_diagnose(dg_ckpt.c_str(), dg_data.c_str(), dg_split.c_str(),
                                  dg_out.empty() ? nullptr : dg_out.c_str(), &ok, &loc, &seg);
        if (code == RRSEG_OK)
            std::printf("ok=%lld localization_error=%lld segmentation_error=%lld\n",
                        static_cast<long long>(ok), static_cast<long long>(loc),
                        static_cast<long long>(seg));
        return report(code);
    }
    return 0;
}
