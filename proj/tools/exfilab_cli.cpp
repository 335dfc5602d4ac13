// Command-line front end for the exfiltration/mitigation pipeline. Each verb
// loads a config file, runs one pipeline stage for every configured seed and
// writes a JSON report (plus stage artifacts) into the output directory.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "exfilab/exfilab.hpp"

namespace {

using exfilab::Config;
using exfilab::json;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const exfilab::CapacityError*>(&e) ||
        dynamic_cast<const exfilab::PayloadError*>(&e))
        return 5;
    if (dynamic_cast<const exfilab::NumericError*>(&e) ||
        dynamic_cast<const exfilab::UndefinedAucError*>(&e))
        return 4;
    if (dynamic_cast<const exfilab::IoError*>(&e) || dynamic_cast<const exfilab::ParseError*>(&e))
        return 3;
    if (dynamic_cast<const exfilab::Error*>(&e)) return 2;
    return 1;
}

struct CommonArgs {
    std::string config_path;
    long seed = -1;
    std::string out_dir;
};

Config load_config(const CommonArgs& args) {
    Config cfg = Config::parse_file(args.config_path);
    if (args.seed >= 0) cfg.set("seeds", "seeds", std::to_string(args.seed));
    if (!args.out_dir.empty()) cfg.set("output", "dir", args.out_dir);
    return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "experiment config file")->required();
    sub->add_option("--seed", args.seed, "run a single seed, overriding [seeds] in the config");
    sub->add_option("--out", args.out_dir, "output directory, overriding [output] dir");
}

void print_summary(const char* verb, const json& report) {
    std::cout << verb;
    if (report.contains("aggregate")) std::cout << " " << report["aggregate"].dump();
    std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-exfiltration attacks and export-time mitigations, desk scale"};
    app.require_subcommand(1);

    struct Verb {
        const char* name;
        const char* help;
        json (*run)(const Config&);
    };
    const Verb verbs[] = {
        {"gen-data", "generate the synthetic train/test datasets", exfilab::cmd_gen_data},
        {"train", "train the clean utility classifier", exfilab::cmd_train},
        {"attack", "run the transpose or dec attack", exfilab::cmd_attack},
        {"mitigate", "sanitize a model at the export boundary", exfilab::cmd_mitigate},
        {"extract", "reconstruct stolen data from an exported model", exfilab::cmd_extract},
        {"eval", "evaluate a model's utility on the test set", exfilab::cmd_eval},
        {"usability", "train a fresh classifier on stolen data", exfilab::cmd_usability},
        {"ablate", "sweep eta_high / decay / epochs for lwlrd_ft", exfilab::cmd_ablate},
    };

    CommonArgs args[std::size(verbs)];
    for (size_t i = 0; i < std::size(verbs); ++i)
        add_common(app.add_subcommand(verbs[i].name, verbs[i].help), args[i]);

    CLI11_PARSE(app, argc, argv);

    for (size_t i = 0; i < std::size(verbs); ++i) {
        if (!app.get_subcommand(verbs[i].name)->parsed()) continue;
        try {
            json report = verbs[i].run(load_config(args[i]));
            print_summary(verbs[i].name, report);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << verbs[i].name << ": " << e.what() << "\n";
            return exit_code_for(e);
        }
    }
    return 1;
}
