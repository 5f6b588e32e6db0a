#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gisd/config.hpp"
#include "gisd/run.hpp"

namespace {

std::string keys_footer() {
    std::ostringstream os;
    os << "\nConfig file keys (key = value, '#' comments):\n";
    for (const auto& [key, doc] : gisd::config_keys()) os << "  " << key << "  " << doc << '\n';
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-invariant skill discovery"};
    app.require_subcommand(1);
    app.footer(keys_footer());

    gisd::RunOptions opts;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "config file (key = value)");
        sub->add_option("--seed", seed, "root seed, overrides the config");
        sub->add_option("--out-dir", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--checkpoint", opts.checkpoint, "checkpoint to resume from or evaluate");
    };

    auto* train = app.add_subcommand("train-skills", "train the discriminator, dual variable and skill policy");
    add_common(train);
    auto* check = app.add_subcommand("check-invariants", "run the exact invariance battery");
    add_common(check);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--mode", opts.mode, "coverage | downstream | orbit-generalization")
        ->check(CLI::IsMember({"coverage", "downstream", "orbit-generalization"}))
        ->required();
    auto* down = app.add_subcommand("train-downstream", "train a high-level policy over frozen skills");
    add_common(down);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return gisd::kExitUsage;
    }

    for (auto* sub : {train, check, eval, down}) {
        if (!sub->parsed()) continue;
        opts.command = sub->get_name();
        if (sub->count("--seed") > 0) opts.seed = seed;
    }
    return gisd::run_command(opts, std::cout, std::cerr);
}
