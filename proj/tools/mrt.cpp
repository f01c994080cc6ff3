// mrt command-line front end: train / profile / probe / data.

#include <CLI11.hpp>

#include <iostream>

#include "mrt/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"manifold-regularized training framework"};
    app.require_subcommand(1);

    mrt::cli::TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a network and write report artifacts");
    train->add_option("--config", train_args.config_path, "key=value config file");
    train->add_option("--from-manifest", train_args.from_manifest,
                      "rerun the resolved config of a previous run's manifest.json");
    train->add_option("--set", train_args.sets, "override a config key (key=value, repeatable)");
    train->add_option("--out", train_args.out_dir, "output directory")->capture_default_str();

    mrt::cli::ProfileArgs profile_args;
    CLI::App* profile = app.add_subcommand("profile", "model memory summary + one instrumented step");
    profile->add_option("--config", profile_args.config_paths, "config file(s); two for a ratio line")
        ->required();
    profile->add_option("--set", profile_args.sets, "override a config key in every config");
    profile->add_option("--out", profile_args.out_dir, "output directory")->capture_default_str();
    profile->add_flag("!--no-step", profile_args.instrument_step, "skip the instrumented step");

    mrt::cli::ProbeArgs probe_args;
    CLI::App* probe = app.add_subcommand("probe", "layer-wise LDA separability of a checkpoint");
    probe->add_option("--checkpoint", probe_args.checkpoint, "checkpoint.bin from a train run")
        ->required();
    probe->add_option("--class-a", probe_args.class_a, "first class (name or index)")
        ->capture_default_str();
    probe->add_option("--class-b", probe_args.class_b, "second class (name or index)")
        ->capture_default_str();
    probe->add_option("--split", probe_args.split, "train or test")->capture_default_str();
    probe->add_option("--cap", probe_args.sample_cap, "max samples per class")->capture_default_str();
    probe->add_option("--set", probe_args.sets, "override a config key (e.g. data.dir=...)");
    probe->add_option("--out", probe_args.out_dir, "output directory")->capture_default_str();

    mrt::cli::DataArgs data_args;
    CLI::App* data = app.add_subcommand("data", "dataset utilities: verify | synth");
    data->add_option("action", data_args.action, "verify or synth")->required();
    data->add_option("--dir", data_args.dir, "dataset directory (verify)");
    data->add_option("--dataset", data_args.dataset, "cifar10 or cifar100 (verify)")
        ->capture_default_str();
    data->add_option("--out", data_args.out_path, "output .bin file (synth)");
    data->add_option("--split", data_args.split, "train or test sample stream (synth)")
        ->capture_default_str();
    data->add_option("--set", data_args.sets, "override data.synth.* keys (synth)");

    CLI11_PARSE(app, argc, argv);

    return mrt::cli::run_guarded(std::cerr, [&]() -> int {
        if (train->parsed()) return mrt::cli::cmd_train(train_args, std::cout);
        if (profile->parsed()) return mrt::cli::cmd_profile(profile_args, std::cout);
        if (probe->parsed()) return mrt::cli::cmd_probe(probe_args, std::cout);
        if (data->parsed()) return mrt::cli::cmd_data(data_args, std::cout);
        return 1;
    });
}
