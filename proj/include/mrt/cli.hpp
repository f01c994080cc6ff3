#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrt/analysis.hpp"
#include "mrt/checkpoint.hpp"
#include "mrt/config.hpp"
#include "mrt/manifest.hpp"
#include "mrt/train.hpp"

namespace mrt::cli {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const config_error*>(&e)) return 2;
    if (dynamic_cast<const contract_error*>(&e)) return 2;
    if (dynamic_cast<const data_error*>(&e)) return 3;
    if (dynamic_cast<const numeric_error*>(&e)) return 4;
    return 1;
}

template <class Fn> int run_guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        const auto* as_err = dynamic_cast<const std::exception*>(&e);
        return exit_code_for(*as_err);
    }
}

namespace fs = std::filesystem;

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write " + path);
    os << text;
}

inline void write_report_json(const std::string& path, const TrainingReport& r,
                              const std::string& config_text) {
    nlohmann::ordered_json j;
    j["tool_version"] = kToolVersion;
    j["config"] = config_text;
    j["total_steps"] = r.total_steps;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const EpochRow& row : r.rows) {
        nlohmann::ordered_json jr;
        jr["epoch"] = row.epoch;
        jr["evaluated"] = row.evaluated;
        jr["train_acc"] = row.train_acc; // NaN serializes as null on skipped evals
        jr["test_acc"] = row.test_acc;
        jr["gen_error"] = row.gen_error;
        jr["loss_total"] = row.loss_total;
        jr["loss_supervised"] = row.loss_supervised;
        jr["loss_unsupervised"] = row.loss_unsupervised;
        rows.push_back(jr);
    }
    j["epochs"] = rows;
    j["final"] = {{"train_acc", r.final_train_acc},
                  {"test_acc", r.final_test_acc},
                  {"gen_error", r.final_gen_error}};
    std::ofstream os(path, std::ios::binary);
    if (!os) throw data_error("cannot write " + path);
    os << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;   // key=value file; optional with from_manifest
    std::string from_manifest; // rerun a previous invocation's resolved config
    std::vector<std::string> sets;
    std::string out_dir = "run";
};

inline int cmd_train(const TrainArgs& args, std::ostream& log) {
    RunConfig rc;
    if (!args.from_manifest.empty()) {
        rc = parse_config_text(read_manifest(args.from_manifest).config_text);
    } else if (!args.config_path.empty()) {
        rc = parse_config_file(args.config_path);
    }
    for (const std::string& kv : args.sets) config_set_kv(rc, kv);
    resolve_config(rc);
    const std::string config_text = serialize_config(rc);

    Dataset train_ds = load_dataset(rc, Split::train);
    Dataset test_ds = load_dataset(rc, Split::test);
    TrainConfig tc = to_train_config(rc);

    fs::create_directories(args.out_dir);
    TrainOutcome outcome = train(tc, train_ds, test_ds);

    const std::string report_json = args.out_dir + "/report.json";
    const std::string report_csv = args.out_dir + "/report.csv";
    const std::string timeline_csv = args.out_dir + "/timeline.csv";
    const std::string checkpoint = args.out_dir + "/checkpoint.bin";

    write_report_json(report_json, outcome.report, config_text);
    {
        std::ofstream os(report_csv, std::ios::binary);
        write_report_csv(os, outcome.report);
    }
    {
        std::ofstream os(timeline_csv, std::ios::binary);
        if (outcome.ledger)
            outcome.ledger->write_timeline_csv(os);
        else
            os << "step,live_bytes,phase\n";
    }
    save_checkpoint(checkpoint, outcome.net, config_text);

    RunManifest m;
    m.command = "train";
    m.seed = rc.seed;
    m.config_text = config_text;
    m.artifacts = {{"report_json", "report.json"},
                   {"report_csv", "report.csv"},
                   {"timeline_csv", "timeline.csv"},
                   {"checkpoint", "checkpoint.bin"}};
    m.wall_seconds = outcome.wall_seconds;
    write_manifest(args.out_dir + "/manifest.json", m);

    log << "train: " << outcome.report.total_steps << " steps, final train/test acc " << std::fixed
        << std::setprecision(2) << outcome.report.final_train_acc << "/"
        << outcome.report.final_test_acc << "%, gen error " << outcome.report.final_gen_error
        << " pp, wall " << std::setprecision(1) << outcome.wall_seconds << "s\n";
    if (outcome.ledger)
        log << "train: peak memory " << outcome.ledger->peak_bytes() << " bytes ("
            << phase_name(outcome.ledger->peak_phase()) << ")\n";
    log << "train: artifacts in " << args.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

struct ProfileArgs {
    std::vector<std::string> config_paths;
    std::vector<std::string> sets;
    std::string out_dir = "profile";
    bool instrument_step = true; // one training step per config, ledger attached
};

struct ModelMemoryRow {
    std::string name;
    ModelMemory mem;
};

inline int cmd_profile(const ProfileArgs& args, std::ostream& log) {
    if (args.config_paths.empty()) throw config_error("profile: no --config given");
    fs::create_directories(args.out_dir);

    std::vector<RunConfig> rcs;
    std::vector<ModelMemoryRow> rows;
    for (const std::string& path : args.config_paths) {
        RunConfig rc = parse_config_file(path);
        for (const std::string& kv : args.sets) config_set_kv(rc, kv);
        resolve_config(rc);
        rcs.push_back(rc);
        rows.push_back(
            {fs::path(path).stem().string(), model_memory(to_network_config(rc), rc.mem_bytes_per_element)});
    }

    log << "Model-related memory (bytes)\n";
    log << std::left << std::setw(28) << "config" << std::right << std::setw(16) << "parameters"
        << std::setw(12) << "buffers" << std::setw(16) << "total" << '\n';
    for (const ModelMemoryRow& r : rows)
        log << std::left << std::setw(28) << r.name << std::right << std::setw(16)
            << r.mem.parameters_bytes << std::setw(12) << r.mem.buffers_bytes << std::setw(16)
            << r.mem.total << '\n';
    if (rows.size() >= 2) {
        const double ratio = static_cast<double>(rows[0].mem.total) / static_cast<double>(rows[1].mem.total);
        log << "total ratio " << rows[0].name << " / " << rows[1].name << " = " << std::fixed
            << std::setprecision(2) << ratio << '\n';
    }

    RunManifest m;
    m.command = "profile";
    m.seed = rcs[0].seed;
    m.config_text = serialize_config(rcs[0]);

    if (args.instrument_step) {
        for (size_t i = 0; i < rcs.size(); ++i) {
            const RunConfig& rc = rcs[i];
            const NetworkConfig nc = to_network_config(rc);
            Network net = Network::build(nc, rc.seed);
            MemoryLedger ledger(rc.mem_bytes_per_element);
            ledger.record_elems(Category::param, Phase::idle, net.count_parameters().second);

            // seeded stand-in batch; profiling needs shapes, not real data
            Rng rng = Rng::substream(rc.seed, "profile");
            Shape xs = nc.input_shape;
            xs.insert(xs.begin(), rc.train_batch_size);
            Tensor x = Tensor::zeros(xs);
            for (int64_t j = 0; j < x.numel(); ++j) x.mutable_data()[j] = rng.uniform();
            std::vector<int> y;
            for (int b = 0; b < rc.train_batch_size; ++b)
                y.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(nc.num_classes))));

            {
                GradGraph g;
                g.attach_ledger(&ledger);
                ledger.record_elems(Category::data, Phase::idle, x.numel());
                ForwardResult fwd = net.forward(g, x);
                LossBreakdown bd = losses::total_objective(g, fwd, y, to_loss_weights(rc, nc));
                g.backward(bd.total_tensor);
                std::vector<Tensor> grads;
                for (const Tensor& leaf : fwd.param_leaves)
                    grads.push_back(leaf.tracked() && g.has_grad(leaf) ? g.grad(leaf) : Tensor());
                sgd_step(net, grads, rc.train_lr);
                g.clear();
                ledger.record_elems(Category::data, Phase::idle, -x.numel());
            }

            const std::string timeline = args.out_dir + "/timeline_" + rows[i].name + ".csv";
            std::ofstream os(timeline, std::ios::binary);
            ledger.write_timeline_csv(os);
            m.artifacts["timeline_" + rows[i].name] = fs::path(timeline).filename().string();
            log << "step profile " << rows[i].name << ": peak " << ledger.peak_bytes() << " bytes in "
                << phase_name(ledger.peak_phase()) << ", idle live " << ledger.live_bytes()
                << " bytes\n";
        }
    }

    write_manifest(args.out_dir + "/manifest.json", m);
    return 0;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

struct ProbeArgs {
    std::string checkpoint;
    std::string class_a = "dog";
    std::string class_b = "cat";
    std::string split = "test";
    int64_t sample_cap = 200;
    std::vector<std::string> sets; // e.g. data.dir override
    std::string out_dir = "probe";
};

inline int class_id_for(const std::string& name, const Dataset& ds, const RunConfig& rc) {
    static const std::vector<std::string> cifar10_names = {"airplane", "automobile", "bird",  "cat",
                                                           "deer",     "dog",        "frog",  "horse",
                                                           "ship",     "truck"};
    if (rc.data_kind == "cifar10")
        for (size_t i = 0; i < cifar10_names.size(); ++i)
            if (name == cifar10_names[i]) return static_cast<int>(i);
    try {
        const int id = static_cast<int>(cfg_detail::to_int("class", name));
        if (id < 0 || id >= ds.num_classes)
            throw contract_error("probe: class " + name + " out of range for " +
                                 std::to_string(ds.num_classes) + " classes");
        return id;
    } catch (const config_error&) {
        throw contract_error("probe: unknown class name '" + name + "'");
    }
}

inline int cmd_probe(const ProbeArgs& args, std::ostream& log) {
    if (args.checkpoint.empty()) throw config_error("probe: no --checkpoint given");
    if (args.class_a == args.class_b)
        throw contract_error("probe: the two classes must differ, both are '" + args.class_a + "'");
    LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint);
    RunConfig rc = ckpt.run_config;
    for (const std::string& kv : args.sets) config_set_kv(rc, kv);

    const Split split = args.split == "train" ? Split::train : Split::test;
    Dataset ds = load_dataset(rc, split);
    const int a = class_id_for(args.class_a, ds, rc);
    const int b = class_id_for(args.class_b, ds, rc);
    if (a == b) throw contract_error("probe: the two classes must differ");

    ProbeResult probe = layer_probe(ckpt.net, ds, a, b, args.sample_cap, rc.seed);

    fs::create_directories(args.out_dir);
    {
        std::ofstream os(args.out_dir + "/probe.csv", std::ios::binary);
        write_probe_csv(os, probe);
    }
    {
        std::ofstream os(args.out_dir + "/embeddings.csv", std::ios::binary);
        write_embeddings_csv(os, probe);
    }

    RunManifest m;
    m.command = "probe";
    m.seed = rc.seed;
    m.config_text = serialize_config(rc);
    m.artifacts = {{"probe_csv", "probe.csv"}, {"embeddings_csv", "embeddings.csv"}};
    write_manifest(args.out_dir + "/manifest.json", m);

    log << "probe: LDA separability, classes " << args.class_a << " vs " << args.class_b << " ("
        << split_name(split) << " split)\n";
    for (const ProbePoint& p : probe.curve)
        log << "  " << std::left << std::setw(10) << p.layer << std::fixed << std::setprecision(4)
            << p.accuracy << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// data verify | data synth
// ---------------------------------------------------------------------------

struct DataArgs {
    std::string action; // verify | synth
    std::string dir;
    std::string dataset = "cifar10"; // verify target
    std::string out_path;            // synth output file
    std::string split = "train";
    std::vector<std::string> sets;
};

inline int cmd_data(const DataArgs& args, std::ostream& log) {
    if (args.action == "verify") {
        if (args.dir.empty()) throw config_error("data verify: no --dir given");
        struct Expected {
            std::string file;
            int64_t bytes;
        };
        std::vector<Expected> expected;
        if (args.dataset == "cifar10") {
            for (int i = 1; i <= 5; ++i)
                expected.push_back({"data_batch_" + std::to_string(i) + ".bin", 10000 * 3073});
            expected.push_back({"test_batch.bin", 10000 * 3073});
        } else if (args.dataset == "cifar100") {
            expected.push_back({"train.bin", 50000 * 3074});
            expected.push_back({"test.bin", 10000 * 3074});
        } else {
            throw config_error("data verify: unknown dataset '" + args.dataset + "'");
        }
        for (const Expected& e : expected) {
            const std::string path = args.dir + "/" + e.file;
            std::error_code ec;
            const auto size = fs::file_size(path, ec);
            if (ec) throw data_error("data verify: missing " + path);
            if (static_cast<int64_t>(size) != e.bytes)
                throw data_error("data verify: " + path + " has " + std::to_string(size) +
                                 " bytes, expected " + std::to_string(e.bytes));
            // full parse validates record structure and label ranges
            if (args.dataset == "cifar10")
                parse_cifar10_files({path}, Split::train);
            else
                parse_cifar100_files({path}, Split::train);
            log << "ok " << path << " (" << size << " bytes)\n";
        }
        log << "data verify: all files ok\n";
        return 0;
    }

    if (args.action == "synth") {
        if (args.out_path.empty()) throw config_error("data synth: no --out given");
        RunConfig rc;
        rc.synth_ambient_dim = 3072; // CIFAR record layout
        rc.synth_image_shape = true;
        rc.synth_classes = 10;
        for (const std::string& kv : args.sets) config_set_kv(rc, kv);
        if (!rc.synth_image_shape || rc.synth_ambient_dim != 3072)
            throw config_error("data synth: CIFAR record export needs image_shape=1, ambient_dim=3072");
        const Split split = args.split == "test" ? Split::test : Split::train;
        Dataset ds = synthetic_manifold(to_synth_spec(rc, split));
        if (const auto dir = fs::path(args.out_path).parent_path(); !dir.empty())
            fs::create_directories(dir);
        write_cifar10_file(args.out_path, ds);
        log << "data synth: wrote " << ds.size() << " records (" << ds.num_classes << " classes) to "
            << args.out_path << "\n";
        return 0;
    }

    throw config_error("data: unknown action '" + args.action + "' (want verify or synth)");
}

} // namespace mrt::cli
