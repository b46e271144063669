// Command-line front end: exploration training, downstream finetuning and
// evaluation, coverage export, and scene inspection. Exit codes: 0 success,
// 2 bad config or missing/unreadable file, 3 numeric abort during training.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "alp/checkpoint.hpp"
#include "alp/pgm.hpp"
#include "alp/trainer.hpp"

namespace alp::cli {

namespace fs = std::filesystem;
using config::RunConfig;

struct CommonOpts {
    std::string config_path;
    std::int64_t seed = -1;  // < 0 keeps the config's seed
    bool deterministic = false;
    std::string out = ".";
};

inline RunConfig effective_config(const CommonOpts& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : config::load_config(o.config_path);
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    config::validate(c);
    return c;
}

inline std::string out_file(const CommonOpts& o, const std::string& name) {
    fs::create_directories(o.out);
    return (fs::path(o.out) / name).string();
}

// The canonical config (with the hash as a comment) lands next to every run's
// artifacts so they stay reproducible from the directory alone.
inline void write_run_config(const CommonOpts& o, const RunConfig& cfg) {
    std::ofstream os(out_file(o, "config.cfg"));
    os << "# config_hash=" << config::config_hash(cfg) << "\n" << config::serialize_config(cfg);
    if (!os) throw IoError("cannot write config copy in " + o.out);
}

inline int cmd_train_explore(const CommonOpts& o) {
    const RunConfig cfg = effective_config(o);
    write_run_config(o, cfg);
    trainer::ExploreTrainer tr(cfg, o.deterministic);

    std::ofstream metrics(out_file(o, "metrics.jsonl"));
    if (!metrics) throw IoError("cannot write metrics in " + o.out);
    downstream::DatasetWriter dataset(out_file(o, "dataset.alpd"));
    coverage::TrajectoryWriter trajectory(out_file(o, "trajectory.alpt"));

    trainer::TrainSinks sinks;
    sinks.metrics = &metrics;
    sinks.dataset = &dataset;
    sinks.trajectory = &trajectory;
    sinks.save_checkpoint = [&](std::int64_t frames, const ndmath::ParamStore& store) {
        ndmath::save_checkpoint(out_file(o, "checkpoint_" + std::to_string(frames) + ".alpw"),
                                store);
    };

    const trainer::RunSummary sum = tr.run(sinks);
    dataset.close();
    trajectory.close();
    metrics.flush();
    if (!metrics) throw IoError("metrics write failed in " + o.out);
    ndmath::save_checkpoint(out_file(o, "checkpoint.alpw"), tr.model().store);

    std::cout << "train-explore: windows=" << sum.windows << " frames=" << sum.frames
              << " episodes=" << sum.episodes << " labels=" << sum.labels
              << " checkpoints=" << sum.checkpoints << " out=" << o.out << "\n";
    return 0;
}

inline nlohmann::json report_json(const downstream::EvalReport& r, const std::string& hash,
                                  const std::string& task, const std::string& init) {
    nlohmann::json j;
    j["split"] = r.split;
    j["frames"] = r.frames;
    j["miou"] = r.miou;
    j["iou"] = r.iou;
    j["pixel_accuracy"] = r.pixel_accuracy;
    j["presence_accuracy"] = r.presence_accuracy;
    j["presence_accuracy_mean"] = r.presence_accuracy_mean;
    j["depth_rmse"] = r.depth_rmse;
    j["config_hash"] = hash;
    j["task"] = task;
    j["init"] = init;
    return j;
}

inline int cmd_finetune(const CommonOpts& o, const std::string& checkpoint,
                        const std::string& data_path) {
    const RunConfig cfg = effective_config(o);
    const std::string hash = config::config_hash(cfg);
    const auto samples = downstream::load_dataset(data_path);

    auto m = downstream::PerceptionModel::create(config::to_net(cfg), cfg.seed);
    if (checkpoint != "random") m.load_backbone(checkpoint);

    downstream::FinetuneConfig fc;
    fc.task = downstream::parse_task(cfg.ft_task);
    fc.epochs = cfg.ft_epochs;
    fc.batch = cfg.ft_batch;
    fc.lr = cfg.ft_lr;
    Rng rng(derive_seed(cfg.seed, 0xf17eULL));
    const auto stats = downstream::finetune(m, samples, fc, rng);
    ndmath::save_checkpoint(out_file(o, "perception.alpw"), m.store);

    const worldsim::GenProfile profile = config::to_gen_profile(cfg);
    std::ofstream ev(out_file(o, "eval.jsonl"));
    for (const bool is_train : {true, false}) {
        const downstream::SplitSpec split =
            is_train ? config::train_split(cfg) : config::test_split(cfg);
        const auto scenes = downstream::make_scenes(split, profile);
        const int frames = is_train ? cfg.eval_frames_train : cfg.eval_frames_test;
        const auto report = downstream::evaluate(m, scenes, split, frames, cfg.seed);
        nlohmann::json j = report_json(report, hash, cfg.ft_task, checkpoint);
        j["final_loss"] = stats.epoch_loss.back();
        ev << j.dump() << '\n';
        std::cout << "eval split=" << report.split << " miou=" << report.miou
                  << " pixel_accuracy=" << report.pixel_accuracy
                  << " presence_accuracy=" << report.presence_accuracy_mean
                  << " depth_rmse=" << report.depth_rmse << "\n";
    }
    if (!ev) throw IoError("cannot write eval report in " + o.out);

    std::cout << "finetune: task=" << cfg.ft_task << " samples=" << samples.size()
              << " epochs=" << cfg.ft_epochs << " first_loss=" << stats.epoch_loss.front()
              << " final_loss=" << stats.epoch_loss.back() << " out=" << o.out << "\n";
    return 0;
}

inline int cmd_evaluate(const CommonOpts& o, const std::string& checkpoint,
                        const std::string& split_name) {
    const RunConfig cfg = effective_config(o);
    if (split_name != "train" && split_name != "test")
        throw config::ConfigError("key 'split': must be train or test");
    auto m = downstream::PerceptionModel::create(config::to_net(cfg), cfg.seed);
    ndmath::load_checkpoint_into(checkpoint, m.store);

    const downstream::SplitSpec split =
        split_name == "train" ? config::train_split(cfg) : config::test_split(cfg);
    const auto scenes = downstream::make_scenes(split, config::to_gen_profile(cfg));
    const int frames = split_name == "train" ? cfg.eval_frames_train : cfg.eval_frames_test;
    const auto report = downstream::evaluate(m, scenes, split, frames, cfg.seed);
    std::cout << report_json(report, config::config_hash(cfg), cfg.ft_task, checkpoint).dump()
              << "\n";
    return 0;
}

inline int cmd_export_coverage(const CommonOpts& o, const std::string& log_path,
                               std::vector<std::uint32_t> scene_ids) {
    const RunConfig cfg = effective_config(o);
    const auto log = coverage::load_trajectory(log_path);
    if (scene_ids.empty()) {
        std::set<std::uint32_t> ids;
        for (const auto& r : log) ids.insert(r.scene_id);
        scene_ids.assign(ids.begin(), ids.end());
    }
    const worldsim::GenProfile profile = config::to_gen_profile(cfg);
    const std::string comment = "config_hash=" + config::config_hash(cfg);
    for (const std::uint32_t id : scene_ids) {
        const worldsim::SceneSpec spec = worldsim::generate_scene(id, profile);
        std::ofstream pgm(out_file(o, "coverage_" + std::to_string(id) + ".pgm"),
                          std::ios::binary);
        if (!pgm) throw IoError("cannot write coverage image in " + o.out);
        const coverage::CoverageSummary s = coverage::export_coverage(log, spec, id, pgm, comment);
        char line[96];
        std::snprintf(line, sizeof(line), "scene=%u unique_cells=%lld path_length=%.3f",
                      s.scene_id, static_cast<long long>(s.unique_cells), s.path_length_m);
        std::cout << line << "\n";
    }
    return 0;
}

inline int cmd_gen_scenes(const CommonOpts& o, const std::string& split_name) {
    const RunConfig cfg = effective_config(o);
    const worldsim::GenProfile profile = config::to_gen_profile(cfg);
    std::vector<downstream::SplitSpec> splits;
    if (split_name == "train" || split_name == "both") splits.push_back(config::train_split(cfg));
    if (split_name == "test" || split_name == "both") splits.push_back(config::test_split(cfg));
    if (splits.empty()) throw config::ConfigError("key 'split': must be train, test, or both");

    int written = 0;
    for (const auto& split : splits)
        for (const auto& b : downstream::make_scenes(split, profile)) {
            std::ofstream txt(out_file(o, "scene_" + std::to_string(b.id) + ".txt"));
            txt << worldsim::dump_scene_text(b.spec);
            if (!txt) throw IoError("cannot write scene dump in " + o.out);
            int nx = 0, ny = 0;
            const auto gray = worldsim::occupancy_gray(b.spec, nx, ny);
            write_pgm(out_file(o, "scene_" + std::to_string(b.id) + ".pgm"), nx, ny, gray);
            ++written;
        }
    std::cout << "gen-scenes: wrote " << written << " scenes to " << o.out << "\n";
    return 0;
}

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"procedural-world exploration training and downstream perception"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string checkpoint, data_path, eval_split = "test", gen_split = "both", log_path;
    std::vector<std::uint32_t> scene_ids;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "key=value config file");
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_flag("--deterministic", o.deterministic,
                      "bit-reproducible artifacts (zeroed wall times)");
        sub->add_option("--out", o.out, "output directory");
    };

    CLI::App* te = app.add_subcommand("train-explore",
                                      "run exploration training and write its artifacts");
    add_common(te);
    CLI::App* ft = app.add_subcommand("finetune",
                                      "train perception heads on a labeled dataset, then "
                                      "evaluate on both scene splits");
    add_common(ft);
    ft->add_option("--checkpoint", checkpoint, "backbone checkpoint, or 'random' to start fresh")
        ->required();
    ft->add_option("--data", data_path, "labeled dataset file")->required();
    CLI::App* ev = app.add_subcommand("evaluate", "score a perception checkpoint on one split");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint, "perception checkpoint")->required();
    ev->add_option("--split", eval_split, "train|test (default test)");
    CLI::App* ec = app.add_subcommand("export-coverage",
                                      "render visitation maps from a trajectory log");
    add_common(ec);
    ec->add_option("--log", log_path, "trajectory log file")->required();
    ec->add_option("--scene", scene_ids, "scene ids (default: every id in the log)");
    CLI::App* gs = app.add_subcommand("gen-scenes", "dump generated scenes as text + occupancy");
    add_common(gs);
    gs->add_option("--split", gen_split, "train|test|both (default both)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (te->parsed()) return cmd_train_explore(o);
        if (ft->parsed()) return cmd_finetune(o, checkpoint, data_path);
        if (ev->parsed()) return cmd_evaluate(o, checkpoint, eval_split);
        if (ec->parsed()) return cmd_export_coverage(o, log_path, scene_ids);
        if (gs->parsed()) return cmd_gen_scenes(o, gen_split);
    } catch (const config::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace alp::cli
