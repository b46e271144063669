#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "alp/cli.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"alp"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return alp::cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path tmp_dir(const std::string& stem) {
    static int counter = 0;
    const fs::path p = fs::temp_directory_path() /
                       (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

// One-window desk run, small enough for the whole chain to finish in seconds.
std::string write_tiny_cfg(const fs::path& dir, const std::string& extra = "") {
    const fs::path p = dir / "tiny.cfg";
    std::ofstream os(p);
    os << "seed = 5\n"
          "total_frames = 36\n"
          "num_envs = 2\n"
          "window_len = 18\n"
          "episode_cap = 12\n"
          "image_size = 16\n"
          "feature_dim = 32\n"
          "hidden_dim = 32\n"
          "action_embed_dim = 8\n"
          "rnd_hidden = 32\n"
          "rnd_out = 8\n"
          "proj_hidden = 32\n"
          "proj_dim = 16\n"
          "contrastive_pairs = 8\n"
          "idm_k = 4\n"
          "idm_proj_hidden = 32\n"
          "idm_proj_dim = 16\n"
          "idm_pred_hidden = 32\n"
          "idm_epochs = 2\n"
          "ppo_epochs = 2\n"
          "scene_train_count = 2\n"
          "scene_test_count = 1\n"
          "label_events = 1\n"
          "labels_per_env_per_event = 5\n"
          "ft_epochs = 2\n"
          "ft_batch = 8\n"
          "eval_frames_train = 2\n"
          "eval_frames_test = 2\n"
       << extra;
    return p.string();
}

}  // namespace

TEST(Cli, FullChainRunsAndLeavesTheExpectedArtifacts) {
    const fs::path dir = tmp_dir("cli_chain");
    const std::string cfg = write_tiny_cfg(dir);
    const std::string run_dir = (dir / "run").string();

    ASSERT_EQ(run({"train-explore", "--config", cfg, "--out", run_dir}), 0);
    for (const char* f : {"metrics.jsonl", "dataset.alpd", "trajectory.alpt", "checkpoint.alpw",
                          "config.cfg"})
        EXPECT_TRUE(fs::exists(fs::path(run_dir) / f)) << f;

    const std::string ft_dir = (dir / "ft").string();
    ASSERT_EQ(run({"finetune", "--config", cfg, "--checkpoint", run_dir + "/checkpoint.alpw",
                   "--data", run_dir + "/dataset.alpd", "--out", ft_dir}),
              0);
    EXPECT_TRUE(fs::exists(fs::path(ft_dir) / "perception.alpw"));
    EXPECT_TRUE(fs::exists(fs::path(ft_dir) / "eval.jsonl"));
    std::ifstream ev(fs::path(ft_dir) / "eval.jsonl");
    std::string line;
    int eval_lines = 0;
    while (std::getline(ev, line))
        if (!line.empty()) ++eval_lines;
    EXPECT_EQ(eval_lines, 2);  // one per split

    ASSERT_EQ(run({"evaluate", "--config", cfg, "--checkpoint", ft_dir + "/perception.alpw",
                   "--split", "test"}),
              0);

    const std::string cov_dir = (dir / "cov").string();
    ASSERT_EQ(run({"export-coverage", "--config", cfg, "--log", run_dir + "/trajectory.alpt",
                   "--out", cov_dir}),
              0);
    EXPECT_TRUE(fs::exists(fs::path(cov_dir) / "coverage_1000.pgm"));
    EXPECT_TRUE(fs::exists(fs::path(cov_dir) / "coverage_1001.pgm"));

    const std::string scene_dir = (dir / "scenes").string();
    ASSERT_EQ(run({"gen-scenes", "--config", cfg, "--split", "train", "--out", scene_dir}), 0);
    EXPECT_TRUE(fs::exists(fs::path(scene_dir) / "scene_1000.txt"));
    EXPECT_TRUE(fs::exists(fs::path(scene_dir) / "scene_1001.pgm"));
    EXPECT_FALSE(fs::exists(fs::path(scene_dir) / "scene_2000.txt"));
}

TEST(Cli, SeedOverrideLandsInTheRunConfigCopy) {
    const fs::path dir = tmp_dir("cli_seed");
    const std::string cfg = write_tiny_cfg(dir);
    const std::string out = (dir / "run").string();
    ASSERT_EQ(run({"train-explore", "--config", cfg, "--seed", "9", "--out", out}), 0);

    std::ifstream is(fs::path(out) / "config.cfg");
    std::string hash_line, seed_line;
    std::getline(is, hash_line);
    std::getline(is, seed_line);
    EXPECT_EQ(seed_line, "seed=9");

    alp::config::RunConfig c = alp::config::load_config(cfg);
    c.seed = 9;
    EXPECT_EQ(hash_line, "# config_hash=" + alp::config::config_hash(c));
}

TEST(Cli, BadInputsReportTwoAndNumericAbortsReportThree) {
    const fs::path dir = tmp_dir("cli_err");
    const std::string out = (dir / "out").string();

    EXPECT_EQ(run({"train-explore", "--config", (dir / "missing.cfg").string(), "--out", out}), 2);

    const fs::path bad = dir / "bad.cfg";
    std::ofstream(bad) << "gamma = -1\n";
    EXPECT_EQ(run({"train-explore", "--config", bad.string(), "--out", out}), 2);

    const std::string cfg = write_tiny_cfg(dir);
    EXPECT_EQ(run({"finetune", "--config", cfg, "--checkpoint", "nope.alpw", "--data",
                   "nope.alpd", "--out", out}),
              2);
    EXPECT_EQ(run({"evaluate", "--config", cfg, "--checkpoint", "nope.alpw", "--split",
                   "weird"}),
              2);

    const std::string blow = write_tiny_cfg(tmp_dir("cli_blow"), "lr = 1e18\n");
    EXPECT_EQ(run({"train-explore", "--config", blow, "--out", out}), 3);

    EXPECT_NE(run({"no-such-command"}), 0);
    EXPECT_NE(run({"finetune", "--config", cfg}), 0);  // missing required flags
}
