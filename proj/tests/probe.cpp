// Temporary diagnostic: from-birth coverage of the learning explorer vs a
// random walker, across tuning variants.
#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "alp/trainer.hpp"

using namespace alp;
namespace fs = std::filesystem;

namespace {

rollout::ActionSource random_source(std::shared_ptr<Rng> rng) {
    rollout::ActionSource src;
    src.act = [rng](const std::vector<rollout::Env*>& envs, std::vector<int>& actions,
                    std::vector<float>&, std::vector<float>&) {
        for (size_t e = 0; e < envs.size(); ++e)
            actions[e] = static_cast<int>(rng->below(worldsim::kNumActions));
    };
    return src;
}

long long cells(const std::string& log, const worldsim::SceneSpec& spec, std::uint32_t id) {
    std::ostringstream pgm;
    return coverage::export_coverage(coverage::load_trajectory(log), spec, id, pgm).unique_cells;
}

config::RunConfig base_cfg() {
    config::RunConfig cfg;
    cfg.num_envs = 4;
    cfg.window_len = 32;
    cfg.episode_cap = 4096;
    cfg.image_size = 16;
    cfg.feature_dim = 32;
    cfg.hidden_dim = 32;
    cfg.action_embed_dim = 8;
    cfg.rnd_hidden = 64;
    cfg.rnd_out = 16;
    cfg.proj_hidden = 32;
    cfg.proj_dim = 16;
    cfg.idm_k = 4;
    cfg.idm_proj_hidden = 32;
    cfg.idm_proj_dim = 16;
    cfg.idm_pred_hidden = 64;
    cfg.idm_epochs = 2;
    cfg.scene_train_count = 1;
    cfg.scene_test_count = 3;
    cfg.label_events = 0;
    cfg.total_frames = 10240;
    cfg.reward_mode = "rnd";
    cfg.obj_pg = cfg.obj_idm = true;
    cfg.obj_simclr = cfg.obj_cpc = false;
    cfg.scene_min_extent = 24;
    cfg.scene_max_extent = 30;
    cfg.lr = 1e-3;
    return cfg;
}

}  // namespace

TEST(Probe, CoverageGrowth) {
    const fs::path dir = fs::temp_directory_path() / "probe_cov";
    fs::create_directories(dir);

    struct Variant {
        const char* name;
        std::function<void(config::RunConfig&)> tweak;
    };
    auto base = [](config::RunConfig& c) {
        c.momentum_rho = 0.9999;
        c.scene_min_objects = 20;
        c.scene_max_objects = 30;
    };
    const Variant variants[] = {
        {"base", [&](config::RunConfig& c) { base(c); }},
    };

    for (const auto& v : variants) {
        std::printf("---- %s ----\n", v.name);
        for (std::uint64_t seed = 201; seed <= 210; ++seed) {
            config::RunConfig cfg = base_cfg();
            cfg.seed = seed;
            v.tweak(cfg);

            const std::string policy_log = (dir / "p.alpt").string();
            std::ostringstream metrics;
            trainer::ExploreTrainer tr(cfg);
            {
                coverage::TrajectoryWriter traj(policy_log);
                trainer::TrainSinks sinks;
                sinks.trajectory = &traj;
                sinks.metrics = &metrics;
                tr.run(sinks);
                traj.close();
            }
            const auto& scene = tr.scenes()[0];
            if (false) {
                std::istringstream lines(metrics.str());
                std::string line;
                int n = 0;
                while (std::getline(lines, line)) {
                    if (n % 10 == 0 || n == 79) {
                        const auto j = nlohmann::json::parse(line);
                        std::printf(
                            "w=%3d ent=%.3f raw=%.4f rloss=%.5f clipf=%.3f kl=%.4f vl=%.4f\n", n,
                            j["entropy"].get<double>(), j["reward_raw_mean"].get<double>(),
                            j["reward_model_loss"].get<double>(),
                            j["clip_fraction"].get<double>(), j["approx_kl"].get<double>(),
                            j["value_loss"].get<double>());
                    }
                    ++n;
                }
            }

            const std::string random_log = (dir / "r.alpt").string();
            {
                std::vector<std::unique_ptr<rollout::WorldEnv>> owned;
                std::vector<rollout::Env*> envs;
                for (int e = 0; e < cfg.num_envs; ++e) {
                    // same env rng stream as the trained run, so both walkers
                    // start from identical spawn poses
                    owned.push_back(std::make_unique<rollout::WorldEnv>(
                        &scene.spec, &scene.map, scene.id, cfg.episode_cap, cfg.image_size,
                        Rng(derive_seed(cfg.seed,
                                        0xe21ULL * 1000003ULL + static_cast<std::uint64_t>(e)))));
                    envs.push_back(owned.back().get());
                }
                coverage::TrajectoryWriter traj(random_log);
                for (int e = 0; e < cfg.num_envs; ++e)
                    traj.append_spawn(static_cast<std::uint32_t>(e), envs[e]->step_index(),
                                      envs[e]->pose(),
                                      static_cast<std::uint32_t>(envs[e]->scene_id()));
                auto rng = std::make_shared<Rng>(derive_seed(cfg.seed, 0x3a2dULL));
                std::int64_t frames = 0;
                while (frames < cfg.total_frames) {
                    auto batch =
                        rollout::collect_window(envs, cfg.window_len, random_source(rng), 1);
                    std::vector<rollout::AgentPose> end_poses;
                    for (auto* e : envs) end_poses.push_back(e->pose());
                    traj.append_batch(batch, end_poses);
                    frames += batch.size();
                }
                traj.close();
            }

            const auto id = static_cast<std::uint32_t>(scene.id);
            const long long p = cells(policy_log, scene.spec, id);
            const long long r = cells(random_log, scene.spec, id);
            std::printf("seed %llu: policy=%lld random=%lld ratio=%.2f  [per-env policy:",
                        static_cast<unsigned long long>(seed), p, r,
                        static_cast<double>(p) / static_cast<double>(r));
            const auto full = coverage::load_trajectory(policy_log);
            for (std::uint32_t e = 0; e < 4; ++e) {
                std::vector<coverage::TrajStep> one;
                for (const auto& s : full)
                    if (s.env == e) one.push_back(s);
                std::ostringstream pgm;
                std::printf(" %lld", static_cast<long long>(
                                         coverage::export_coverage(one, scene.spec, id, pgm)
                                             .unique_cells));
            }
            std::printf("]\n");
        }
    }
}
