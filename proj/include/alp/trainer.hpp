// Stage-1 training loop: drives parallel world environments with the policy,
// relabels each window with an intrinsic reward, applies the enabled
// representation objectives, and streams metrics and artifacts to sinks.
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>

#include <json.hpp>

#include "alp/actionrep.hpp"
#include "alp/config.hpp"
#include "alp/coverage.hpp"
#include "alp/downstream.hpp"
#include "alp/intrinsic.hpp"

namespace alp::trainer {

using config::RunConfig;
using ndmath::Adam;
using ndmath::ParamStore;
using policy::ModelBundle;
using rollout::RolloutBatch;

// Where run artifacts go. Null members are skipped, so callers observe only
// the streams they care about.
struct TrainSinks {
    std::ostream* metrics = nullptr;                   // one JSON object per line
    downstream::DatasetWriter* dataset = nullptr;      // labeled samples
    coverage::TrajectoryWriter* trajectory = nullptr;  // pose log
    std::function<void(std::int64_t frames, const ParamStore&)> save_checkpoint;
};

// Intrinsic reward attached to the loop: relabel() scores a collected window,
// update() then trains the reward model on it and reports its loss.
class RewardSource {
public:
    virtual ~RewardSource() = default;
    virtual std::vector<float> relabel(const RolloutBatch& batch) = 0;
    virtual double update(const RolloutBatch& batch, double lr_scale) = 0;
    virtual const char* name() const = 0;
};

// Prediction-error novelty: reward is the predictor's distance to a frozen
// random embedding, trained down on every window it has seen.
class RndSource : public RewardSource {
public:
    RndSource(ModelBundle& model, const intrinsic::MomentumEncoder& enc,
              const intrinsic::RndPair& pair, double lr)
        : model_(model), enc_(enc), pair_(pair), adam_(lr) {}

    std::vector<float> relabel(const RolloutBatch& batch) override {
        return intrinsic::rnd_reward(enc_, pair_, rollout::pack_frames(batch));
    }
    double update(const RolloutBatch& batch, double lr_scale) override {
        return intrinsic::rnd_update(enc_, pair_, model_.store, rollout::pack_frames(batch),
                                     adam_, lr_scale);
    }
    const char* name() const override { return "rnd"; }

private:
    ModelBundle& model_;
    const intrinsic::MomentumEncoder& enc_;
    const intrinsic::RndPair& pair_;
    Adam adam_;
};

// View-dissimilarity reward. The projection it scores with is trained by the
// contrastive objectives, so there is no separate reward-model step here.
class CrlSource : public RewardSource {
public:
    CrlSource(const intrinsic::MomentumEncoder& enc, const intrinsic::CrlHeads& heads,
              std::uint64_t seed)
        : enc_(enc), heads_(heads), seed_(seed) {}

    std::vector<float> relabel(const RolloutBatch& batch) override {
        const std::uint64_t aug = derive_seed(seed_, 0xa09ULL * 1000003ULL +
                                                         static_cast<std::uint64_t>(window_++));
        return intrinsic::crl_reward(enc_, heads_, batch, aug);
    }
    double update(const RolloutBatch&, double) override { return 0.0; }
    const char* name() const override { return "crl"; }

private:
    const intrinsic::MomentumEncoder& enc_;
    const intrinsic::CrlHeads& heads_;
    std::uint64_t seed_;
    std::int64_t window_ = 0;
};

// Per-window numbers as they land in the metrics stream.
struct WindowStats {
    std::int64_t window = 0;
    std::int64_t frames = 0;  // consumed after this window
    double reward_raw_mean = 0.0;
    double reward_mean = 0.0;
    policy::PpoStats ppo;
    actionrep::IdmStats idm;
    intrinsic::ContrastiveResult simclr, cpc;
    double reward_model_loss = 0.0;
    std::int64_t episodes = 0;  // cumulative
    int labels = 0;             // samples written this window
};

struct RunSummary {
    std::int64_t windows = 0;
    std::int64_t frames = 0;
    std::int64_t episodes = 0;
    std::int64_t labels = 0;
    std::int64_t checkpoints = 0;
};

class ExploreTrainer {
public:
    ExploreTrainer(const RunConfig& cfg, bool deterministic = false)
        : cfg_(cfg), det_(deterministic) {
        config::validate(cfg_);
        scenes_ = downstream::make_scenes(config::train_split(cfg_), config::to_gen_profile(cfg_));
        model_ = ModelBundle::create(config::to_net(cfg_), cfg_.seed);

        const intrinsic::IntrinsicConfig icfg = config::to_intrinsic(cfg_);
        const bool want_crl_heads = cfg_.reward_mode == "crl" || cfg_.obj_simclr || cfg_.obj_cpc;
        if (cfg_.reward_mode == "rnd") {
            Rng r(derive_seed(cfg_.seed, 0x94dULL));
            rnd_.emplace(intrinsic::RndPair::create(model_.store, icfg, cfg_.feature_dim, r));
        }
        if (want_crl_heads) {
            Rng r(derive_seed(cfg_.seed, 0xc91ULL));
            crl_.emplace(intrinsic::CrlHeads::create(model_.store, icfg, cfg_.feature_dim, r));
        }
        if (cfg_.obj_idm) {
            Rng r(derive_seed(cfg_.seed, 0x1d3aULL));
            idm_.emplace(actionrep::IdmHeads::create(model_.store, config::to_idm(cfg_),
                                                     cfg_.feature_dim, r));
        }
        enc_ = intrinsic::MomentumEncoder::create_from(model_);
        if (cfg_.reward_mode == "rnd")
            reward_ = std::make_unique<RndSource>(model_, enc_, *rnd_, cfg_.lr_reward);
        else
            reward_ = std::make_unique<CrlSource>(enc_, *crl_, cfg_.seed);

        for (int e = 0; e < cfg_.num_envs; ++e) {
            const downstream::SceneBundle& b = scenes_[static_cast<size_t>(e) % scenes_.size()];
            envs_.push_back(std::make_unique<rollout::WorldEnv>(
                &b.spec, &b.map, b.id, cfg_.episode_cap, cfg_.image_size,
                Rng(derive_seed(cfg_.seed, 0xe21ULL * 1000003ULL + static_cast<std::uint64_t>(e)))));
            env_ptrs_.push_back(envs_.back().get());
        }
        runner_.emplace(model_, cfg_.num_envs, derive_seed(cfg_.seed, 0xac10ULL));

        adam_ppo_ = Adam(cfg_.lr);
        adam_idm_ = Adam(cfg_.idm_lr);
        adam_contrast_ = Adam(cfg_.lr_reward);
        shuffle_rng_ = Rng(derive_seed(cfg_.seed, 0x5afULL));
        label_rng_ = Rng(derive_seed(cfg_.seed, 0x1abULL));
        contrast_rng_ = Rng(derive_seed(cfg_.seed, 0xc0ULL));
    }

    const RunConfig& cfg() const { return cfg_; }
    ModelBundle& model() { return model_; }
    const std::vector<downstream::SceneBundle>& scenes() const { return scenes_; }
    std::int64_t frames_done() const { return frames_done_; }

    // Windows needed to consume the frame budget; the last may overshoot.
    std::int64_t total_windows() const {
        const std::int64_t per = static_cast<std::int64_t>(cfg_.num_envs) * cfg_.window_len;
        return (cfg_.total_frames + per - 1) / per;
    }

    RunSummary run(const TrainSinks& sinks) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::string hash = config::config_hash(cfg_);
        const std::int64_t W = total_windows();
        RunSummary sum;

        if (sinks.trajectory)
            for (int e = 0; e < cfg_.num_envs; ++e)
                sinks.trajectory->append_spawn(static_cast<std::uint32_t>(e),
                                               env_ptrs_[static_cast<size_t>(e)]->step_index(),
                                               env_ptrs_[static_cast<size_t>(e)]->pose(),
                                               static_cast<std::uint32_t>(
                                                   env_ptrs_[static_cast<size_t>(e)]->scene_id()));

        std::int64_t prev_frames = 0;
        for (std::int64_t w = 0; w < W; ++w) {
            const double progress = static_cast<double>(w) / static_cast<double>(W);
            WindowStats st;
            try {
                st = train_window(w, progress, sinks);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (step " +
                                   std::to_string(frames_done_) + ")");
            }
            sum.labels += st.labels;

            if (sinks.metrics) {
                double wall = 0.0;
                if (!det_)
                    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count();
                write_metrics(*sinks.metrics, st, hash, wall);
            }
            if (sinks.save_checkpoint && cfg_.checkpoint_every > 0 &&
                frames_done_ / cfg_.checkpoint_every > prev_frames / cfg_.checkpoint_every &&
                w + 1 < W) {
                sinks.save_checkpoint(frames_done_, model_.store);
                ++sum.checkpoints;
            }
            prev_frames = frames_done_;
        }
        if (sinks.save_checkpoint) {
            sinks.save_checkpoint(frames_done_, model_.store);
            ++sum.checkpoints;
        }

        sum.windows = W;
        sum.frames = frames_done_;
        sum.episodes = episodes_;
        return sum;
    }

private:
    WindowStats train_window(std::int64_t w, double progress, const TrainSinks& sinks) {
        WindowStats st;
        st.window = w;

        RolloutBatch batch =
            rollout::collect_window(env_ptrs_, cfg_.window_len, runner_->source(), cfg_.threads);
        if (sinks.trajectory) {
            std::vector<rollout::AgentPose> end_poses;
            for (rollout::Env* e : env_ptrs_) end_poses.push_back(e->pose());
            sinks.trajectory->append_batch(batch, end_poses);
        }

        rollout::relabel_intrinsic(batch, [&](const RolloutBatch& b) { return reward_->relabel(b); });
        rollout::normalize_rewards(batch, reward_stat_);
        rollout::compute_gae(batch, static_cast<float>(cfg_.gamma),
                             static_cast<float>(cfg_.gae_lambda));

        double raw = 0.0, norm = 0.0;
        for (const auto& tr : batch.steps) {
            raw += tr.reward_raw;
            norm += tr.reward;
            if (tr.done) ++episodes_;
        }
        st.reward_raw_mean = raw / static_cast<double>(batch.size());
        st.reward_mean = norm / static_cast<double>(batch.size());

        st.ppo = policy::ppo_update(model_, batch, adam_ppo_, shuffle_rng_, progress,
                                    config::to_ppo(cfg_));
        check_finite(st.ppo.loss, "policy loss");

        if (idm_) {
            st.idm = actionrep::idm_update(model_, *idm_, batch, adam_idm_, config::to_idm(cfg_));
            check_finite(st.idm.loss, "inverse-dynamics loss");
        }
        const intrinsic::IntrinsicConfig icfg = config::to_intrinsic(cfg_);
        if (cfg_.obj_simclr) {
            st.simclr = intrinsic::contrastive_update(model_, *crl_, batch, adam_contrast_,
                                                      contrast_rng_,
                                                      intrinsic::ContrastiveMode::kSimCLR, icfg);
            check_finite(st.simclr.loss, "simclr loss");
        }
        if (cfg_.obj_cpc) {
            st.cpc = intrinsic::contrastive_update(model_, *crl_, batch, adam_contrast_,
                                                   contrast_rng_,
                                                   intrinsic::ContrastiveMode::kCPC, icfg);
            check_finite(st.cpc.loss, "cpc loss");
        }
        st.reward_model_loss = reward_->update(batch, 1.0);
        check_finite(st.reward_model_loss, "reward-model loss");
        intrinsic::momentum_update(enc_, model_, static_cast<float>(cfg_.momentum_rho));

        frames_done_ += batch.size();
        const std::int64_t W = total_windows();
        if (sinks.dataset && cfg_.label_events > 0) {
            const std::int64_t due = cfg_.label_events * (w + 1) / W;
            for (; label_events_fired_ < due; ++label_events_fired_) {
                const auto samples = downstream::sample_labeled(
                    batch, scenes_, cfg_.labels_per_env_per_event, cfg_.image_size, label_rng_);
                for (const auto& s : samples) sinks.dataset->append(s);
                st.labels += static_cast<int>(samples.size());
            }
        }
        st.frames = frames_done_;
        st.episodes = episodes_;
        return st;
    }

    static void check_finite(double v, const char* what) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
    }

    void write_metrics(std::ostream& os, const WindowStats& st, const std::string& hash,
                       double wall) const {
        nlohmann::json j;
        j["step"] = st.frames;
        j["wall_time"] = wall;
        j["config_hash"] = hash;
        j["window"] = st.window;
        j["episodes"] = st.episodes;
        j["reward_raw_mean"] = st.reward_raw_mean;
        j["reward_mean"] = st.reward_mean;
        j["reward_model_loss"] = st.reward_model_loss;
        j["reward_mode"] = reward_->name();
        j["ppo_loss"] = st.ppo.loss;
        j["policy_loss"] = st.ppo.policy_loss;
        j["value_loss"] = st.ppo.value_loss;
        j["entropy"] = st.ppo.entropy;
        j["approx_kl"] = st.ppo.approx_kl;
        j["clip_fraction"] = st.ppo.clip_fraction;
        j["grad_norm"] = st.ppo.grad_norm;
        j["lr_scale"] = st.ppo.lr_scale;
        j["clip_eps"] = st.ppo.eps_used;
        if (idm_) {
            j["idm_loss"] = st.idm.loss;
            j["idm_accuracy"] = st.idm.accuracy;
            j["idm_windows"] = st.idm.windows;
        }
        if (cfg_.obj_simclr) {
            j["simclr_loss"] = st.simclr.loss;
            j["simclr_pairs"] = st.simclr.pairs;
        }
        if (cfg_.obj_cpc) {
            j["cpc_loss"] = st.cpc.loss;
            j["cpc_pairs"] = st.cpc.pairs;
        }
        j["labels"] = st.labels;
        os << j.dump() << '\n';
    }

    RunConfig cfg_;
    bool det_;
    std::vector<downstream::SceneBundle> scenes_;
    ModelBundle model_;
    std::optional<intrinsic::RndPair> rnd_;
    std::optional<intrinsic::CrlHeads> crl_;
    std::optional<actionrep::IdmHeads> idm_;
    intrinsic::MomentumEncoder enc_;
    std::unique_ptr<RewardSource> reward_;
    std::vector<std::unique_ptr<rollout::WorldEnv>> envs_;
    std::vector<rollout::Env*> env_ptrs_;
    std::optional<policy::PolicyRunner> runner_;
    Adam adam_ppo_{1e-3}, adam_idm_{1e-3}, adam_contrast_{1e-3};
    Rng shuffle_rng_{0}, label_rng_{0}, contrast_rng_{0};
    rollout::RunningStd reward_stat_;
    std::int64_t frames_done_ = 0;
    std::int64_t episodes_ = 0;
    std::int64_t label_events_fired_ = 0;
};

}  // namespace alp::trainer
