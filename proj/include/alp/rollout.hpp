// Window collection over parallel environments, reward relabeling and
// normalization, and GAE. The collector only sees an abstract Env, so tests
// can substitute scripted environments.
#pragma once

#include <cstdlib>
#include <functional>
#include <memory>
#include <thread>

#include "alp/array.hpp"
#include "alp/worldsim.hpp"

namespace alp::rollout {

using worldsim::AgentPose;

constexpr int kNoAction = -1;  // "no previous action" marker after a reset

struct Env {
    virtual ~Env() = default;
    virtual const Array& rgb() const = 0;        // current observation, [3,H,W]
    virtual AgentPose pose() const = 0;
    virtual int scene_id() const = 0;
    virtual std::uint64_t step_index() const = 0;  // per-env monotonic counter
    virtual int prev_action() const = 0;           // kNoAction right after reset
    // Applies the action; returns true when the episode ended (the env has
    // already reset itself and rgb() shows the new episode's first frame).
    virtual bool step(int action) = 0;
};

// Concrete simulator-backed environment. Episodes end only by the step cap.
class WorldEnv : public Env {
public:
    WorldEnv(const worldsim::SceneSpec* scene, const worldsim::SpawnMap* spawn_map, int scene_id,
             int episode_cap, int image_size, Rng rng)
        : scene_(scene),
          map_(spawn_map),
          scene_id_(scene_id),
          cap_(episode_cap),
          size_(image_size),
          rng_(rng) {
        if (cap_ < 1) throw ContractError("WorldEnv: episode cap must be >= 1");
        reset();
    }

    const Array& rgb() const override { return obs_.rgb; }
    AgentPose pose() const override { return pose_; }
    int scene_id() const override { return scene_id_; }
    std::uint64_t step_index() const override { return step_index_; }
    int prev_action() const override { return prev_action_; }

    bool step(int action) override {
        pose_ = worldsim::step(*scene_, pose_, action);
        prev_action_ = action;
        ++step_index_;
        ++in_episode_;
        if (in_episode_ >= cap_) {
            reset();
            return true;
        }
        render_();
        return false;
    }

    const worldsim::SceneSpec& scene() const { return *scene_; }

private:
    void reset() {
        pose_ = worldsim::sample_spawn(*scene_, *map_, rng_);
        prev_action_ = kNoAction;
        in_episode_ = 0;
        render_();
    }
    void render_() { obs_ = worldsim::render(*scene_, pose_, size_, size_); }

    const worldsim::SceneSpec* scene_;
    const worldsim::SpawnMap* map_;
    int scene_id_;
    int cap_;
    int size_;
    Rng rng_;
    worldsim::Observation obs_;
    AgentPose pose_{};
    int prev_action_ = kNoAction;
    std::uint64_t step_index_ = 0;
    int in_episode_ = 0;
};

struct Transition {
    Array rgb;           // observation at decision time
    int action = 0;
    int prev_action = kNoAction;
    float logp = 0.f;
    float value = 0.f;
    float reward_raw = 0.f;
    float reward = 0.f;
    bool done = false;   // episode ended after this action
    AgentPose pose{};
    int scene_id = 0;
    std::uint64_t step_index = 0;
};

struct RolloutBatch {
    int num_envs = 0;
    int len = 0;
    std::vector<Transition> steps;        // env-major: steps[e * len + t]
    std::vector<float> bootstrap_value;   // per env, value after the window
    std::vector<Array> init_hidden;       // per env, recurrent state at window start
    std::vector<float> advantage;         // env-major, filled by compute_gae
    std::vector<float> ret;

    Transition& at(int e, int t) { return steps[static_cast<size_t>(e) * len + t]; }
    const Transition& at(int e, int t) const { return steps[static_cast<size_t>(e) * len + t]; }
    std::int64_t size() const { return static_cast<std::int64_t>(num_envs) * len; }
};

// How the collector chooses actions. A policy supplies all four hooks; a
// scripted source may leave everything but `act` empty.
struct ActionSource {
    // For the current observations of all envs: pick actions, report logps
    // and value estimates, advance any internal recurrent state.
    std::function<void(const std::vector<Env*>&, std::vector<int>&, std::vector<float>&,
                       std::vector<float>&)>
        act;
    std::function<void(int)> on_episode_end;                             // optional
    std::function<std::vector<float>(const std::vector<Env*>&)> bootstrap;  // optional
    std::function<Array(int)> hidden_snapshot;                           // optional
};

inline int env_thread_count() {
    if (const char* s = std::getenv("ALP_THREADS")) {
        const int n = std::atoi(s);
        if (n >= 1) return n;
    }
    return 1;
}

// Steps `envs[begin..end)` and records transitions for step t. Split out so
// the worker partitioning cannot change results: every env is self-contained.
namespace detail {
inline void step_env_range(const std::vector<Env*>& envs, RolloutBatch& batch, int t,
                           const std::vector<int>& actions, const std::vector<float>& logps,
                           const std::vector<float>& values, size_t begin, size_t end,
                           std::exception_ptr& fault) {
    for (size_t e = begin; e < end; ++e) {
        try {
            Transition& tr = batch.at(static_cast<int>(e), t);
            tr.rgb = envs[e]->rgb();
            tr.pose = envs[e]->pose();
            tr.scene_id = envs[e]->scene_id();
            tr.step_index = envs[e]->step_index();
            tr.prev_action = envs[e]->prev_action();
            tr.action = actions[e];
            tr.logp = logps[e];
            tr.value = values[e];
            tr.done = envs[e]->step(actions[e]);
        } catch (...) {
            if (!fault)
                fault = std::make_exception_ptr(ContractError(
                    "collect_window: env " + std::to_string(e) + " faulted at step " +
                    std::to_string(t)));
        }
    }
}
}  // namespace detail

inline RolloutBatch collect_window(const std::vector<Env*>& envs, int len,
                                   const ActionSource& source, int threads = 0) {
    if (envs.empty() || len < 1) throw ContractError("collect_window: empty request");
    if (threads <= 0) threads = env_thread_count();
    const int E = static_cast<int>(envs.size());
    RolloutBatch batch;
    batch.num_envs = E;
    batch.len = len;
    batch.steps.resize(static_cast<size_t>(E) * len);
    batch.init_hidden.resize(static_cast<size_t>(E));
    if (source.hidden_snapshot)
        for (int e = 0; e < E; ++e) batch.init_hidden[static_cast<size_t>(e)] = source.hidden_snapshot(e);

    std::vector<int> actions(static_cast<size_t>(E));
    std::vector<float> logps(static_cast<size_t>(E)), values(static_cast<size_t>(E));
    for (int t = 0; t < len; ++t) {
        std::fill(logps.begin(), logps.end(), 0.f);
        std::fill(values.begin(), values.end(), 0.f);
        source.act(envs, actions, logps, values);

        std::exception_ptr fault;
        const int workers = std::min(threads, E);
        if (workers <= 1) {
            detail::step_env_range(envs, batch, t, actions, logps, values, 0,
                                   static_cast<size_t>(E), fault);
        } else {
            std::vector<std::exception_ptr> faults(static_cast<size_t>(workers));
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) {
                const size_t b = static_cast<size_t>(E) * w / workers;
                const size_t ee = static_cast<size_t>(E) * (w + 1) / workers;
                pool.emplace_back([&, b, ee, w] {
                    detail::step_env_range(envs, batch, t, actions, logps, values, b, ee,
                                           faults[static_cast<size_t>(w)]);
                });
            }
            for (auto& th : pool) th.join();
            for (auto& f : faults)
                if (f && !fault) fault = f;
        }
        if (fault) std::rethrow_exception(fault);

        for (int e = 0; e < E; ++e)
            if (batch.at(e, t).done && source.on_episode_end) source.on_episode_end(e);
    }
    batch.bootstrap_value = source.bootstrap ? source.bootstrap(envs)
                                             : std::vector<float>(static_cast<size_t>(E), 0.f);
    if (batch.bootstrap_value.size() != static_cast<size_t>(E))
        throw ContractError("collect_window: bootstrap size mismatch");
    return batch;
}

// All frames of a window as one [E*L, C, H, W] tensor, rows in flat
// (env-major) order.
inline Array pack_frames(const RolloutBatch& batch) {
    if (batch.steps.empty()) throw ContractError("pack_frames: empty batch");
    const Shape& fs = batch.steps[0].rgb.shape;
    Shape s{static_cast<int>(batch.size())};
    s.insert(s.end(), fs.begin(), fs.end());
    Array out(s);
    const std::int64_t stride = batch.steps[0].rgb.numel();
    for (size_t i = 0; i < batch.steps.size(); ++i) {
        const Array& f = batch.steps[i].rgb;
        check_same_shape(f.shape, fs, "pack_frames");
        std::copy(f.v.begin(), f.v.end(), out.v.begin() + static_cast<std::int64_t>(i) * stride);
    }
    return out;
}

// reward_fn must be pure and per-transition: relabeling a batch must equal
// relabeling each transition alone.
using RewardFn = std::function<std::vector<float>(const RolloutBatch&)>;

inline void relabel_intrinsic(RolloutBatch& batch, const RewardFn& fn) {
    const auto rewards = fn(batch);
    if (rewards.size() != static_cast<size_t>(batch.size()))
        throw ContractError("relabel_intrinsic: reward count mismatch");
    for (size_t i = 0; i < rewards.size(); ++i) {
        if (!std::isfinite(rewards[i]))
            throw NumericError("relabel_intrinsic: non-finite reward at flat index " +
                               std::to_string(i));
        batch.steps[i].reward_raw = rewards[i];
    }
}

// Welford accumulator over the full reward history; float64 state.
struct RunningStd {
    std::int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    void merge(const RunningStd& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double d = o.mean - mean;
        const double total = static_cast<double>(n + o.n);
        mean += d * static_cast<double>(o.n) / total;
        m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
        n += o.n;
    }

    double variance() const { return n > 0 ? m2 / static_cast<double>(n) : 0.0; }
    double std() const { return std::sqrt(variance()); }
};

// Updates the running history with the batch first, then divides by
// max(std, 1e-8). The mean is never subtracted, so reward signs survive.
inline void normalize_rewards(RolloutBatch& batch, RunningStd& stat) {
    for (const auto& tr : batch.steps) stat.add(tr.reward_raw);
    const float denom = static_cast<float>(std::max(stat.std(), 1e-8));
    for (auto& tr : batch.steps) tr.reward = tr.reward_raw / denom;
}

// GAE with episode truncation: done at t blocks both the bootstrap and the
// accumulation across t -> t+1.
inline void compute_gae(RolloutBatch& batch, float gamma, float lambda) {
    batch.advantage.assign(static_cast<size_t>(batch.size()), 0.f);
    batch.ret.assign(static_cast<size_t>(batch.size()), 0.f);
    for (int e = 0; e < batch.num_envs; ++e) {
        double gae = 0.0;
        double next_value = batch.bootstrap_value[static_cast<size_t>(e)];
        for (int t = batch.len - 1; t >= 0; --t) {
            const Transition& tr = batch.at(e, t);
            const double nonterminal = tr.done ? 0.0 : 1.0;
            const double delta =
                tr.reward + gamma * next_value * nonterminal - static_cast<double>(tr.value);
            gae = delta + static_cast<double>(gamma) * lambda * nonterminal * gae;
            const size_t flat = static_cast<size_t>(e) * batch.len + t;
            batch.advantage[flat] = static_cast<float>(gae);
            batch.ret[flat] = static_cast<float>(gae + tr.value);
            next_value = tr.value;
        }
    }
}

}  // namespace alp::rollout
