#include <gtest/gtest.h>

#include <cmath>

#include "alp/rollout.hpp"

using namespace alp;
using namespace alp::rollout;

namespace {

// Deterministic stand-in environment: observation pixels encode (id, step),
// episodes end purely by cap, the step counter never resets.
class FakeEnv : public Env {
public:
    FakeEnv(int id, int cap, bool fault_at_step = false, std::uint64_t fault_step = 0)
        : id_(id), cap_(cap), fault_(fault_at_step), fault_step_(fault_step) {
        refresh_();
    }

    const Array& rgb() const override { return obs_; }
    worldsim::AgentPose pose() const override {
        return {static_cast<float>(id_), static_cast<float>(steps_), 0.f};
    }
    int scene_id() const override { return id_; }
    std::uint64_t step_index() const override { return steps_; }
    int prev_action() const override { return prev_; }

    bool step(int action) override {
        if (fault_ && steps_ == fault_step_) throw std::runtime_error("hardware gremlin");
        prev_ = action;
        ++steps_;
        ++in_episode_;
        refresh_();
        if (in_episode_ >= cap_) {
            in_episode_ = 0;
            prev_ = kNoAction;
            return true;
        }
        return false;
    }

private:
    void refresh_() {
        obs_ = Array(Shape{3, 2, 2});
        for (std::int64_t i = 0; i < obs_.numel(); ++i)
            obs_[i] = static_cast<float>(id_) + 0.01f * static_cast<float>(steps_) +
                      0.001f * static_cast<float>(i);
    }

    int id_;
    int cap_;
    bool fault_;
    std::uint64_t fault_step_;
    Array obs_;
    std::uint64_t steps_ = 0;
    int prev_ = kNoAction;
    int in_episode_ = 0;
};

ActionSource scripted_source() {
    ActionSource src;
    src.act = [](const std::vector<Env*>& envs, std::vector<int>& actions, std::vector<float>& lp,
                 std::vector<float>& val) {
        for (size_t e = 0; e < envs.size(); ++e) {
            actions[e] = static_cast<int>((envs[e]->step_index() + e) % 3);
            lp[e] = -1.1f;
            val[e] = 0.25f * static_cast<float>(e);
        }
    };
    return src;
}

// Direct evaluation of the advantage as an explicit discounted sum of TD
// residuals, truncated at episode ends. Independent of the reverse recursion.
void gae_brute(const RolloutBatch& b, float gamma, float lambda, std::vector<double>& adv) {
    adv.assign(static_cast<size_t>(b.size()), 0.0);
    for (int e = 0; e < b.num_envs; ++e)
        for (int t = 0; t < b.len; ++t) {
            double acc = 0.0, coef = 1.0;
            for (int k = t; k < b.len; ++k) {
                const Transition& tr = b.at(e, k);
                const double vnext = (k + 1 < b.len)
                                         ? b.at(e, k + 1).value
                                         : b.bootstrap_value[static_cast<size_t>(e)];
                const double nonterm = tr.done ? 0.0 : 1.0;
                acc += coef * (tr.reward + gamma * vnext * nonterm - tr.value);
                if (tr.done) break;
                coef *= static_cast<double>(gamma) * lambda;
            }
            adv[static_cast<size_t>(e) * b.len + t] = acc;
        }
}

}  // namespace

TEST(CollectWindow, EpisodeCapsPrevActionsAndCounters) {
    FakeEnv e0(0, 4), e1(1, 4), e2(2, 4);
    std::vector<Env*> envs{&e0, &e1, &e2};
    ActionSource src = scripted_source();
    std::vector<int> resets;
    src.on_episode_end = [&](int e) { resets.push_back(e); };
    src.bootstrap = [](const std::vector<Env*>& es) {
        std::vector<float> v;
        for (size_t e = 0; e < es.size(); ++e) v.push_back(static_cast<float>(e) + 10.f);
        return v;
    };
    src.hidden_snapshot = [](int e) { return Array(Shape{4}, static_cast<float>(e)); };

    const RolloutBatch b = collect_window(envs, 10, src, 1);
    ASSERT_EQ(b.num_envs, 3);
    ASSERT_EQ(b.len, 10);
    for (int e = 0; e < 3; ++e) {
        for (int t = 0; t < 10; ++t) {
            const Transition& tr = b.at(e, t);
            EXPECT_EQ(tr.step_index, static_cast<std::uint64_t>(t));
            EXPECT_EQ(tr.done, t == 3 || t == 7) << "e=" << e << " t=" << t;
            if (t == 0 || t == 4 || t == 8)
                EXPECT_EQ(tr.prev_action, kNoAction);
            else
                EXPECT_EQ(tr.prev_action, b.at(e, t - 1).action);
            EXPECT_EQ(tr.action, static_cast<int>((tr.step_index + e) % 3));
            EXPECT_FLOAT_EQ(tr.logp, -1.1f);
            EXPECT_FLOAT_EQ(tr.value, 0.25f * static_cast<float>(e));
            EXPECT_EQ(tr.scene_id, e);
            // observation was captured before the action was applied
            EXPECT_FLOAT_EQ(tr.rgb[0], static_cast<float>(e) + 0.01f * static_cast<float>(t));
        }
        EXPECT_FLOAT_EQ(b.bootstrap_value[static_cast<size_t>(e)], static_cast<float>(e) + 10.f);
        EXPECT_FLOAT_EQ(b.init_hidden[static_cast<size_t>(e)][0], static_cast<float>(e));
    }
    EXPECT_EQ(resets, (std::vector<int>{0, 1, 2, 0, 1, 2}));
}

TEST(CollectWindow, WorkerPartitioningDoesNotChangeResults) {
    auto run = [](int threads) {
        FakeEnv e0(0, 3), e1(1, 5), e2(2, 4), e3(3, 7), e4(4, 2);
        std::vector<Env*> envs{&e0, &e1, &e2, &e3, &e4};
        return collect_window(envs, 16, scripted_source(), threads);
    };
    const RolloutBatch a = run(1);
    const RolloutBatch b = run(3);
    const RolloutBatch c = run(5);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i) {
        EXPECT_EQ(a.steps[i].action, b.steps[i].action);
        EXPECT_EQ(a.steps[i].done, c.steps[i].done);
        EXPECT_EQ(a.steps[i].step_index, b.steps[i].step_index);
        ASSERT_EQ(a.steps[i].rgb.numel(), c.steps[i].rgb.numel());
        for (std::int64_t k = 0; k < a.steps[i].rgb.numel(); ++k)
            ASSERT_EQ(a.steps[i].rgb[k], c.steps[i].rgb[k]);
    }
}

TEST(CollectWindow, EnvFaultAbortsWithEnvIndex) {
    FakeEnv e0(0, 100), e1(1, 100);
    FakeEnv bad(2, 100, true, 5);
    std::vector<Env*> envs{&e0, &e1, &bad};
    try {
        collect_window(envs, 10, scripted_source(), 1);
        FAIL() << "expected ContractError";
    } catch (const ContractError& err) {
        EXPECT_NE(std::string(err.what()).find("env 2"), std::string::npos);
        EXPECT_NE(std::string(err.what()).find("step 5"), std::string::npos);
    }
}

TEST(Relabel, WritesRawRewardsAndValidates) {
    FakeEnv e0(0, 8), e1(1, 8);
    std::vector<Env*> envs{&e0, &e1};
    RolloutBatch b = collect_window(envs, 4, scripted_source(), 1);

    relabel_intrinsic(b, [](const RolloutBatch& batch) {
        std::vector<float> r;
        for (const auto& tr : batch.steps) r.push_back(static_cast<float>(tr.step_index) + 0.5f);
        return r;
    });
    EXPECT_FLOAT_EQ(b.at(0, 2).reward_raw, 2.5f);
    EXPECT_FLOAT_EQ(b.at(1, 3).reward_raw, 3.5f);

    EXPECT_THROW(relabel_intrinsic(
                     b, [](const RolloutBatch&) { return std::vector<float>{1.f}; }),
                 ContractError);
    EXPECT_THROW(relabel_intrinsic(b,
                                   [](const RolloutBatch& batch) {
                                       std::vector<float> r(static_cast<size_t>(batch.size()), 0.f);
                                       r[3] = std::nanf("");
                                       return r;
                                   }),
                 NumericError);
}

TEST(RunningStd, MatchesTwoPassComputation) {
    Rng rng(17);
    std::vector<double> xs(1000000);
    for (auto& x : xs) x = rng.uniform(0, 10) + (rng.bernoulli(0.01) ? 500.0 : 0.0);

    RunningStd w;
    for (double x : xs) w.add(x);

    long double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<long double>(xs.size());
    long double m2 = 0;
    for (double x : xs) m2 += (x - mean) * (x - mean);
    const double ref_std = std::sqrt(static_cast<double>(m2 / static_cast<long double>(xs.size())));

    EXPECT_NEAR(w.std() / ref_std, 1.0, 1e-9);
    EXPECT_NEAR(w.mean / static_cast<double>(mean), 1.0, 1e-9);

    // merging chunked accumulators equals one pass over everything
    RunningStd a, b, c;
    for (size_t i = 0; i < xs.size(); ++i) (i % 3 == 0 ? a : i % 3 == 1 ? b : c).add(xs[i]);
    a.merge(b);
    a.merge(c);
    EXPECT_EQ(a.n, w.n);
    EXPECT_NEAR(a.std() / w.std(), 1.0, 1e-9);
}

TEST(NormalizeRewards, UpdateThenDivideKeepsSign) {
    RolloutBatch b;
    b.num_envs = 1;
    b.len = 3;
    b.steps.resize(3);
    b.at(0, 0).reward_raw = 1.f;
    b.at(0, 1).reward_raw = 2.f;
    b.at(0, 2).reward_raw = 3.f;

    RunningStd stat;
    normalize_rewards(b, stat);
    // the batch itself seeds the history: std of {1,2,3} = sqrt(2/3)
    const float denom1 = static_cast<float>(std::sqrt(2.0 / 3.0));
    EXPECT_NEAR(b.at(0, 0).reward, 1.f / denom1, 1e-5f);
    EXPECT_NEAR(b.at(0, 2).reward, 3.f / denom1, 1e-5f);

    b.at(0, 0).reward_raw = 4.f;
    b.at(0, 1).reward_raw = 5.f;
    b.at(0, 2).reward_raw = 6.f;
    normalize_rewards(b, stat);
    // history is now {1..6}: mean 3.5, population std sqrt(17.5/6)
    const float denom2 = static_cast<float>(std::sqrt(17.5 / 6.0));
    EXPECT_NEAR(b.at(0, 1).reward, 5.f / denom2, 1e-5f);
    EXPECT_GT(b.at(0, 0).reward, 0.f);  // mean is never subtracted
}

TEST(NormalizeRewards, AllZeroRewardsStayFinite) {
    RolloutBatch b;
    b.num_envs = 1;
    b.len = 4;
    b.steps.resize(4);
    RunningStd stat;
    normalize_rewards(b, stat);
    for (const auto& tr : b.steps) EXPECT_EQ(tr.reward, 0.f);
}

TEST(Gae, MatchesBruteForceSumOverRandomSequences) {
    Rng rng(23);
    std::vector<double> brute;
    for (int trial = 0; trial < 1000; ++trial) {
        RolloutBatch b;
        b.num_envs = 2;
        b.len = 50;
        b.steps.resize(100);
        b.bootstrap_value = {rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)};
        for (auto& tr : b.steps) {
            tr.reward = rng.uniform_f(-1, 1);
            tr.value = rng.uniform_f(-1, 1);
            tr.done = rng.bernoulli(0.1);
        }
        compute_gae(b, 0.99f, 0.95f);
        gae_brute(b, 0.99f, 0.95f, brute);
        for (size_t i = 0; i < brute.size(); ++i) {
            ASSERT_NEAR(b.advantage[i], brute[i], 1e-6) << "trial " << trial << " flat " << i;
            ASSERT_NEAR(b.ret[i], brute[i] + b.steps[i].value, 1e-6);
        }
    }
}

TEST(Gae, DoneBlocksBootstrapAndAccumulation) {
    RolloutBatch b;
    b.num_envs = 1;
    b.len = 2;
    b.steps.resize(2);
    b.bootstrap_value = {100.f};
    b.at(0, 0) = {};
    b.at(0, 0).reward = 1.f;
    b.at(0, 0).value = 0.5f;
    b.at(0, 0).done = true;  // terminal: nothing after t=0 may leak in
    b.at(0, 1).reward = 2.f;
    b.at(0, 1).value = 0.25f;
    compute_gae(b, 0.99f, 0.95f);
    EXPECT_NEAR(b.advantage[0], 1.f - 0.5f, 1e-6f);
    EXPECT_NEAR(b.advantage[1], 2.f + 0.99f * 100.f - 0.25f, 1e-4f);
}
