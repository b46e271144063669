// Recurrent actor-critic over rendered frames: shared conv backbone, GRU core
// conditioned on the previous action, and PPO with clipped surrogate updates
// replayed through time from stored window-start hidden states.
#pragma once

#include "alp/checkpoint.hpp"
#include "alp/optim.hpp"
#include "alp/rollout.hpp"

namespace alp::policy {

using ndmath::Adam;
using ndmath::clip_global_grad_norm;
using ndmath::Graph;
using ndmath::NodePtr;
using ndmath::ParamStore;

struct NetConfig {
    int image_size = 64;      // multiple of 16
    int feature_dim = 128;
    int hidden_dim = 128;
    int action_embed_dim = 32;
};

struct PpoConfig {
    float gamma = 0.99f;
    float gae_lambda = 0.95f;
    float clip_eps = 0.1f;
    bool anneal_clip = true;
    float value_coef = 0.5f;
    float entropy_coef = 0.01f;
    float max_grad_norm = 0.5f;
    int epochs = 4;
    int minibatches = 2;  // along the environment axis
    double lr = 2.5e-4;
    bool anneal_lr = true;
    // When false the surrogate still trains recurrent/actor/value but the
    // backbone is left to the representation objectives (the PG-off ablation).
    bool update_backbone = true;
};

inline Array he_normal(Shape s, std::int64_t fan_in, Rng& rng) {
    Array a(std::move(s));
    const float stddev = std::sqrt(2.f / static_cast<float>(fan_in));
    for (auto& x : a.v) x = rng.normal_f(0.f, stddev);
    return a;
}

inline Array xavier_uniform(Shape s, std::int64_t fan_in, std::int64_t fan_out, Rng& rng,
                            float gain = 1.f) {
    Array a(std::move(s));
    const float lim = gain * std::sqrt(6.f / static_cast<float>(fan_in + fan_out));
    for (auto& x : a.v) x = rng.uniform_f(-lim, lim);
    return a;
}

// pool/2 then three stride-2 convs (8,16,32 channels) and a linear projection:
// a [N,3,S,S] frame becomes a [N,32,S/16,S/16] map and a [N,F] feature row.
struct Backbone {
    NodePtr c1w, c1b, c2w, c2b, c3w, c3b, fw, fb;
    int image_size = 0, feature_dim = 0;
    int map_size = 0;

    static constexpr int kChannels[3] = {8, 16, 32};

    static Backbone create(ParamStore& store, const std::string& group, int image_size,
                           int feature_dim, Rng& rng, bool trainable = true) {
        if (image_size < 16 || image_size % 16 != 0)
            throw ContractError("Backbone: image size must be a positive multiple of 16");
        Backbone b;
        b.image_size = image_size;
        b.feature_dim = feature_dim;
        b.map_size = image_size / 16;
        const int c1 = kChannels[0], c2 = kChannels[1], c3 = kChannels[2];
        b.c1w = store.add(group + "/conv1_w", he_normal(Shape{c1, 3, 3, 3}, 27, rng), trainable);
        b.c1b = store.add(group + "/conv1_b", Array(Shape{c1}), trainable);
        b.c2w = store.add(group + "/conv2_w", he_normal(Shape{c2, c1, 3, 3}, 9 * c1, rng), trainable);
        b.c2b = store.add(group + "/conv2_b", Array(Shape{c2}), trainable);
        b.c3w = store.add(group + "/conv3_w", he_normal(Shape{c3, c2, 3, 3}, 9 * c2, rng), trainable);
        b.c3b = store.add(group + "/conv3_b", Array(Shape{c3}), trainable);
        const int flat = c3 * b.map_size * b.map_size;
        b.fw = store.add(group + "/fc_w", xavier_uniform(Shape{flat, feature_dim}, flat,
                                                         feature_dim, rng), trainable);
        b.fb = store.add(group + "/fc_b", Array(Shape{feature_dim}), trainable);
        return b;
    }

    struct Out {
        NodePtr conv_map;  // [N, 32, S/16, S/16]
        NodePtr features;  // [N, F]
    };

    Out forward(Graph& g, NodePtr x) const {
        if (x->value.rank() != 4 || x->value.extent(1) != 3 || x->value.extent(2) != image_size ||
            x->value.extent(3) != image_size)
            throw ShapeError("Backbone: expected [N x 3 x " + std::to_string(image_size) + " x " +
                             std::to_string(image_size) + "], got " + shape_str(x->value.shape));
        const int N = x->value.extent(0);
        auto h = g.avgpool2x2(x);
        h = g.relu(g.conv2d(h, c1w, c1b, 2, 1));
        h = g.relu(g.conv2d(h, c2w, c2b, 2, 1));
        auto map = g.relu(g.conv2d(h, c3w, c3b, 2, 1));
        auto flat = g.reshape(map, Shape{N, kChannels[2] * map_size * map_size});
        auto feat = g.relu(g.affine(flat, fw, fb));
        return {map, feat};
    }
};

// Full exploration model. Parameter groups: backbone/, recurrent/, actor/,
// value/ (intrinsic-reward and inverse-dynamics heads register their own).
struct ModelBundle {
    NetConfig net;
    ParamStore store;
    Backbone backbone;
    NodePtr embed;  // [num_actions + 1, E]; last row encodes "no previous action"
    NodePtr wz, uz, bz, wr, ur, br, wh, uh, bh;
    NodePtr actor_w, actor_b, value_w, value_b;

    static ModelBundle create(const NetConfig& net, std::uint64_t seed) {
        ModelBundle m;
        m.net = net;
        Rng rng(derive_seed(seed, 0xa0de1ULL));
        m.backbone = Backbone::create(m.store, "backbone", net.image_size, net.feature_dim, rng);

        const int A = worldsim::kNumActions, E = net.action_embed_dim;
        const int F = net.feature_dim, H = net.hidden_dim, in = F + E;
        m.embed = m.store.add("recurrent/prev_action_embed",
                              Array::normal(Shape{A + 1, E}, rng, 0.f, 0.1f));
        auto gate = [&](const char* w, const char* u, const char* b, NodePtr& W, NodePtr& U,
                        NodePtr& B) {
            W = m.store.add(std::string("recurrent/") + w, xavier_uniform(Shape{in, H}, in, H, rng));
            U = m.store.add(std::string("recurrent/") + u, xavier_uniform(Shape{H, H}, H, H, rng));
            B = m.store.add(std::string("recurrent/") + b, Array(Shape{H}));
        };
        gate("gru_wz", "gru_uz", "gru_bz", m.wz, m.uz, m.bz);
        gate("gru_wr", "gru_ur", "gru_br", m.wr, m.ur, m.br);
        gate("gru_wh", "gru_uh", "gru_bh", m.wh, m.uh, m.bh);

        // near-uniform initial policy keeps early entropy high
        m.actor_w = m.store.add("actor/w", xavier_uniform(Shape{H, A}, H, A, rng, 0.01f));
        m.actor_b = m.store.add("actor/b", Array(Shape{A}));
        m.value_w = m.store.add("value/w", xavier_uniform(Shape{H, 1}, H, 1, rng));
        m.value_b = m.store.add("value/b", Array(Shape{1}));
        return m;
    }

    static int embed_index(int prev_action) {
        return prev_action < 0 ? worldsim::kNumActions : prev_action;
    }

    // One recurrent step: h' = GRU(concat(features, embed[prev]), h).
    NodePtr core(Graph& g, NodePtr features, const std::vector<int>& prev_actions,
                 NodePtr h) const {
        std::vector<int> idx(prev_actions.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = embed_index(prev_actions[i]);
        auto x = g.concat_cols({features, g.gather_rows(embed, idx)});
        auto b0 = g.constant(Array(Shape{net.hidden_dim}));
        auto z = g.sigmoid(g.add(g.affine(x, wz, bz), g.affine(h, uz, b0)));
        auto r = g.sigmoid(g.add(g.affine(x, wr, br), g.affine(h, ur, b0)));
        auto hc = g.tanh_(g.add(g.affine(x, wh, bh), g.affine(g.mul(r, h), uh, b0)));
        auto ones = g.constant(Array(h->value.shape, 1.f));
        return g.add(g.mul(z, h), g.mul(g.sub(ones, z), hc));
    }

    NodePtr actor_logits(Graph& g, NodePtr h) const { return g.affine(h, actor_w, actor_b); }

    NodePtr value_of(Graph& g, NodePtr h) const {
        auto v = g.affine(h, value_w, value_b);
        return g.reshape(v, Shape{h->value.extent(0)});
    }

    std::vector<std::string> ppo_param_names() const {
        return store.group_names({"backbone", "recurrent", "actor", "value"});
    }
};

struct ActResult {
    std::vector<int> actions;
    std::vector<float> logps;
    std::vector<float> values;
};

// Holds the per-env recurrent state and action-sampling streams between
// windows; produces the ActionSource the collector drives.
class PolicyRunner {
public:
    PolicyRunner(ModelBundle& model, int num_envs, std::uint64_t seed, bool deterministic = false)
        : model_(model),
          hidden_(Shape{num_envs, model.net.hidden_dim}),
          det_(deterministic) {
        for (int e = 0; e < num_envs; ++e)
            rngs_.emplace_back(derive_seed(seed, 0xac7ULL * 1000003ULL + static_cast<std::uint64_t>(e)));
    }

    const Array& hidden() const { return hidden_; }
    void reset_row(int e) {
        for (int i = 0; i < hidden_.extent(1); ++i) hidden_.at2(e, i) = 0.f;
    }

    ActResult act(const std::vector<rollout::Env*>& envs) {
        const int E = static_cast<int>(envs.size());
        if (E != hidden_.extent(0)) throw ContractError("PolicyRunner: env count changed");
        Graph g(false);
        auto h = model_.core(g, encode_(g, envs), prev_ids_(envs), g.constant(hidden_));
        auto lsm = g.log_softmax_rows(model_.actor_logits(g, h));
        auto value = model_.value_of(g, h);
        if (!lsm->value.all_finite() || !value->value.all_finite())
            throw NumericError("PolicyRunner: non-finite policy output");
        hidden_ = h->value;

        ActResult out;
        out.actions.resize(static_cast<size_t>(E));
        out.logps.resize(static_cast<size_t>(E));
        out.values = value->value.v;
        const int A = lsm->value.extent(1);
        for (int e = 0; e < E; ++e) {
            int a = 0;
            if (det_) {
                for (int c = 1; c < A; ++c)
                    if (lsm->value.at2(e, c) > lsm->value.at2(e, a)) a = c;
            } else {
                const double u = rngs_[static_cast<size_t>(e)].uniform();
                double cdf = 0.0;
                a = A - 1;  // guard against rounding leaving a sliver above the cdf
                for (int c = 0; c < A; ++c) {
                    cdf += std::exp(static_cast<double>(lsm->value.at2(e, c)));
                    if (u < cdf) {
                        a = c;
                        break;
                    }
                }
            }
            out.actions[static_cast<size_t>(e)] = a;
            out.logps[static_cast<size_t>(e)] = lsm->value.at2(e, a);
        }
        return out;
    }

    std::vector<float> bootstrap_values(const std::vector<rollout::Env*>& envs) {
        Graph g(false);
        auto h = model_.core(g, encode_(g, envs), prev_ids_(envs), g.constant(hidden_));
        return model_.value_of(g, h)->value.v;  // hidden_ deliberately untouched
    }

    rollout::ActionSource source() {
        rollout::ActionSource src;
        src.act = [this](const std::vector<rollout::Env*>& envs, std::vector<int>& actions,
                         std::vector<float>& logps, std::vector<float>& values) {
            ActResult r = act(envs);
            actions = std::move(r.actions);
            logps = std::move(r.logps);
            values = std::move(r.values);
        };
        src.on_episode_end = [this](int e) { reset_row(e); };
        src.bootstrap = [this](const std::vector<rollout::Env*>& envs) {
            return bootstrap_values(envs);
        };
        src.hidden_snapshot = [this](int e) {
            Array row(Shape{hidden_.extent(1)});
            for (int i = 0; i < hidden_.extent(1); ++i) row[i] = hidden_.at2(e, i);
            return row;
        };
        return src;
    }

private:
    NodePtr encode_(Graph& g, const std::vector<rollout::Env*>& envs) {
        const int E = static_cast<int>(envs.size());
        const int S = model_.net.image_size;
        Array obs(Shape{E, 3, S, S});
        const std::int64_t stride = 3LL * S * S;
        for (int e = 0; e < E; ++e) {
            const Array& rgb = envs[static_cast<size_t>(e)]->rgb();
            if (rgb.numel() != stride)
                throw ShapeError("PolicyRunner: observation " + shape_str(rgb.shape) +
                                 " does not match image size " + std::to_string(S));
            std::copy(rgb.v.begin(), rgb.v.end(), obs.v.begin() + e * stride);
        }
        return model_.backbone.forward(g, g.constant(std::move(obs))).features;
    }

    std::vector<int> prev_ids_(const std::vector<rollout::Env*>& envs) const {
        std::vector<int> prev(envs.size());
        for (size_t e = 0; e < envs.size(); ++e) prev[e] = envs[e]->prev_action();
        return prev;
    }

    ModelBundle& model_;
    Array hidden_;
    std::vector<Rng> rngs_;
    bool det_;
};

// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv), averaged; the PPO
// objective to be maximized.
inline NodePtr clipped_surrogate_mean(Graph& g, NodePtr ratio, NodePtr adv, float eps) {
    auto s1 = g.mul(ratio, adv);
    auto s2 = g.mul(g.clampf(ratio, 1.f - eps, 1.f + eps), adv);
    return g.mean_all(g.minimum(s1, s2));
}

struct PpoStats {
    double loss = 0.0;
    double policy_loss = 0.0;   // negated surrogate
    double value_loss = 0.0;    // mean squared error, before value_coef
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;     // pre-clip, averaged over minibatches
    float eps_used = 0.f;
    double lr_scale = 1.0;
};

// Replays the window through time for each env minibatch and applies the
// clipped-surrogate update. `progress` in [0,1] drives the linear annealing
// of both the clip range and the learning rate.
inline PpoStats ppo_update(ModelBundle& model, const rollout::RolloutBatch& batch, Adam& adam,
                           Rng& shuffle_rng, double progress, const PpoConfig& cfg) {
    const int E = batch.num_envs, L = batch.len;
    if (E < cfg.minibatches)
        throw ContractError("ppo_update: need at least one env per minibatch");
    if (batch.advantage.size() != static_cast<size_t>(batch.size()) ||
        batch.ret.size() != static_cast<size_t>(batch.size()))
        throw ContractError("ppo_update: advantages missing; run compute_gae on the batch first");
    const double anneal = std::max(0.0, 1.0 - progress);
    const float eps = cfg.clip_eps * static_cast<float>(cfg.anneal_clip ? anneal : 1.0);
    const double lr_scale = cfg.anneal_lr ? anneal : 1.0;
    const int S = model.net.image_size, H = model.net.hidden_dim;
    std::vector<std::string> update_groups{"recurrent", "actor", "value"};
    if (cfg.update_backbone) update_groups.insert(update_groups.begin(), "backbone");
    const std::vector<std::string> names = model.store.group_names(update_groups);
    const std::vector<NodePtr> params = model.store.group_params(update_groups);

    PpoStats stats;
    stats.eps_used = eps;
    stats.lr_scale = lr_scale;
    std::int64_t clipped = 0, total = 0;
    double kl_sum = 0.0;
    int updates = 0;

    std::vector<int> order(static_cast<size_t>(E));
    for (int e = 0; e < E; ++e) order[static_cast<size_t>(e)] = e;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = E - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)))]);
        for (int mb = 0; mb < cfg.minibatches; ++mb) {
            const int lo = E * mb / cfg.minibatches, hi = E * (mb + 1) / cfg.minibatches;
            const int N = hi - lo;
            std::vector<int> envs_mb(order.begin() + lo, order.begin() + hi);

            Graph g(true);
            Array h0(Shape{N, H});
            for (int n = 0; n < N; ++n) {
                const Array& row = batch.init_hidden[static_cast<size_t>(envs_mb[static_cast<size_t>(n)])];
                if (row.numel() == H)
                    for (int j = 0; j < H; ++j) h0.at2(n, j) = row[j];
            }
            NodePtr h = g.constant(std::move(h0));
            NodePtr surr_sum, vsq_sum, plogp_sum;

            for (int t = 0; t < L; ++t) {
                Array obs(Shape{N, 3, S, S});
                Array adv(Shape{N}), ret(Shape{N}), lp_old(Shape{N}), mask(Shape{N});
                std::vector<int> prev(static_cast<size_t>(N)), act(static_cast<size_t>(N));
                const std::int64_t stride = 3LL * S * S;
                for (int n = 0; n < N; ++n) {
                    const int e = envs_mb[static_cast<size_t>(n)];
                    const rollout::Transition& tr = batch.at(e, t);
                    std::copy(tr.rgb.v.begin(), tr.rgb.v.end(), obs.v.begin() + n * stride);
                    const size_t flat = static_cast<size_t>(e) * L + t;
                    adv[n] = batch.advantage[flat];
                    ret[n] = batch.ret[flat];
                    lp_old[n] = tr.logp;
                    prev[static_cast<size_t>(n)] = tr.prev_action;
                    act[static_cast<size_t>(n)] = tr.action;
                    mask[n] = (t > 0 && batch.at(e, t - 1).done) ? 0.f : 1.f;
                }
                if (t > 0) h = g.scale_rows(h, g.constant(std::move(mask)));
                auto feat = model.backbone.forward(g, g.constant(std::move(obs))).features;
                h = model.core(g, feat, prev, h);

                auto lsm = g.log_softmax_rows(model.actor_logits(g, h));
                auto lp_new = g.pick_rows(lsm, act);
                auto ratio = g.exp_(g.sub(lp_new, g.constant(lp_old)));
                auto adv_c = g.constant(std::move(adv));
                auto s1 = g.mul(ratio, adv_c);
                auto s2 = g.mul(g.clampf(ratio, 1.f - eps, 1.f + eps), adv_c);
                auto surr = g.sum_all(g.minimum(s1, s2));

                auto verr = g.sub(model.value_of(g, h), g.constant(std::move(ret)));
                auto vsq = g.sum_all(g.mul(verr, verr));
                auto plogp = g.sum_all(g.mul(g.exp_(lsm), lsm));

                surr_sum = surr_sum ? g.add(surr_sum, surr) : surr;
                vsq_sum = vsq_sum ? g.add(vsq_sum, vsq) : vsq;
                plogp_sum = plogp_sum ? g.add(plogp_sum, plogp) : plogp;

                for (int n = 0; n < N; ++n) {
                    const float r = ratio->value[n];
                    if (std::abs(r - 1.f) > eps) ++clipped;
                    ++total;
                    kl_sum += static_cast<double>(lp_old[n]) - lp_new->value[n];
                }
            }

            const float inv = 1.f / static_cast<float>(N * L);
            auto policy_term = g.scale(surr_sum, -inv);
            auto value_term = g.scale(vsq_sum, cfg.value_coef * inv);
            auto entropy_term = g.scale(plogp_sum, cfg.entropy_coef * inv);
            auto loss = g.add(g.add(policy_term, value_term), entropy_term);

            model.store.zero_grad({"backbone", "recurrent", "actor", "value"});
            g.backward(loss);
            stats.grad_norm += clip_global_grad_norm(params, cfg.max_grad_norm);
            adam.step(model.store, names, lr_scale);

            stats.loss += loss->value[0];
            stats.policy_loss += policy_term->value[0];
            stats.value_loss += static_cast<double>(vsq_sum->value[0]) * inv;
            stats.entropy += -static_cast<double>(plogp_sum->value[0]) * inv;
            ++updates;
        }
    }
    const double d = updates > 0 ? static_cast<double>(updates) : 1.0;
    stats.loss /= d;
    stats.policy_loss /= d;
    stats.value_loss /= d;
    stats.entropy /= d;
    stats.grad_norm /= d;
    stats.clip_fraction = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
    stats.approx_kl = total > 0 ? kl_sum / static_cast<double>(total) : 0.0;
    return stats;
}

}  // namespace alp::policy
