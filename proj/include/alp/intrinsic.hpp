// Intrinsic reward machinery: random network distillation, a momentum copy of
// the backbone for stable reward embeddings, stochastic frame augmentations,
// and contrastive objectives (instance pairs or temporal prediction).
#pragma once

#include "alp/policy.hpp"

namespace alp::intrinsic {

using ndmath::Adam;
using ndmath::Graph;
using ndmath::NodePtr;
using ndmath::ParamStore;
using policy::Backbone;
using policy::ModelBundle;
using rollout::RolloutBatch;

struct IntrinsicConfig {
    int rnd_hidden = 512;
    int rnd_out = 64;
    int proj_hidden = 128;
    int proj_dim = 128;
    float tau = 0.07f;
    int contrastive_pairs = 128;
    int cpc_max_offset = 4;   // positives at most this many steps ahead
    float momentum_rho = 0.99f;
    double lr_reward = 1e-4;
};

struct MlpHead {
    NodePtr w1, b1, w2, b2;

    static MlpHead create(ParamStore& store, const std::string& prefix, int in, int hidden,
                          int out, Rng& rng, bool trainable = true) {
        MlpHead h;
        h.w1 = store.add(prefix + "_w1", policy::xavier_uniform(Shape{in, hidden}, in, hidden, rng),
                         trainable);
        h.b1 = store.add(prefix + "_b1", Array(Shape{hidden}), trainable);
        h.w2 = store.add(prefix + "_w2",
                         policy::xavier_uniform(Shape{hidden, out}, hidden, out, rng), trainable);
        h.b2 = store.add(prefix + "_b2", Array(Shape{out}), trainable);
        return h;
    }

    NodePtr forward(Graph& g, NodePtr x) const {
        return g.affine(g.relu(g.affine(x, w1, b1)), w2, b2);
    }

    std::vector<std::string> names(const std::string& prefix) const {
        return {prefix + "_w1", prefix + "_b1", prefix + "_w2", prefix + "_b2"};
    }
};

// Frozen random target network and a trained predictor; the reward is the
// squared embedding distance, which decays as states become familiar.
struct RndPair {
    MlpHead target;     // never trained
    MlpHead predictor;
    std::vector<std::string> train_names;

    static RndPair create(ParamStore& store, const IntrinsicConfig& cfg, int feature_dim,
                          Rng& rng) {
        RndPair r;
        r.target = MlpHead::create(store, "reward/rnd_target", feature_dim, cfg.rnd_hidden,
                                   cfg.rnd_out, rng, false);
        r.predictor = MlpHead::create(store, "reward/rnd_pred", feature_dim, cfg.rnd_hidden,
                                      cfg.rnd_out, rng, true);
        r.train_names = r.predictor.names("reward/rnd_pred");
        return r;
    }
};

struct CrlHeads {
    MlpHead proj;  // feature -> contrastive embedding
    MlpHead cpc;   // predicts the future embedding from the current one
    std::vector<std::string> train_names;

    static CrlHeads create(ParamStore& store, const IntrinsicConfig& cfg, int feature_dim,
                           Rng& rng) {
        CrlHeads h;
        h.proj = MlpHead::create(store, "reward/proj", feature_dim, cfg.proj_hidden, cfg.proj_dim,
                                 rng, true);
        h.cpc = MlpHead::create(store, "reward/cpc", cfg.proj_dim, cfg.proj_hidden, cfg.proj_dim,
                                rng, true);
        h.train_names = h.proj.names("reward/proj");
        for (const auto& n : h.cpc.names("reward/cpc")) h.train_names.push_back(n);
        return h;
    }
};

// EMA copy of the live backbone; rewards are computed against this slowly
// moving encoder so they do not chase the optimization step to step.
struct MomentumEncoder {
    ParamStore store;
    Backbone net;

    static MomentumEncoder create_from(const ModelBundle& model) {
        MomentumEncoder enc;
        Rng scratch(0);  // values are overwritten by the copy below
        enc.net = Backbone::create(enc.store, "backbone", model.net.image_size,
                                   model.net.feature_dim, scratch, false);
        for (const auto& name : enc.store.names)
            enc.store.get(name)->value = model.store.get(name)->value;
        return enc;
    }

    NodePtr encode(Graph& g, NodePtr obs) const { return net.forward(g, obs).features; }
};

inline void momentum_update(MomentumEncoder& enc, const ModelBundle& model, float rho) {
    for (const auto& name : enc.store.names) {
        Array& shadow = enc.store.get(name)->value;
        const Array& live = model.store.get(name)->value;
        check_same_shape(shadow.shape, live.shape, "momentum_update");
        for (size_t i = 0; i < shadow.v.size(); ++i)
            shadow.v[i] = rho * shadow.v[i] + (1.f - rho) * live.v[i];
    }
}

// ---- frame augmentations (deterministic given the rng state) ----

inline Array hflip_chw(const Array& x) {
    const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
    Array out(x.shape);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                out[(static_cast<std::int64_t>(c) * H + y) * W + xx] =
                    x[(static_cast<std::int64_t>(c) * H + y) * W + (W - 1 - xx)];
    return out;
}

// factor 1 = identity, <1 toward gray, >1 more vivid; clamped to [0,1]
inline Array saturate_chw(const Array& x, float factor) {
    const int H = x.extent(1), W = x.extent(2);
    if (x.extent(0) != 3) throw ShapeError("saturate_chw: expected 3 channels");
    Array out(x.shape);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (std::int64_t p = 0; p < plane; ++p) {
        const float gray = (x[p] + x[plane + p] + x[2 * plane + p]) / 3.f;
        for (int c = 0; c < 3; ++c) {
            const float v = gray + factor * (x[c * plane + p] - gray);
            out[c * plane + p] = std::min(1.f, std::max(0.f, v));
        }
    }
    return out;
}

// Crops the side x side square at (x0, y0) and resizes back to the full frame
// with bilinear sampling. The full-frame crop is the identity.
inline Array resized_crop_chw(const Array& x, int x0, int y0, int side) {
    const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (side < 1 || x0 < 0 || y0 < 0 || x0 + side > W || y0 + side > H)
        throw ContractError("resized_crop_chw: crop window out of range");
    Array out(x.shape);
    for (int i = 0; i < H; ++i) {
        const float sy = static_cast<float>(y0) +
                         (static_cast<float>(i) + 0.5f) * static_cast<float>(side) /
                             static_cast<float>(H) -
                         0.5f;
        const int iy = static_cast<int>(std::floor(sy));
        const float fy = sy - static_cast<float>(iy);
        const int y_lo = std::min(std::max(iy, y0), y0 + side - 1);
        const int y_hi = std::min(std::max(iy + 1, y0), y0 + side - 1);
        for (int j = 0; j < W; ++j) {
            const float sx = static_cast<float>(x0) +
                             (static_cast<float>(j) + 0.5f) * static_cast<float>(side) /
                                 static_cast<float>(W) -
                             0.5f;
            const int ix = static_cast<int>(std::floor(sx));
            const float fx = sx - static_cast<float>(ix);
            const int x_lo = std::min(std::max(ix, x0), x0 + side - 1);
            const int x_hi = std::min(std::max(ix + 1, x0), x0 + side - 1);
            for (int c = 0; c < C; ++c) {
                auto at = [&](int yy, int xx) {
                    return x[(static_cast<std::int64_t>(c) * H + yy) * W + xx];
                };
                const float top = at(y_lo, x_lo) * (1.f - fx) + at(y_lo, x_hi) * fx;
                const float bot = at(y_hi, x_lo) * (1.f - fx) + at(y_hi, x_hi) * fx;
                out[(static_cast<std::int64_t>(c) * H + i) * W + j] =
                    top * (1.f - fy) + bot * fy;
            }
        }
    }
    return out;
}

// Horizontal flip (p=0.5), resized crop (area scale in [0.6, 1]), saturation
// jitter (factor in [0.7, 1.3]). Draws consume the rng in a fixed order.
inline Array augment_frame(const Array& x, Rng& rng) {
    const int H = x.extent(1), W = x.extent(2);
    const bool flip = rng.bernoulli(0.5);
    const float area = rng.uniform_f(0.6f, 1.f);
    const int side = std::max(1, std::min(H, static_cast<int>(std::lround(
                                                 std::sqrt(area) * static_cast<float>(H)))));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - side + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - side + 1)));
    const float sat = rng.uniform_f(0.7f, 1.3f);

    Array out = resized_crop_chw(x, x0, y0, side);
    if (flip) out = hflip_chw(out);
    return saturate_chw(out, sat);
}

// ---- rewards ----

// Squared target/predictor embedding distance per frame. Inputs [N,3,S,S].
inline std::vector<float> rnd_reward(const MomentumEncoder& enc, const RndPair& rnd,
                                     const Array& frames) {
    Graph g(false);
    auto f = enc.encode(g, g.constant(frames));
    auto t = rnd.target.forward(g, f);
    auto p = rnd.predictor.forward(g, f);
    const int N = t->value.extent(0), D = t->value.extent(1);
    std::vector<float> out(static_cast<size_t>(N));
    for (int n = 0; n < N; ++n) {
        double acc = 0.0;
        for (int d = 0; d < D; ++d) {
            const double diff =
                static_cast<double>(t->value.at2(n, d)) - static_cast<double>(p->value.at2(n, d));
            acc += diff * diff;
        }
        out[static_cast<size_t>(n)] = static_cast<float>(acc);
    }
    return out;
}

// One regression step of the predictor toward the frozen target on the given
// frames; returns the loss before the step.
inline double rnd_update(const MomentumEncoder& enc, const RndPair& rnd, ParamStore& store,
                         const Array& frames, Adam& adam, double lr_scale = 1.0) {
    Graph g(true);
    auto f = enc.encode(g, g.constant(frames));
    auto t = rnd.target.forward(g, f);
    auto p = rnd.predictor.forward(g, f);
    auto loss = g.mse(p, t);
    store.zero_grad({"reward"});
    g.backward(loss);
    adam.step(store, rnd.train_names, lr_scale);
    return loss->value[0];
}

// Dissimilarity of two independently augmented views under the momentum
// encoder: 1 - cos(z1, z2), in [0, 2]. Augmentations are keyed by
// (env, step_index) so batching cannot change any sample's reward.
inline std::vector<float> crl_reward(const MomentumEncoder& enc, const CrlHeads& heads,
                                     const RolloutBatch& batch, std::uint64_t aug_seed) {
    const std::int64_t n = batch.size();
    const Shape& fs = batch.steps[0].rgb.shape;
    Shape s{static_cast<int>(n)};
    s.insert(s.end(), fs.begin(), fs.end());
    Array v1(s), v2(s);
    const std::int64_t stride = batch.steps[0].rgb.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const rollout::Transition& tr = batch.steps[static_cast<size_t>(i)];
        const std::uint64_t key =
            (static_cast<std::uint64_t>(tr.scene_id) << 48) ^ tr.step_index;
        Rng r1(derive_seed(aug_seed, key * 2));
        Rng r2(derive_seed(aug_seed, key * 2 + 1));
        const Array a1 = augment_frame(tr.rgb, r1);
        const Array a2 = augment_frame(tr.rgb, r2);
        std::copy(a1.v.begin(), a1.v.end(), v1.v.begin() + i * stride);
        std::copy(a2.v.begin(), a2.v.end(), v2.v.begin() + i * stride);
    }
    Graph g(false);
    auto z1 = g.normalize_rows(heads.proj.forward(g, enc.encode(g, g.constant(std::move(v1)))));
    auto z2 = g.normalize_rows(heads.proj.forward(g, enc.encode(g, g.constant(std::move(v2)))));
    const int D = z1->value.extent(1);
    std::vector<float> out(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int d = 0; d < D; ++d)
            dot += static_cast<double>(z1->value.at2(static_cast<int>(i), d)) *
                   static_cast<double>(z2->value.at2(static_cast<int>(i), d));
        out[static_cast<size_t>(i)] = static_cast<float>(1.0 - dot);
    }
    return out;
}

// ---- contrastive objectives over the live backbone ----

enum class ContrastiveMode { kSimCLR, kCPC };

// Instance discrimination: two augmented views per sampled frame; each row's
// positive is its own second view, negatives are the other rows.
inline NodePtr simclr_loss(Graph& g, const ModelBundle& model, const CrlHeads& heads,
                           const RolloutBatch& batch, Rng& rng, const IntrinsicConfig& cfg,
                           int* pairs_out = nullptr) {
    const std::int64_t total = batch.size();
    const int M = static_cast<int>(std::min<std::int64_t>(cfg.contrastive_pairs, total));
    if (M < 2) throw ContractError("simclr_loss: need at least two frames");
    std::vector<std::int64_t> pool(static_cast<size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) pool[static_cast<size_t>(i)] = i;
    for (int i = 0; i < M; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }

    const Shape& fs = batch.steps[0].rgb.shape;
    Shape s{M};
    s.insert(s.end(), fs.begin(), fs.end());
    Array v1(s), v2(s);
    const std::int64_t stride = batch.steps[0].rgb.numel();
    for (int i = 0; i < M; ++i) {
        const Array& src = batch.steps[static_cast<size_t>(pool[static_cast<size_t>(i)])].rgb;
        const Array a1 = augment_frame(src, rng);
        const Array a2 = augment_frame(src, rng);
        std::copy(a1.v.begin(), a1.v.end(), v1.v.begin() + static_cast<std::int64_t>(i) * stride);
        std::copy(a2.v.begin(), a2.v.end(), v2.v.begin() + static_cast<std::int64_t>(i) * stride);
    }
    auto embed = [&](Array v) {
        auto f = model.backbone.forward(g, g.constant(std::move(v))).features;
        return g.normalize_rows(heads.proj.forward(g, f));
    };
    auto z1 = embed(std::move(v1));
    auto z2 = embed(std::move(v2));
    auto sim = g.scale(g.matmul_nt(z1, z2), 1.f / cfg.tau);
    std::vector<int> labels(static_cast<size_t>(M));
    for (int i = 0; i < M; ++i) labels[static_cast<size_t>(i)] = i;
    if (pairs_out) *pairs_out = M;
    return g.cross_entropy_rows(sim, labels);
}

// Temporal prediction: from each env pick (t, t+delta) within one episode,
// delta <= cfg.cpc_max_offset; the predicted future embedding must identify
// its env's true future among the other envs' futures.
inline NodePtr cpc_loss(Graph& g, const ModelBundle& model, const CrlHeads& heads,
                        const RolloutBatch& batch, Rng& rng, const IntrinsicConfig& cfg,
                        int* pairs_out = nullptr) {
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;  // flat (anchor, future)
    for (int e = 0; e < batch.num_envs; ++e) {
        for (int attempt = 0; attempt < 16; ++attempt) {
            if (batch.len < 2) break;
            const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(batch.len - 1)));
            const int max_d = std::min(cfg.cpc_max_offset, batch.len - 1 - t);
            const int delta = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_d)));
            bool crosses = false;
            for (int k = t; k < t + delta; ++k)
                if (batch.at(e, k).done) crosses = true;
            if (crosses) continue;
            pairs.emplace_back(static_cast<std::int64_t>(e) * batch.len + t,
                               static_cast<std::int64_t>(e) * batch.len + t + delta);
            break;
        }
    }
    const int M = static_cast<int>(pairs.size());
    if (M < 2)
        throw ContractError("cpc_loss: need temporal pairs from at least two envs");

    const Shape& fs = batch.steps[0].rgb.shape;
    Shape s{M};
    s.insert(s.end(), fs.begin(), fs.end());
    Array anchors(s), futures(s);
    const std::int64_t stride = batch.steps[0].rgb.numel();
    for (int i = 0; i < M; ++i) {
        const auto& [af, ff] = pairs[static_cast<size_t>(i)];
        const Array& a = batch.steps[static_cast<size_t>(af)].rgb;
        const Array& f = batch.steps[static_cast<size_t>(ff)].rgb;
        std::copy(a.v.begin(), a.v.end(), anchors.v.begin() + static_cast<std::int64_t>(i) * stride);
        std::copy(f.v.begin(), f.v.end(), futures.v.begin() + static_cast<std::int64_t>(i) * stride);
    }
    auto fa = model.backbone.forward(g, g.constant(std::move(anchors))).features;
    auto za = g.normalize_rows(heads.cpc.forward(g, heads.proj.forward(g, fa)));
    auto ff2 = model.backbone.forward(g, g.constant(std::move(futures))).features;
    auto zf = g.normalize_rows(heads.proj.forward(g, ff2));
    auto sim = g.scale(g.matmul_nt(za, zf), 1.f / cfg.tau);
    std::vector<int> labels(static_cast<size_t>(M));
    for (int i = 0; i < M; ++i) labels[static_cast<size_t>(i)] = i;
    if (pairs_out) *pairs_out = M;
    return g.cross_entropy_rows(sim, labels);
}

struct ContrastiveResult {
    double loss = 0.0;
    int pairs = 0;
};

// Builds the selected loss and applies one optimization step to the backbone
// and the contrastive heads.
inline ContrastiveResult contrastive_update(ModelBundle& model, const CrlHeads& heads,
                                            const RolloutBatch& batch, Adam& adam, Rng& rng,
                                            ContrastiveMode mode, const IntrinsicConfig& cfg,
                                            double lr_scale = 1.0) {
    Graph g(true);
    ContrastiveResult res;
    NodePtr loss = mode == ContrastiveMode::kSimCLR
                       ? simclr_loss(g, model, heads, batch, rng, cfg, &res.pairs)
                       : cpc_loss(g, model, heads, batch, rng, cfg, &res.pairs);
    model.store.zero_grad({"backbone", "reward"});
    g.backward(loss);
    std::vector<std::string> names = model.store.group_names({"backbone"});
    for (const auto& n : heads.train_names) names.push_back(n);
    adam.step(model.store, names, lr_scale);
    res.loss = loss->value[0];
    return res;
}

}  // namespace alp::intrinsic
