// k-step inverse dynamics: from k+1 consecutive frames, predict the k actions
// taken between them. Gradients shape the shared backbone toward
// action-relevant state; the policy heads never see them.
#pragma once

#include "alp/intrinsic.hpp"

namespace alp::actionrep {

using intrinsic::MlpHead;
using ndmath::Adam;
using ndmath::Graph;
using ndmath::NodePtr;
using ndmath::ParamStore;
using policy::ModelBundle;
using rollout::RolloutBatch;

struct IdmConfig {
    int k = 8;
    int proj_hidden = 128;
    int proj_dim = 128;
    int pred_hidden = 128;
    int epochs = 4;
    double lr = 2.5e-4;
};

struct IdmHeads {
    MlpHead proj;                    // per-frame projection
    NodePtr w1, b1, w2, b2, w3, b3;  // joint predictor over k+1 projections
    int k = 0;
    int proj_dim = 0;
    std::vector<std::string> train_names;

    static IdmHeads create(ParamStore& store, const IdmConfig& cfg, int feature_dim, Rng& rng) {
        if (cfg.k < 1) throw ContractError("IdmHeads: k must be >= 1");
        IdmHeads h;
        h.k = cfg.k;
        h.proj_dim = cfg.proj_dim;
        h.proj = MlpHead::create(store, "idm/proj", feature_dim, cfg.proj_hidden, cfg.proj_dim,
                                 rng, true);
        const int in = (cfg.k + 1) * cfg.proj_dim;
        const int out = cfg.k * worldsim::kNumActions;
        h.w1 = store.add("idm/pred_w1",
                         policy::xavier_uniform(Shape{in, cfg.pred_hidden}, in, cfg.pred_hidden, rng));
        h.b1 = store.add("idm/pred_b1", Array(Shape{cfg.pred_hidden}));
        h.w2 = store.add("idm/pred_w2",
                         policy::xavier_uniform(Shape{cfg.pred_hidden, cfg.pred_hidden},
                                                cfg.pred_hidden, cfg.pred_hidden, rng));
        h.b2 = store.add("idm/pred_b2", Array(Shape{cfg.pred_hidden}));
        h.w3 = store.add("idm/pred_w3",
                         policy::xavier_uniform(Shape{cfg.pred_hidden, out}, cfg.pred_hidden, out,
                                                rng));
        h.b3 = store.add("idm/pred_b3", Array(Shape{out}));
        h.train_names = h.proj.names("idm/proj");
        for (const char* n : {"idm/pred_w1", "idm/pred_b1", "idm/pred_w2", "idm/pred_b2",
                              "idm/pred_w3", "idm/pred_b3"})
            h.train_names.push_back(n);
        return h;
    }
};

struct Window {
    int env = 0;
    int start = 0;  // frames start..start+k, actions start..start+k-1
};

// Windows must not straddle an episode end: a done inside the action range
// breaks frame continuity. A 10-step episode with k=8 yields exactly 2.
inline std::vector<Window> extract_windows(const RolloutBatch& batch, int k) {
    std::vector<Window> out;
    for (int e = 0; e < batch.num_envs; ++e)
        for (int start = 0; start + k <= batch.len - 1; ++start) {
            bool crosses = false;
            for (int j = start; j < start + k; ++j)
                if (batch.at(e, j).done) crosses = true;
            if (!crosses) out.push_back({e, start});
        }
    return out;
}

// Mean cross entropy over all k action slots of all windows. `logits_out`
// receives the [W*k, num_actions] logits node for accuracy readouts.
inline NodePtr idm_loss(Graph& g, const ModelBundle& model, const IdmHeads& heads,
                        const RolloutBatch& batch, const std::vector<Window>& windows,
                        NodePtr* logits_out = nullptr) {
    if (windows.empty()) throw ContractError("idm_loss: no intact windows in batch");
    const int W = static_cast<int>(windows.size()), k = heads.k;

    auto feats = model.backbone.forward(g, g.constant(rollout::pack_frames(batch))).features;
    auto proj = heads.proj.forward(g, feats);  // [E*L, P]

    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(W) * (k + 1));
    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(W) * k);
    for (const Window& w : windows) {
        for (int j = 0; j <= k; ++j) idx.push_back(w.env * batch.len + w.start + j);
        for (int j = 0; j < k; ++j) labels.push_back(batch.at(w.env, w.start + j).action);
    }
    // gather rows in window order, then fold the k+1 projections of each
    // window into one row
    auto grouped = g.reshape(g.gather_rows(proj, idx), Shape{W, (k + 1) * heads.proj_dim});
    auto h = g.relu(g.affine(grouped, heads.w1, heads.b1));
    h = g.relu(g.affine(h, heads.w2, heads.b2));
    auto logits = g.affine(h, heads.w3, heads.b3);  // [W, k*A]
    auto per_slot = g.reshape(logits, Shape{W * k, worldsim::kNumActions});
    if (logits_out) *logits_out = per_slot;
    return g.cross_entropy_rows(per_slot, labels);
}

inline double idm_accuracy(const Array& slot_logits, const std::vector<int>& labels) {
    const int N = slot_logits.extent(0), A = slot_logits.extent(1);
    if (N == 0 || labels.size() != static_cast<size_t>(N))
        throw ContractError("idm_accuracy: label count mismatch");
    int hits = 0;
    for (int n = 0; n < N; ++n) {
        int best = 0;
        for (int a = 1; a < A; ++a)
            if (slot_logits.at2(n, a) > slot_logits.at2(n, best)) best = a;
        hits += best == labels[static_cast<size_t>(n)];
    }
    return static_cast<double>(hits) / static_cast<double>(N);
}

inline std::vector<int> window_labels(const RolloutBatch& batch,
                                      const std::vector<Window>& windows, int k) {
    std::vector<int> labels;
    for (const Window& w : windows)
        for (int j = 0; j < k; ++j) labels.push_back(batch.at(w.env, w.start + j).action);
    return labels;
}

struct IdmStats {
    double loss = 0.0;
    double accuracy = 0.0;
    int windows = 0;
};

// Evaluation without gradients, e.g. on held-out windows.
inline IdmStats idm_eval(const ModelBundle& model, const IdmHeads& heads,
                         const RolloutBatch& batch) {
    Graph g(false);
    const std::vector<Window> windows = extract_windows(batch, heads.k);
    NodePtr logits;
    auto loss = idm_loss(g, model, heads, batch, windows, &logits);
    return {loss->value[0], idm_accuracy(logits->value, window_labels(batch, windows, heads.k)),
            static_cast<int>(windows.size())};
}

// cfg.epochs full passes over the window set; steps backbone + idm heads only.
// Stats describe the last epoch.
inline IdmStats idm_update(ModelBundle& model, const IdmHeads& heads, const RolloutBatch& batch,
                           Adam& adam, const IdmConfig& cfg, double lr_scale = 1.0) {
    const std::vector<Window> windows = extract_windows(batch, heads.k);
    if (windows.empty()) throw ContractError("idm_update: no intact windows in batch");
    std::vector<std::string> names = model.store.group_names({"backbone"});
    for (const auto& n : heads.train_names) names.push_back(n);

    IdmStats stats;
    stats.windows = static_cast<int>(windows.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Graph g(true);
        NodePtr logits;
        auto loss = idm_loss(g, model, heads, batch, windows, &logits);
        model.store.zero_grad({"backbone", "idm"});
        g.backward(loss);
        adam.step(model.store, names, lr_scale);
        stats.loss = loss->value[0];
        stats.accuracy = idm_accuracy(logits->value, window_labels(batch, windows, heads.k));
    }
    return stats;
}

}  // namespace alp::actionrep
