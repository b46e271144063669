// Labeled-data collection during exploration, the on-disk dataset format,
// perception heads on top of the shared backbone, finetuning, and split-based
// evaluation on freshly rendered frames.
#pragma once

#include <array>
#include <iostream>
#include <map>

#include "alp/checkpoint.hpp"
#include "alp/policy.hpp"
#include "alp/rollout.hpp"

namespace alp::downstream {

using ndmath::Adam;
using ndmath::Graph;
using ndmath::NodePtr;
using ndmath::ParamStore;
using policy::Backbone;
using policy::NetConfig;
using rollout::RolloutBatch;
using worldsim::kNumCategories;

// ---- scene splits ----

struct SceneBundle {
    worldsim::SceneSpec spec;
    worldsim::SpawnMap map;
    int id = 0;  // equals the generation seed
};

struct SplitSpec {
    std::string name;            // "train" or "test"
    std::uint64_t seed_base = 0;
    int count = 0;
};

inline std::vector<SceneBundle> make_scenes(const SplitSpec& split,
                                            const worldsim::GenProfile& profile = {}) {
    if (split.count < 1) throw ContractError("make_scenes: split needs at least one scene");
    std::vector<SceneBundle> out;
    out.reserve(static_cast<size_t>(split.count));
    for (int i = 0; i < split.count; ++i) {
        SceneBundle b;
        b.id = static_cast<int>(split.seed_base) + i;
        b.spec = worldsim::generate_scene(split.seed_base + static_cast<std::uint64_t>(i), profile);
        b.map = worldsim::build_spawn_map(b.spec);
        out.push_back(std::move(b));
    }
    return out;
}

// ---- labeled samples ----

struct LabeledSample {
    std::uint16_t height = 0, width = 0;
    std::vector<std::uint8_t> rgb;       // [3,H,W] planar, quantized to bytes
    std::vector<std::uint8_t> semantic;  // H*W category ids, 255 = background
    std::vector<float> depth;            // H*W, fraction of max range
    std::uint32_t scene_id = 0;
    std::uint64_t step = 0;

    // Training input reconstructed from the stored bytes.
    Array frame() const {
        const int H = height, W = width;
        Array a(Shape{3, H, W});
        for (size_t i = 0; i < rgb.size(); ++i) a[static_cast<std::int64_t>(i)] = rgb[i] / 255.f;
        return a;
    }
};

inline std::uint8_t quant8(float v) {
    const float c = std::min(1.f, std::max(0.f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

inline LabeledSample make_sample(const worldsim::Observation& obs, std::uint32_t scene_id,
                                 std::uint64_t step) {
    LabeledSample s;
    s.height = static_cast<std::uint16_t>(obs.height);
    s.width = static_cast<std::uint16_t>(obs.width);
    s.rgb.resize(obs.rgb.v.size());
    for (size_t i = 0; i < s.rgb.size(); ++i) s.rgb[i] = quant8(obs.rgb.v[i]);
    s.semantic = obs.semantic;
    s.depth = obs.depth.v;
    s.scene_id = scene_id;
    s.step = step;
    return s;
}

// ---- dataset file ----

constexpr std::uint32_t kDatasetVersion = 1;

inline void write_sample(std::ostream& os, const LabeledSample& s) {
    const size_t pixels = static_cast<size_t>(s.height) * s.width;
    if (s.rgb.size() != 3 * pixels || s.semantic.size() != pixels || s.depth.size() != pixels)
        throw ContractError("dataset: sample buffers disagree with its extents");
    binio::write_pod<std::uint16_t>(os, s.height);
    binio::write_pod<std::uint16_t>(os, s.width);
    binio::write_bytes(os, s.rgb.data(), s.rgb.size());
    binio::write_bytes(os, s.semantic.data(), s.semantic.size());
    binio::write_f32s(os, s.depth.data(), s.depth.size());
    binio::write_pod<std::uint32_t>(os, s.scene_id);
    binio::write_pod<std::uint64_t>(os, s.step);
}

inline LabeledSample read_sample(std::istream& is) {
    LabeledSample s;
    s.height = binio::read_pod<std::uint16_t>(is, "sample height");
    s.width = binio::read_pod<std::uint16_t>(is, "sample width");
    const size_t pixels = static_cast<size_t>(s.height) * s.width;
    s.rgb.resize(3 * pixels);
    s.semantic.resize(pixels);
    s.depth.resize(pixels);
    binio::read_bytes(is, s.rgb.data(), s.rgb.size(), "sample rgb");
    binio::read_bytes(is, s.semantic.data(), s.semantic.size(), "sample semantic");
    binio::read_f32s(is, s.depth.data(), s.depth.size(), "sample depth");
    s.scene_id = binio::read_pod<std::uint32_t>(is, "sample scene id");
    s.step = binio::read_pod<std::uint64_t>(is, "sample step");
    return s;
}

// Streaming writer: magic "ALPD", version, sample count (patched on close),
// then the records. Appending in a fixed order makes reruns byte-identical.
class DatasetWriter {
public:
    explicit DatasetWriter(const std::string& path) : os_(binio::open_out(path)), path_(path) {
        binio::write_magic(os_, "ALPD");
        binio::write_pod<std::uint32_t>(os_, kDatasetVersion);
        count_pos_ = os_.tellp();
        binio::write_pod<std::uint32_t>(os_, 0);
    }
    ~DatasetWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void append(const LabeledSample& s) {
        if (!os_.is_open()) throw IoError("dataset: writer already closed");
        write_sample(os_, s);
        ++count_;
    }

    std::uint32_t count() const { return count_; }

    void close() {
        if (!os_.is_open()) return;
        os_.seekp(count_pos_);
        binio::write_pod<std::uint32_t>(os_, count_);
        os_.flush();
        if (!os_) throw IoError("dataset: write failed: " + path_);
        os_.close();
    }

private:
    std::ofstream os_;
    std::string path_;
    std::streampos count_pos_;
    std::uint32_t count_ = 0;
};

inline std::vector<LabeledSample> load_dataset(std::istream& is) {
    binio::expect_magic(is, "ALPD", "dataset");
    const auto version = binio::read_pod<std::uint32_t>(is, "dataset version");
    if (version != kDatasetVersion)
        throw IoError("dataset: unsupported version " + std::to_string(version));
    const auto count = binio::read_pod<std::uint32_t>(is, "dataset count");
    std::vector<LabeledSample> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(read_sample(is));
    return out;
}

inline std::vector<LabeledSample> load_dataset(const std::string& path) {
    auto is = binio::open_in(path);
    return load_dataset(is);
}

inline void save_dataset(const std::string& path, const std::vector<LabeledSample>& samples) {
    DatasetWriter w(path);
    for (const auto& s : samples) w.append(s);
    w.close();
}

// ---- labeled sampling from rollouts ----

// Per environment: `per_env` window frames chosen uniformly without
// replacement, labels rendered fresh at the stored pose. Asking for more
// frames than the window holds takes everything and warns.
inline std::vector<LabeledSample> sample_labeled(const RolloutBatch& batch,
                                                 const std::vector<SceneBundle>& scenes,
                                                 int per_env, int image_size, Rng& rng) {
    if (per_env < 1) throw ContractError("sample_labeled: budget must be >= 1");
    std::map<int, const SceneBundle*> by_id;
    for (const auto& b : scenes) by_id[b.id] = &b;

    std::vector<LabeledSample> out;
    for (int e = 0; e < batch.num_envs; ++e) {
        int m = per_env;
        if (m > batch.len) {
            std::cerr << "sample_labeled: budget " << per_env << " > window " << batch.len
                      << ", taking all frames\n";
            m = batch.len;
        }
        std::vector<int> idx(static_cast<size_t>(batch.len));
        for (int t = 0; t < batch.len; ++t) idx[static_cast<size_t>(t)] = t;
        for (int i = 0; i < m; ++i) {
            const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                   batch.len - i)));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        std::sort(idx.begin(), idx.begin() + m);
        for (int i = 0; i < m; ++i) {
            const rollout::Transition& tr = batch.at(e, idx[static_cast<size_t>(i)]);
            const auto it = by_id.find(tr.scene_id);
            if (it == by_id.end())
                throw ContractError("sample_labeled: unknown scene id " +
                                    std::to_string(tr.scene_id));
            const worldsim::Observation obs =
                worldsim::render(it->second->spec, tr.pose, image_size, image_size);
            out.push_back(make_sample(obs, static_cast<std::uint32_t>(tr.scene_id),
                                      tr.step_index));
        }
    }
    return out;
}

// ---- perception model ----

enum class Task { kSegmentation, kDepth, kPresence, kAll };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::kSegmentation: return "segmentation";
        case Task::kDepth: return "depth";
        case Task::kPresence: return "presence";
        case Task::kAll: return "all";
    }
    throw ContractError("task_name: bad task");
}

inline Task parse_task(const std::string& s) {
    for (Task t : {Task::kSegmentation, Task::kDepth, Task::kPresence, Task::kAll})
        if (s == task_name(t)) return t;
    throw ContractError("unknown task '" + s + "'");
}

constexpr int kSegClasses = kNumCategories + 1;   // categories + background
constexpr int kBackgroundClass = kNumCategories;  // dense label for id 255

// Backbone plus three heads. Segmentation and depth upsample the conv map
// back to full resolution with two transposed convs (kernel = stride = 4,
// undoing the 16x reduction); presence pools the map globally.
struct PerceptionModel {
    NetConfig net;
    ParamStore store;
    Backbone backbone;
    NodePtr seg_w1, seg_b1, seg_w2, seg_b2;
    NodePtr dep_w1, dep_b1, dep_w2, dep_b2;
    NodePtr pres_w, pres_b;

    static PerceptionModel create(const NetConfig& net, std::uint64_t seed) {
        PerceptionModel m;
        m.net = net;
        Rng rng(derive_seed(seed, 0xd0d7ULL));
        m.backbone =
            Backbone::create(m.store, "backbone", net.image_size, net.feature_dim, rng);
        const int C = Backbone::kChannels[2], mid = 16, k = 4;
        auto tconv_pair = [&](const char* prefix, int out_ch, NodePtr& w1, NodePtr& b1,
                              NodePtr& w2, NodePtr& b2) {
            w1 = m.store.add(std::string("head/") + prefix + "_up1_w",
                             policy::he_normal(Shape{C, mid, k, k}, C * k * k, rng));
            b1 = m.store.add(std::string("head/") + prefix + "_up1_b", Array(Shape{mid}));
            w2 = m.store.add(std::string("head/") + prefix + "_up2_w",
                             policy::he_normal(Shape{mid, out_ch, k, k}, mid * k * k, rng));
            b2 = m.store.add(std::string("head/") + prefix + "_up2_b", Array(Shape{out_ch}));
        };
        tconv_pair("seg", kSegClasses, m.seg_w1, m.seg_b1, m.seg_w2, m.seg_b2);
        tconv_pair("depth", 1, m.dep_w1, m.dep_b1, m.dep_w2, m.dep_b2);
        m.pres_w = m.store.add("head/presence_w",
                               policy::xavier_uniform(Shape{C, kNumCategories}, C,
                                                      kNumCategories, rng));
        m.pres_b = m.store.add("head/presence_b", Array(Shape{kNumCategories}));
        return m;
    }

    // Loads backbone weights from a Stage-1 checkpoint; head weights keep
    // their fresh initialization.
    int load_backbone(const std::string& path) {
        return ndmath::load_checkpoint_into(path, store, {"backbone"});
    }

    NodePtr conv_map(Graph& g, NodePtr frames) const { return backbone.forward(g, frames).conv_map; }

    NodePtr seg_logits(Graph& g, NodePtr map) const {
        auto h = g.relu(g.tconv2d(map, seg_w1, seg_b1, 4));
        return g.tconv2d(h, seg_w2, seg_b2, 4);  // [N, 7, S, S]
    }

    NodePtr depth_map(Graph& g, NodePtr map) const {
        auto h = g.relu(g.tconv2d(map, dep_w1, dep_b1, 4));
        return g.tconv2d(h, dep_w2, dep_b2, 4);  // [N, 1, S, S]
    }

    NodePtr presence_logits(Graph& g, NodePtr map) const {
        const int N = map->value.extent(0), C = map->value.extent(1);
        const int hw = map->value.extent(2) * map->value.extent(3);
        auto rows = g.reshape(map, Shape{N * C, hw});
        auto pooled = g.matmul_nt(rows, g.constant(Array(Shape{1, hw}, 1.f / hw)));
        return g.affine(g.reshape(pooled, Shape{N, C}), pres_w, pres_b);  // [N, 6]
    }
};

// ---- finetuning ----

struct FinetuneConfig {
    Task task = Task::kSegmentation;
    int epochs = 20;
    int batch = 16;
    double lr = 1e-3;
};

struct FinetuneStats {
    std::vector<double> epoch_loss;  // dataset-weighted mean per epoch
};

namespace detail {

inline Array stack_frames(const std::vector<const LabeledSample*>& batch, int image_size) {
    const int N = static_cast<int>(batch.size());
    Array x(Shape{N, 3, image_size, image_size});
    const std::int64_t per = static_cast<std::int64_t>(3) * image_size * image_size;
    for (int i = 0; i < N; ++i) {
        const LabeledSample& s = *batch[static_cast<size_t>(i)];
        if (s.height != image_size || s.width != image_size)
            throw ContractError("finetune: sample is " + std::to_string(s.width) + "x" +
                                std::to_string(s.height) + " but the model expects " +
                                std::to_string(image_size));
        for (std::int64_t j = 0; j < per; ++j) x[i * per + j] = s.rgb[static_cast<size_t>(j)] / 255.f;
    }
    return x;
}

inline std::vector<int> seg_labels(const std::vector<const LabeledSample*>& batch) {
    std::vector<int> labels;
    for (const LabeledSample* s : batch)
        for (std::uint8_t id : s->semantic)
            labels.push_back(id == worldsim::kBackgroundId ? kBackgroundClass : id);
    return labels;
}

inline Array depth_target(const std::vector<const LabeledSample*>& batch, int image_size) {
    const int N = static_cast<int>(batch.size());
    Array t(Shape{N, 1, image_size, image_size});
    const std::int64_t per = static_cast<std::int64_t>(image_size) * image_size;
    for (int i = 0; i < N; ++i)
        for (std::int64_t j = 0; j < per; ++j)
            t[i * per + j] = batch[static_cast<size_t>(i)]->depth[static_cast<size_t>(j)];
    return t;
}

inline Array presence_target(const std::vector<const LabeledSample*>& batch) {
    const int N = static_cast<int>(batch.size());
    Array t(Shape{N, kNumCategories});
    for (int i = 0; i < N; ++i)
        for (std::uint8_t id : batch[static_cast<size_t>(i)]->semantic)
            if (id != worldsim::kBackgroundId) t.at2(i, id) = 1.f;
    return t;
}

}  // namespace detail

inline NodePtr task_loss(Graph& g, const PerceptionModel& m,
                         const std::vector<const LabeledSample*>& batch, Task task) {
    auto map = m.conv_map(g, g.constant(detail::stack_frames(batch, m.net.image_size)));
    std::vector<NodePtr> terms;
    if (task == Task::kSegmentation || task == Task::kAll)
        terms.push_back(g.cross_entropy_chw(m.seg_logits(g, map), detail::seg_labels(batch)));
    if (task == Task::kDepth || task == Task::kAll)
        terms.push_back(g.mse(m.depth_map(g, map),
                              g.constant(detail::depth_target(batch, m.net.image_size))));
    if (task == Task::kPresence || task == Task::kAll)
        terms.push_back(g.bce_logits(m.presence_logits(g, map),
                                     g.constant(detail::presence_target(batch))));
    NodePtr loss = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) loss = g.add(loss, terms[i]);
    return loss;
}

// End-to-end: gradients reach the task head(s) and the whole backbone.
inline FinetuneStats finetune(PerceptionModel& m, const std::vector<LabeledSample>& dataset,
                              const FinetuneConfig& cfg, Rng& rng) {
    if (dataset.empty()) throw ContractError("finetune: dataset is empty");
    if (cfg.batch < 1 || cfg.epochs < 1) throw ContractError("finetune: bad batch/epoch count");
    Adam adam(cfg.lr);
    const std::vector<std::string>& names = m.store.names;
    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    FinetuneStats stats;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        double loss_sum = 0.0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch)) {
            const size_t n = std::min(order.size() - at, static_cast<size_t>(cfg.batch));
            std::vector<const LabeledSample*> batch(n);
            for (size_t i = 0; i < n; ++i) batch[i] = &dataset[static_cast<size_t>(order[at + i])];
            Graph g(true);
            NodePtr loss = task_loss(g, m, batch, cfg.task);
            if (!std::isfinite(loss->value[0]))
                throw NumericError("finetune: non-finite loss at epoch " + std::to_string(epoch));
            m.store.zero_grad();
            g.backward(loss);
            adam.step(m.store, names);
            loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(n);
        }
        stats.epoch_loss.push_back(loss_sum / static_cast<double>(dataset.size()));
    }
    return stats;
}

// ---- evaluation ----

inline double rmse(const Array& pred, const Array& gt) {
    if (pred.shape != gt.shape)
        throw ContractError("rmse: shape mismatch " + shape_str(pred.shape) + " vs " +
                            shape_str(gt.shape));
    double s = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - gt[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(pred.numel()));
}

struct Confusion {
    std::array<std::int64_t, static_cast<size_t>(kSegClasses) * kSegClasses> m{};

    void add(int gt, int pred) {
        if (gt < 0 || gt >= kSegClasses || pred < 0 || pred >= kSegClasses)
            throw ContractError("confusion: class out of range");
        ++m[static_cast<size_t>(gt) * kSegClasses + pred];
    }
    std::int64_t at(int gt, int pred) const {
        return m[static_cast<size_t>(gt) * kSegClasses + pred];
    }
    std::int64_t gt_total(int c) const {
        std::int64_t s = 0;
        for (int p = 0; p < kSegClasses; ++p) s += at(c, p);
        return s;
    }
    std::int64_t pred_total(int c) const {
        std::int64_t s = 0;
        for (int g = 0; g < kSegClasses; ++g) s += at(g, c);
        return s;
    }
    // intersection / union of predicted and ground-truth pixel sets
    double iou(int c) const {
        const std::int64_t inter = at(c, c);
        const std::int64_t uni = gt_total(c) + pred_total(c) - inter;
        return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    double pixel_accuracy() const {
        std::int64_t diag = 0, total = 0;
        for (int c = 0; c < kSegClasses; ++c) diag += at(c, c);
        for (std::int64_t v : m) total += v;
        return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
    }
    // mean IoU over object categories that appear in the ground truth
    double miou() const {
        double s = 0.0;
        int n = 0;
        for (int c = 0; c < kNumCategories; ++c)
            if (gt_total(c) > 0) {
                s += iou(c);
                ++n;
            }
        return n == 0 ? 0.0 : s / n;
    }
};

struct EvalReport {
    std::string split;
    int frames = 0;
    std::array<double, kNumCategories> iou{};  // -1 when absent from ground truth
    double miou = 0.0;
    double pixel_accuracy = 0.0;
    std::array<double, kNumCategories> presence_accuracy{};
    double presence_accuracy_mean = 0.0;
    double depth_rmse = 0.0;
};

// Renders `frames_per_scene` fresh views per scene from seeded spawn poses and
// scores all three heads. Scene ids are checked against the split's seed range
// so test reports can never be produced from training scenes.
inline EvalReport evaluate(const PerceptionModel& m, const std::vector<SceneBundle>& scenes,
                           const SplitSpec& split, int frames_per_scene, std::uint64_t seed) {
    if (scenes.empty() || frames_per_scene < 1)
        throw ContractError("evaluate: need scenes and a positive frame count");
    for (const auto& b : scenes) {
        const auto id = static_cast<std::uint64_t>(b.id);
        if (id < split.seed_base || id >= split.seed_base + static_cast<std::uint64_t>(split.count))
            throw ContractError("evaluate: scene " + std::to_string(b.id) +
                                " is outside split '" + split.name + "'");
    }
    const int S = m.net.image_size;
    Confusion conf;
    std::array<std::int64_t, kNumCategories> presence_ok{};
    double depth_sq_sum = 0.0;
    std::int64_t depth_count = 0;
    int total_frames = 0;

    constexpr int kChunk = 16;
    std::vector<worldsim::Observation> obs;
    auto score_chunk = [&](const std::vector<worldsim::Observation>& chunk) {
        const int N = static_cast<int>(chunk.size());
        Array x(Shape{N, 3, S, S});
        const std::int64_t per = static_cast<std::int64_t>(3) * S * S;
        for (int i = 0; i < N; ++i)
            std::copy(chunk[static_cast<size_t>(i)].rgb.v.begin(),
                      chunk[static_cast<size_t>(i)].rgb.v.end(), x.v.begin() + i * per);
        Graph g(false);
        auto map = m.conv_map(g, g.constant(std::move(x)));
        const Array& seg = m.seg_logits(g, map)->value;      // [N,7,S,S]
        const Array& dep = m.depth_map(g, map)->value;       // [N,1,S,S]
        const Array& pres = m.presence_logits(g, map)->value;  // [N,6]
        const std::int64_t P = static_cast<std::int64_t>(S) * S;
        for (int i = 0; i < N; ++i) {
            const worldsim::Observation& o = chunk[static_cast<size_t>(i)];
            const float* z = seg.data() + static_cast<std::int64_t>(i) * kSegClasses * P;
            std::array<bool, kNumCategories> gt_present{};
            for (std::int64_t p = 0; p < P; ++p) {
                int best = 0;
                for (int c = 1; c < kSegClasses; ++c)
                    if (z[c * P + p] > z[best * P + p]) best = c;
                const std::uint8_t raw = o.semantic[static_cast<size_t>(p)];
                const int gt = raw == worldsim::kBackgroundId ? kBackgroundClass : raw;
                if (gt < kNumCategories) gt_present[static_cast<size_t>(gt)] = true;
                conf.add(gt, best);

                const double d = static_cast<double>(dep[static_cast<std::int64_t>(i) * P + p]) -
                                 o.depth[p];
                depth_sq_sum += d * d;
            }
            depth_count += P;
            for (int c = 0; c < kNumCategories; ++c) {
                const bool predicted = pres.at2(i, c) > 0.f;  // sigmoid(z) > 0.5
                if (predicted == gt_present[static_cast<size_t>(c)])
                    ++presence_ok[static_cast<size_t>(c)];
            }
        }
    };

    for (const auto& bundle : scenes) {
        Rng rng(derive_seed(seed, 0xe7a1ULL * 131 + static_cast<std::uint64_t>(bundle.id)));
        for (int f = 0; f < frames_per_scene; ++f) {
            const worldsim::AgentPose pose = worldsim::sample_spawn(bundle.spec, bundle.map, rng);
            obs.push_back(worldsim::render(bundle.spec, pose, S, S));
            ++total_frames;
            if (static_cast<int>(obs.size()) == kChunk) {
                score_chunk(obs);
                obs.clear();
            }
        }
    }
    if (!obs.empty()) score_chunk(obs);

    EvalReport r;
    r.split = split.name;
    r.frames = total_frames;
    for (int c = 0; c < kNumCategories; ++c) {
        r.iou[static_cast<size_t>(c)] = conf.gt_total(c) > 0 ? conf.iou(c) : -1.0;
        r.presence_accuracy[static_cast<size_t>(c)] =
            static_cast<double>(presence_ok[static_cast<size_t>(c)]) / total_frames;
        r.presence_accuracy_mean += r.presence_accuracy[static_cast<size_t>(c)];
    }
    r.presence_accuracy_mean /= kNumCategories;
    r.miou = conf.miou();
    r.pixel_accuracy = conf.pixel_accuracy();
    r.depth_rmse = std::sqrt(depth_sq_sum / static_cast<double>(depth_count));
    return r;
}

}  // namespace alp::downstream
