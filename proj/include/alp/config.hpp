// Run configuration: flat key=value text with '#' comments, canonical
// serialization, and an FNV-1a hash stamped into every output artifact.
// Keys live in one table so parsing, serialization, and the round-trip
// guarantee cannot drift apart.
#pragma once

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "alp/actionrep.hpp"
#include "alp/downstream.hpp"
#include "alp/intrinsic.hpp"

namespace alp::config {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // run shape
    std::uint64_t seed = 1;
    std::int64_t total_frames = 200000;
    int num_envs = 8;
    int window_len = 64;
    int episode_cap = 256;
    int image_size = 64;
    int threads = 0;  // 0 = ALP_THREADS or 1
    std::string reward_mode = "rnd";
    bool obj_pg = true, obj_idm = true, obj_simclr = false, obj_cpc = false;

    // ppo
    double gamma = 0.99, gae_lambda = 0.95;
    double clip_eps = 0.1;
    bool anneal_clip = true;
    double value_coef = 0.5, entropy_coef = 0.01, max_grad_norm = 0.5;
    int ppo_epochs = 4, minibatches = 2;
    double lr = 2.5e-4;
    bool anneal_lr = true;

    // network
    int feature_dim = 128, hidden_dim = 128, action_embed_dim = 32;

    // intrinsic reward
    int rnd_hidden = 512, rnd_out = 64;
    int proj_hidden = 128, proj_dim = 128;
    double tau = 0.07;
    int contrastive_pairs = 128, cpc_max_offset = 4;
    double momentum_rho = 0.99, lr_reward = 1e-4;

    // inverse dynamics
    int idm_k = 8, idm_proj_hidden = 128, idm_proj_dim = 128, idm_pred_hidden = 128;
    int idm_epochs = 4;
    double idm_lr = 2.5e-4;

    // scenes
    std::uint64_t scene_train_seed_base = 1000, scene_test_seed_base = 2000;
    int scene_train_count = 5, scene_test_count = 5;
    double scene_min_extent = 7.0, scene_max_extent = 12.0;
    int scene_min_objects = 6, scene_max_objects = 10;

    // labeled sampling schedule
    int label_events = 10, labels_per_env_per_event = 10;

    // artifacts
    std::int64_t checkpoint_every = 0;  // frames; 0 = final checkpoint only

    // stage 2
    std::string ft_task = "segmentation";
    int ft_epochs = 20, ft_batch = 16;
    double ft_lr = 1e-3;
    int eval_frames_train = 50, eval_frames_test = 100;
};

namespace detail {

inline std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
T parse_int(const std::string& s) {
    T v{};
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError("not an integer: '" + s + "'");
    return v;
}

inline double parse_f64(const std::string& s) {
    double v{};
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError("not a number: '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("not a boolean: '" + s + "'");
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeyBinding {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline std::string objectives_string(const RunConfig& c) {
    std::string s;
    auto app = [&](bool on, const char* n) {
        if (!on) return;
        if (!s.empty()) s += ',';
        s += n;
    };
    app(c.obj_pg, "pg");
    app(c.obj_idm, "idm");
    app(c.obj_simclr, "simclr");
    app(c.obj_cpc, "cpc");
    return s;
}

inline void set_objectives(RunConfig& c, const std::string& v) {
    c.obj_pg = c.obj_idm = c.obj_simclr = c.obj_cpc = false;
    size_t at = 0;
    while (at <= v.size()) {
        size_t comma = v.find(',', at);
        if (comma == std::string::npos) comma = v.size();
        const std::string tok = trim(v.substr(at, comma - at));
        if (tok == "pg") c.obj_pg = true;
        else if (tok == "idm") c.obj_idm = true;
        else if (tok == "simclr") c.obj_simclr = true;
        else if (tok == "cpc") c.obj_cpc = true;
        else if (!tok.empty()) throw ConfigError("unknown objective '" + tok + "'");
        at = comma + 1;
    }
}

inline const std::vector<KeyBinding>& key_table() {
    static const std::vector<KeyBinding> table = [] {
        std::vector<KeyBinding> t;
        auto add = [&](std::string name, auto RunConfig::* field) {
            using F = std::decay_t<decltype(std::declval<RunConfig>().*field)>;
            t.push_back(KeyBinding{
                std::move(name),
                [field](RunConfig& c, const std::string& v) {
                    if constexpr (std::is_same_v<F, bool>) c.*field = parse_bool(v);
                    else if constexpr (std::is_same_v<F, double>) c.*field = parse_f64(v);
                    else if constexpr (std::is_integral_v<F>) c.*field = parse_int<F>(v);
                    else c.*field = v;
                },
                [field](const RunConfig& c) -> std::string {
                    if constexpr (std::is_same_v<F, bool>) return (c.*field) ? "true" : "false";
                    else if constexpr (std::is_same_v<F, double>) return fmt_f64(c.*field);
                    else if constexpr (std::is_integral_v<F>) return std::to_string(c.*field);
                    else return c.*field;
                }});
        };
        add("seed", &RunConfig::seed);
        add("total_frames", &RunConfig::total_frames);
        add("num_envs", &RunConfig::num_envs);
        add("window_len", &RunConfig::window_len);
        add("episode_cap", &RunConfig::episode_cap);
        add("image_size", &RunConfig::image_size);
        add("threads", &RunConfig::threads);
        add("reward_mode", &RunConfig::reward_mode);
        t.push_back(KeyBinding{"objectives",
                               [](RunConfig& c, const std::string& v) { set_objectives(c, v); },
                               [](const RunConfig& c) { return objectives_string(c); }});
        add("gamma", &RunConfig::gamma);
        add("gae_lambda", &RunConfig::gae_lambda);
        add("clip_eps", &RunConfig::clip_eps);
        add("anneal_clip", &RunConfig::anneal_clip);
        add("value_coef", &RunConfig::value_coef);
        add("entropy_coef", &RunConfig::entropy_coef);
        add("max_grad_norm", &RunConfig::max_grad_norm);
        add("ppo_epochs", &RunConfig::ppo_epochs);
        add("minibatches", &RunConfig::minibatches);
        add("lr", &RunConfig::lr);
        add("anneal_lr", &RunConfig::anneal_lr);
        add("feature_dim", &RunConfig::feature_dim);
        add("hidden_dim", &RunConfig::hidden_dim);
        add("action_embed_dim", &RunConfig::action_embed_dim);
        add("rnd_hidden", &RunConfig::rnd_hidden);
        add("rnd_out", &RunConfig::rnd_out);
        add("proj_hidden", &RunConfig::proj_hidden);
        add("proj_dim", &RunConfig::proj_dim);
        add("tau", &RunConfig::tau);
        add("contrastive_pairs", &RunConfig::contrastive_pairs);
        add("cpc_max_offset", &RunConfig::cpc_max_offset);
        add("momentum_rho", &RunConfig::momentum_rho);
        add("lr_reward", &RunConfig::lr_reward);
        add("idm_k", &RunConfig::idm_k);
        add("idm_proj_hidden", &RunConfig::idm_proj_hidden);
        add("idm_proj_dim", &RunConfig::idm_proj_dim);
        add("idm_pred_hidden", &RunConfig::idm_pred_hidden);
        add("idm_epochs", &RunConfig::idm_epochs);
        add("idm_lr", &RunConfig::idm_lr);
        add("scene_train_seed_base", &RunConfig::scene_train_seed_base);
        add("scene_test_seed_base", &RunConfig::scene_test_seed_base);
        add("scene_train_count", &RunConfig::scene_train_count);
        add("scene_test_count", &RunConfig::scene_test_count);
        add("scene_min_extent", &RunConfig::scene_min_extent);
        add("scene_max_extent", &RunConfig::scene_max_extent);
        add("scene_min_objects", &RunConfig::scene_min_objects);
        add("scene_max_objects", &RunConfig::scene_max_objects);
        add("label_events", &RunConfig::label_events);
        add("labels_per_env_per_event", &RunConfig::labels_per_env_per_event);
        add("checkpoint_every", &RunConfig::checkpoint_every);
        add("ft_task", &RunConfig::ft_task);
        add("ft_epochs", &RunConfig::ft_epochs);
        add("ft_batch", &RunConfig::ft_batch);
        add("ft_lr", &RunConfig::ft_lr);
        add("eval_frames_train", &RunConfig::eval_frames_train);
        add("eval_frames_test", &RunConfig::eval_frames_test);
        return t;
    }();
    return table;
}

inline const KeyBinding* find_key(const std::string& name) {
    for (const auto& k : key_table())
        if (k.name == name) return &k;
    return nullptr;
}

}  // namespace detail

// Absent keys keep their defaults; every assignment error carries the line.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    int line_no = 0;
    size_t at = 0;
    while (at <= text.size()) {
        size_t nl = text.find('\n', at);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(at, nl - at);
        at = nl + 1;
        ++line_no;
        if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                              line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const detail::KeyBinding* binding = detail::find_key(key);
        if (!binding)
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        try {
            binding->set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "': " +
                              e.what());
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

// Canonical form: every key once, table order. serialize(parse(x)) reparses
// to the same config, so the hash below identifies runs.
inline std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::key_table()) {
        out += k.name;
        out += '=';
        out += k.get(cfg);
        out += '\n';
    }
    return out;
}

inline std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : serialize_config(cfg)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Structural checks; every message names the offending key.
inline void validate(const RunConfig& c) {
    auto positive = [](double v, const char* key) {
        if (!(v > 0)) throw ConfigError(std::string("key '") + key + "' must be positive");
    };
    positive(static_cast<double>(c.total_frames), "total_frames");
    positive(c.num_envs, "num_envs");
    positive(c.window_len, "window_len");
    positive(c.episode_cap, "episode_cap");
    positive(c.gamma, "gamma");
    positive(c.gae_lambda, "gae_lambda");
    positive(c.clip_eps, "clip_eps");
    positive(c.value_coef, "value_coef");
    positive(c.entropy_coef, "entropy_coef");
    positive(c.max_grad_norm, "max_grad_norm");
    positive(c.ppo_epochs, "ppo_epochs");
    positive(c.lr, "lr");
    positive(c.feature_dim, "feature_dim");
    positive(c.hidden_dim, "hidden_dim");
    positive(c.action_embed_dim, "action_embed_dim");
    positive(c.rnd_hidden, "rnd_hidden");
    positive(c.rnd_out, "rnd_out");
    positive(c.proj_hidden, "proj_hidden");
    positive(c.proj_dim, "proj_dim");
    positive(c.tau, "tau");
    positive(c.lr_reward, "lr_reward");
    positive(c.idm_k, "idm_k");
    positive(c.idm_epochs, "idm_epochs");
    positive(c.idm_lr, "idm_lr");
    positive(c.ft_epochs, "ft_epochs");
    positive(c.ft_batch, "ft_batch");
    positive(c.eval_frames_train, "eval_frames_train");
    positive(c.eval_frames_test, "eval_frames_test");
    if (c.threads < 0) throw ConfigError("key 'threads' must be >= 0");
    if (c.ft_lr < 0) throw ConfigError("key 'ft_lr' must be >= 0");
    if (c.label_events < 0) throw ConfigError("key 'label_events' must be >= 0");
    if (c.label_events > 0 && c.labels_per_env_per_event < 1)
        throw ConfigError("key 'labels_per_env_per_event' must be >= 1");
    if (c.checkpoint_every < 0) throw ConfigError("key 'checkpoint_every' must be >= 0");

    if (c.image_size < 16 || c.image_size % 16 != 0)
        throw ConfigError("key 'image_size' must be a positive multiple of 16");
    if (c.minibatches < 1) throw ConfigError("key 'minibatches' must be >= 1");
    if (c.num_envs < c.minibatches)
        throw ConfigError("key 'num_envs' must be >= minibatches so every minibatch holds a "
                          "whole environment");
    if (c.reward_mode != "rnd" && c.reward_mode != "crl")
        throw ConfigError("key 'reward_mode' must be rnd or crl");
    if (!c.obj_pg && !c.obj_idm && !c.obj_simclr && !c.obj_cpc)
        throw ConfigError("key 'objectives' must enable at least one objective");
    if (c.reward_mode == "crl" && !c.obj_simclr && !c.obj_cpc)
        throw ConfigError("key 'reward_mode' crl needs a contrastive objective (simclr or cpc) "
                          "to train the reward projection");
    if (c.obj_cpc && c.num_envs < 2)
        throw ConfigError("key 'objectives' cpc needs num_envs >= 2 for cross-env negatives");
    if (c.obj_cpc && c.cpc_max_offset < 1)
        throw ConfigError("key 'cpc_max_offset' must be >= 1");
    if (c.obj_simclr || c.obj_cpc) {
        if (c.contrastive_pairs < 2) throw ConfigError("key 'contrastive_pairs' must be >= 2");
    }
    if (!(c.momentum_rho >= 0.0 && c.momentum_rho < 1.0))
        throw ConfigError("key 'momentum_rho' must be in [0, 1)");
    if (c.obj_idm && c.window_len < c.idm_k + 2)
        throw ConfigError("key 'window_len' must be >= idm_k + 2 to fit one prediction window");
    if (c.scene_train_count < 1 || c.scene_test_count < 1)
        throw ConfigError("key 'scene_train_count'/'scene_test_count' must be >= 1");
    const std::uint64_t train_end = c.scene_train_seed_base +
                                    static_cast<std::uint64_t>(c.scene_train_count);
    const std::uint64_t test_end = c.scene_test_seed_base +
                                   static_cast<std::uint64_t>(c.scene_test_count);
    if (c.scene_train_seed_base < test_end && c.scene_test_seed_base < train_end)
        throw ConfigError("key 'scene_test_seed_base': train and test seed ranges overlap");
    if (!(c.scene_min_extent > 0) || c.scene_max_extent < c.scene_min_extent)
        throw ConfigError("key 'scene_max_extent' must be >= scene_min_extent > 0");
    if (c.scene_min_objects < 1 || c.scene_max_objects < c.scene_min_objects)
        throw ConfigError("key 'scene_max_objects' must be >= scene_min_objects >= 1");
    try {
        downstream::parse_task(c.ft_task);
    } catch (const ContractError&) {
        throw ConfigError("key 'ft_task': unknown task '" + c.ft_task + "'");
    }
}

// ---- bridges into the module configs ----

inline policy::NetConfig to_net(const RunConfig& c) {
    policy::NetConfig n;
    n.image_size = c.image_size;
    n.feature_dim = c.feature_dim;
    n.hidden_dim = c.hidden_dim;
    n.action_embed_dim = c.action_embed_dim;
    return n;
}

inline policy::PpoConfig to_ppo(const RunConfig& c) {
    policy::PpoConfig p;
    p.gamma = static_cast<float>(c.gamma);
    p.gae_lambda = static_cast<float>(c.gae_lambda);
    p.clip_eps = static_cast<float>(c.clip_eps);
    p.anneal_clip = c.anneal_clip;
    p.value_coef = static_cast<float>(c.value_coef);
    p.entropy_coef = static_cast<float>(c.entropy_coef);
    p.max_grad_norm = static_cast<float>(c.max_grad_norm);
    p.epochs = c.ppo_epochs;
    p.minibatches = c.minibatches;
    p.lr = c.lr;
    p.anneal_lr = c.anneal_lr;
    p.update_backbone = c.obj_pg;
    return p;
}

inline intrinsic::IntrinsicConfig to_intrinsic(const RunConfig& c) {
    intrinsic::IntrinsicConfig i;
    i.rnd_hidden = c.rnd_hidden;
    i.rnd_out = c.rnd_out;
    i.proj_hidden = c.proj_hidden;
    i.proj_dim = c.proj_dim;
    i.tau = static_cast<float>(c.tau);
    i.contrastive_pairs = c.contrastive_pairs;
    i.cpc_max_offset = c.cpc_max_offset;
    i.momentum_rho = static_cast<float>(c.momentum_rho);
    i.lr_reward = c.lr_reward;
    return i;
}

inline actionrep::IdmConfig to_idm(const RunConfig& c) {
    actionrep::IdmConfig k;
    k.k = c.idm_k;
    k.proj_hidden = c.idm_proj_hidden;
    k.proj_dim = c.idm_proj_dim;
    k.pred_hidden = c.idm_pred_hidden;
    k.epochs = c.idm_epochs;
    k.lr = c.idm_lr;
    return k;
}

inline worldsim::GenProfile to_gen_profile(const RunConfig& c) {
    worldsim::GenProfile p;
    p.min_extent = static_cast<float>(c.scene_min_extent);
    p.max_extent = static_cast<float>(c.scene_max_extent);
    p.min_objects = c.scene_min_objects;
    p.max_objects = c.scene_max_objects;
    return p;
}

inline downstream::SplitSpec train_split(const RunConfig& c) {
    return {"train", c.scene_train_seed_base, c.scene_train_count};
}

inline downstream::SplitSpec test_split(const RunConfig& c) {
    return {"test", c.scene_test_seed_base, c.scene_test_count};
}

}  // namespace alp::config
