// Named parameter registry and Adam. Parameters are persistent leaf nodes;
// names carry a group prefix up to the first '/', e.g. "backbone/conv1_w".
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "alp/autodiff.hpp"

namespace alp::ndmath {

struct ParamStore {
    std::vector<std::string> names;  // registration order, deterministic
    std::map<std::string, NodePtr> by_name;

    // Frozen entries (trainable=false) are saved and loaded like any other
    // parameter but never receive gradients.
    NodePtr add(const std::string& name, Array init, bool trainable = true) {
        if (by_name.count(name)) throw ContractError("ParamStore: duplicate name " + name);
        auto n = make_leaf(std::move(init), trainable);
        names.push_back(name);
        by_name.emplace(name, n);
        return n;
    }

    NodePtr get(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ContractError("ParamStore: unknown name " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return by_name.count(name) != 0; }

    static std::string group_of(const std::string& name) {
        const auto p = name.find('/');
        return p == std::string::npos ? name : name.substr(0, p);
    }

    // Registration-ordered parameters whose group is in `groups`.
    std::vector<NodePtr> group_params(const std::vector<std::string>& groups) const {
        std::vector<NodePtr> out;
        for (const auto& n : names)
            if (std::find(groups.begin(), groups.end(), group_of(n)) != groups.end())
                out.push_back(by_name.at(n));
        return out;
    }

    std::vector<std::string> group_names(const std::vector<std::string>& groups) const {
        std::vector<std::string> out;
        for (const auto& n : names)
            if (std::find(groups.begin(), groups.end(), group_of(n)) != groups.end())
                out.push_back(n);
        return out;
    }

    void zero_grad() {
        for (auto& [name, p] : by_name) p->grad.fill(0.f);
    }

    void zero_grad(const std::vector<std::string>& groups) {
        for (auto p : group_params(groups)) p->grad.fill(0.f);
    }

    std::int64_t total_params() const {
        std::int64_t n = 0;
        for (const auto& [name, p] : by_name) n += p->value.numel();
        return n;
    }
};

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
inline double clip_global_grad_norm(const std::vector<NodePtr>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) sq += sq_norm64(p->grad);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const float s = static_cast<float>(max_norm / norm);
        for (const auto& p : params)
            for (auto& g : p->grad.v) g *= s;
    }
    return norm;
}

// One optimizer per objective; moments keyed by parameter name so the set of
// parameters passed to step() may be any stable subset.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    std::map<std::string, std::pair<Array, Array>> moments;  // m, v

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    // lr_scale multiplies the base rate (linear annealing hook).
    void step(ParamStore& store, const std::vector<std::string>& param_names,
              double lr_scale = 1.0) {
        ++step_count;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        const double rate = lr * lr_scale;
        for (const auto& name : param_names) {
            NodePtr p = store.get(name);
            auto it = moments.find(name);
            if (it == moments.end())
                it = moments
                         .emplace(name, std::make_pair(Array(p->value.shape),
                                                       Array(p->value.shape)))
                         .first;
            Array& m = it->second.first;
            Array& v = it->second.second;
            check_same_shape(m.shape, p->value.shape, "Adam::step");
            for (size_t i = 0; i < p->value.v.size(); ++i) {
                const double g = p->grad.v[i];
                const double mi = beta1 * m.v[i] + (1.0 - beta1) * g;
                const double vi = beta2 * v.v[i] + (1.0 - beta2) * g * g;
                m.v[i] = static_cast<float>(mi);
                v.v[i] = static_cast<float>(vi);
                p->value.v[i] -= static_cast<float>(rate * (mi / c1) /
                                                    (std::sqrt(vi / c2) + eps));
            }
        }
    }
};

// Linear annealing factor: 1 at progress 0, 0 at progress 1.
inline double anneal_factor(std::int64_t done, std::int64_t total) {
    if (total <= 0) return 1.0;
    const double f = 1.0 - static_cast<double>(done) / static_cast<double>(total);
    return f < 0.0 ? 0.0 : f;
}

}  // namespace alp::ndmath
