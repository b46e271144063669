// Procedural 2.5D interiors with a column raycaster. All geometry is float,
// all randomness flows from explicit seeds, so scenes, spawns, renders and
// collision outcomes are bitwise reproducible.
#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <vector>

#include "alp/array.hpp"
#include "alp/pgm.hpp"
#include "alp/rng.hpp"

namespace alp::worldsim {

constexpr float kAgentRadius = 0.15f;
constexpr float kStepDist = 0.25f;
constexpr float kTurnDeg = 30.f;
constexpr float kMaxRange = 10.f;
constexpr float kEyeHeight = 1.0f;
constexpr float kWallHeight = 2.5f;
constexpr float kCell = 0.25f;
constexpr int kNumCategories = 6;
constexpr std::uint8_t kBackgroundId = 255;

enum ActionId : int { kForward = 0, kTurnLeft = 1, kTurnRight = 2 };
constexpr int kNumActions = 3;

struct Vec2 {
    float x = 0.f, y = 0.f;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Vec2 a, float s) { return {a.x * s, a.y * s}; }
inline float dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline float cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline float len(Vec2 a) { return std::sqrt(dot(a, a)); }

struct AgentPose {
    float x = 0.f, y = 0.f;
    float heading_deg = 0.f;  // 0 = +x, counterclockwise, in [0, 360)
};

struct Wall {
    Vec2 a, b;
    int texture = 0;
};

struct ObjectSpec {
    int category = 0;
    std::vector<Vec2> poly;  // convex, counterclockwise footprint
    float height = 1.f;
    std::array<float, 3> albedo{0.5f, 0.5f, 0.5f};
};

struct SceneSpec {
    std::uint64_t seed = 0;
    float extent_x = 0.f, extent_y = 0.f;
    std::vector<Wall> walls;
    std::vector<ObjectSpec> objects;
    std::array<float, 3> wall_albedo{0.6f, 0.6f, 0.6f};
    std::array<float, 3> floor_albedo{0.3f, 0.3f, 0.3f};
};

struct Observation {
    int width = 0, height = 0;
    Array rgb;                          // [3, H, W], values in [0, 1]
    std::vector<std::uint8_t> semantic;  // H*W category ids, 255 = background
    Array depth;                        // [H, W], perpendicular distance / max range
};

struct GenProfile {
    float min_extent = 7.f, max_extent = 12.f;
    int min_objects = 6, max_objects = 10;
    int max_split_depth = 2;
};

// ---- geometry ----

inline float dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const float denom = dot(ab, ab);
    float t = denom > 0.f ? dot(p - a, ab) / denom : 0.f;
    t = std::min(1.f, std::max(0.f, t));
    return len(p - (a + ab * t));
}

inline bool segments_intersect(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    const Vec2 r = p1 - p0, s = q1 - q0;
    const float denom = cross(r, s);
    const float tn = cross(q0 - p0, s), un = cross(q0 - p0, r);
    if (std::abs(denom) < 1e-12f) return false;  // parallel: endpoint distances cover it
    const float t = tn / denom, u = un / denom;
    return t >= 0.f && t <= 1.f && u >= 0.f && u <= 1.f;
}

inline float dist_segment_segment(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    if (segments_intersect(p0, p1, q0, q1)) return 0.f;
    return std::min(std::min(dist_point_segment(p0, q0, q1), dist_point_segment(p1, q0, q1)),
                    std::min(dist_point_segment(q0, p0, p1), dist_point_segment(q1, p0, p1)));
}

inline bool point_in_poly(Vec2 p, const std::vector<Vec2>& poly) {
    bool inside = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = poly[j], b = poly[i];
        if ((b.y > p.y) != (a.y > p.y)) {
            const float xint = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
            if (p.x < xint) inside = !inside;
        }
    }
    return inside;
}

// Ray origin + t*dir against segment [a,b]; returns (t, u) with u along the
// segment in [0,1]. dir need not be unit length; t is in dir units.
inline std::optional<std::pair<float, float>> ray_segment(Vec2 o, Vec2 dir, Vec2 a, Vec2 b) {
    const Vec2 s = b - a;
    const float denom = cross(dir, s);
    if (std::abs(denom) < 1e-12f) return std::nullopt;
    const float t = cross(a - o, s) / denom;
    const float u = cross(a - o, dir) / denom;
    if (t <= 1e-6f || u < 0.f || u > 1.f) return std::nullopt;
    return std::make_pair(t, u);
}

// ---- collision and stepping ----

inline bool position_clear(const SceneSpec& scene, Vec2 p, float radius = kAgentRadius) {
    for (const auto& w : scene.walls)
        if (dist_point_segment(p, w.a, w.b) < radius) return false;
    for (const auto& obj : scene.objects) {
        if (point_in_poly(p, obj.poly)) return false;
        const size_t n = obj.poly.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++)
            if (dist_point_segment(p, obj.poly[j], obj.poly[i]) < radius) return false;
    }
    return true;
}

// Swept-circle test: true if moving from `from` to `to` keeps the agent disc
// clear of every wall and object.
inline bool path_clear(const SceneSpec& scene, Vec2 from, Vec2 to, float radius = kAgentRadius) {
    for (const auto& w : scene.walls)
        if (dist_segment_segment(from, to, w.a, w.b) < radius) return false;
    for (const auto& obj : scene.objects) {
        if (point_in_poly(to, obj.poly)) return false;
        const size_t n = obj.poly.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++)
            if (dist_segment_segment(from, to, obj.poly[j], obj.poly[i]) < radius) return false;
    }
    return true;
}

inline float wrap_deg(float d) {
    d = std::fmod(d, 360.f);
    return d < 0.f ? d + 360.f : d;
}

// Forward moves kStepDist or not at all (full stop on any contact); turns
// always succeed. Pose stays in free space if it started there.
inline AgentPose step(const SceneSpec& scene, const AgentPose& pose, int action) {
    AgentPose out = pose;
    switch (action) {
        case kForward: {
            const float rad = pose.heading_deg * 0.017453292519943295f;
            const Vec2 from{pose.x, pose.y};
            const Vec2 to = from + Vec2{std::cos(rad), std::sin(rad)} * kStepDist;
            if (path_clear(scene, from, to)) {
                out.x = to.x;
                out.y = to.y;
            }
            break;
        }
        case kTurnLeft:
            out.heading_deg = wrap_deg(pose.heading_deg + kTurnDeg);
            break;
        case kTurnRight:
            out.heading_deg = wrap_deg(pose.heading_deg - kTurnDeg);
            break;
        default:
            throw ContractError("step: unknown action " + std::to_string(action));
    }
    return out;
}

// ---- occupancy, reachability, spawning ----

struct SpawnMap {
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> free;       // cell center clear of geometry
    std::vector<std::uint8_t> spawnable;  // free and in the largest component
    int free_cells = 0;
    int largest_component = 0;

    Vec2 cell_center(int i, int j) const {
        return {(static_cast<float>(i) + 0.5f) * kCell, (static_cast<float>(j) + 0.5f) * kCell};
    }
    int index(int i, int j) const { return j * nx + i; }
};

inline SpawnMap build_spawn_map(const SceneSpec& scene) {
    SpawnMap m;
    m.nx = static_cast<int>(std::floor(scene.extent_x / kCell + 0.5f));
    m.ny = static_cast<int>(std::floor(scene.extent_y / kCell + 0.5f));
    if (m.nx <= 0 || m.ny <= 0) throw ContractError("build_spawn_map: empty scene extents");
    m.free.assign(static_cast<size_t>(m.nx) * m.ny, 0);
    m.spawnable.assign(m.free.size(), 0);
    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i < m.nx; ++i)
            if (position_clear(scene, m.cell_center(i, j))) {
                m.free[static_cast<size_t>(m.index(i, j))] = 1;
                ++m.free_cells;
            }

    // components over 4-connected free cells
    std::vector<int> comp(m.free.size(), -1);
    int best_id = -1;
    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i < m.nx; ++i) {
            const int start = m.index(i, j);
            if (!m.free[static_cast<size_t>(start)] || comp[static_cast<size_t>(start)] >= 0)
                continue;
            const int id = start;
            int size = 0;
            std::deque<int> q{start};
            comp[static_cast<size_t>(start)] = id;
            while (!q.empty()) {
                const int c = q.front();
                q.pop_front();
                ++size;
                const int ci = c % m.nx, cj = c / m.nx;
                const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int ni = ci + di[k], nj = cj + dj[k];
                    if (ni < 0 || ni >= m.nx || nj < 0 || nj >= m.ny) continue;
                    const int nidx = m.index(ni, nj);
                    if (m.free[static_cast<size_t>(nidx)] && comp[static_cast<size_t>(nidx)] < 0) {
                        comp[static_cast<size_t>(nidx)] = id;
                        q.push_back(nidx);
                    }
                }
            }
            if (size > m.largest_component) {
                m.largest_component = size;
                best_id = id;
            }
        }
    for (size_t k = 0; k < comp.size(); ++k)
        if (comp[k] == best_id && best_id >= 0) m.spawnable[k] = 1;
    return m;
}

inline AgentPose sample_spawn(const SceneSpec& scene, const SpawnMap& map, Rng& rng) {
    std::vector<int> cells;
    cells.reserve(static_cast<size_t>(map.largest_component));
    for (size_t k = 0; k < map.spawnable.size(); ++k)
        if (map.spawnable[k]) cells.push_back(static_cast<int>(k));
    if (cells.empty()) throw ContractError("sample_spawn: no spawnable cells");
    for (int attempt = 0; attempt < 16; ++attempt) {
        const int c = cells[static_cast<size_t>(rng.below(cells.size()))];
        const Vec2 center = map.cell_center(c % map.nx, c / map.nx);
        const Vec2 p{center.x + rng.uniform_f(-0.08f, 0.08f),
                     center.y + rng.uniform_f(-0.08f, 0.08f)};
        const float heading = kTurnDeg * static_cast<float>(rng.below(12));
        if (position_clear(scene, p)) return {p.x, p.y, heading};
        if (attempt == 15) return {center.x, center.y, heading};  // center is known clear
    }
    throw ContractError("sample_spawn: unreachable");
}

inline AgentPose sample_spawn(const SceneSpec& scene, Rng& rng) {
    return sample_spawn(scene, build_spawn_map(scene), rng);
}

// ---- rendering ----

inline float surface_shade(float t) {
    const float s = 1.2f / (1.f + 0.25f * t);
    return std::min(1.f, std::max(0.25f, s));
}

namespace detail {

struct Hit {
    float t = 0.f;
    float u = 0.f;      // parameter along the segment
    int kind = 0;       // 0 wall, 1 object
    int index = 0;
    float top_z = 0.f;  // surface height
};

inline void fill_span(const Hit& h, const SceneSpec& scene, int x, int W, int H,
                      std::vector<std::uint8_t>& taken, Observation& obs) {
    const float half = static_cast<float>(H) * 0.5f;
    const float y_top = half - (h.top_z - kEyeHeight) / h.t * half;
    const float y_bot = half + kEyeHeight / h.t * half;
    int row0 = static_cast<int>(std::ceil(y_top - 0.5f));
    int row1 = static_cast<int>(std::floor(y_bot - 0.5f));
    row0 = std::max(row0, 0);
    row1 = std::min(row1, H - 1);
    if (row0 > row1) return;

    float col[3];
    std::uint8_t sem;
    if (h.kind == 0) {
        const Wall& w = scene.walls[static_cast<size_t>(h.index)];
        const float u_world = h.u * len(w.b - w.a);
        const float freq[3] = {0.5f, 1.f, 2.f};
        const float f = u_world * freq[w.texture % 3];
        const float stripe = (f - std::floor(f)) < 0.5f ? 1.f : 0.82f;
        const float s = surface_shade(h.t) * stripe;
        for (int c = 0; c < 3; ++c) col[c] = scene.wall_albedo[static_cast<size_t>(c)] * s;
        sem = kBackgroundId;
    } else {
        const ObjectSpec& o = scene.objects[static_cast<size_t>(h.index)];
        const float s = surface_shade(h.t);
        for (int c = 0; c < 3; ++c) col[c] = o.albedo[static_cast<size_t>(c)] * s;
        sem = static_cast<std::uint8_t>(o.category);
    }
    const float d = std::min(h.t, kMaxRange) / kMaxRange;
    for (int y = row0; y <= row1; ++y) {
        if (taken[static_cast<size_t>(y)]) continue;
        taken[static_cast<size_t>(y)] = 1;
        const size_t px = static_cast<size_t>(y) * W + x;
        for (int c = 0; c < 3; ++c) obs.rgb[static_cast<std::int64_t>(c) * H * W + px] = col[c];
        obs.semantic[px] = sem;
        obs.depth[static_cast<std::int64_t>(px)] = d;
    }
}

}  // namespace detail

// 90 degree horizontal FOV, one ray per column, perpendicular (non-fisheye)
// depth. Background rows carry id 255 and depth 1.
inline Observation render(const SceneSpec& scene, const AgentPose& pose, int W, int H) {
    if (W < 2 || H < 2) throw ContractError("render: resolution too small");
    Observation obs;
    obs.width = W;
    obs.height = H;
    obs.rgb = Array(Shape{3, H, W});
    obs.semantic.assign(static_cast<size_t>(H) * W, kBackgroundId);
    obs.depth = Array(Shape{H, W}, 1.f);

    const float rad = pose.heading_deg * 0.017453292519943295f;
    const Vec2 d{std::cos(rad), std::sin(rad)};
    const Vec2 right{d.y, -d.x};
    const Vec2 o{pose.x, pose.y};
    std::vector<detail::Hit> hits;
    std::vector<std::uint8_t> taken(static_cast<size_t>(H));

    for (int x = 0; x < W; ++x) {
        const float cam = 2.f * (static_cast<float>(x) + 0.5f) / static_cast<float>(W) - 1.f;
        const Vec2 ray = d + right * cam;  // |ray . d| = 1: t is perpendicular depth
        hits.clear();
        for (size_t wi = 0; wi < scene.walls.size(); ++wi) {
            const auto& w = scene.walls[wi];
            if (auto r = ray_segment(o, ray, w.a, w.b))
                hits.push_back({r->first, r->second, 0, static_cast<int>(wi), kWallHeight});
        }
        for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
            const auto& obj = scene.objects[oi];
            const size_t n = obj.poly.size();
            float best_t = -1.f, best_u = 0.f;
            for (size_t i = 0, j = n - 1; i < n; j = i++)
                if (auto r = ray_segment(o, ray, obj.poly[j], obj.poly[i]))
                    if (best_t < 0.f || r->first < best_t) {
                        best_t = r->first;
                        best_u = r->second;
                    }
            if (best_t > 0.f)
                hits.push_back({best_t, best_u, 1, static_cast<int>(oi), obj.height});
        }
        std::sort(hits.begin(), hits.end(), [](const detail::Hit& a, const detail::Hit& b) {
            if (a.t != b.t) return a.t < b.t;
            if (a.kind != b.kind) return a.kind < b.kind;
            return a.index < b.index;
        });
        std::fill(taken.begin(), taken.end(), 0);
        for (const auto& h : hits) detail::fill_span(h, scene, x, W, H, taken, obs);

        // remaining rows: ceiling above the horizon, floor below, with a
        // ground-plane distance shade as the only cue
        const float half = static_cast<float>(H) * 0.5f;
        for (int y = 0; y < H; ++y) {
            if (taken[static_cast<size_t>(y)]) continue;
            const float yc = static_cast<float>(y) + 0.5f;
            float shade;
            const float* alb;
            if (yc < half) {
                const float t = (kWallHeight - kEyeHeight) * half / std::max(half - yc, 0.5f);
                shade = surface_shade(t) * 0.9f;
                alb = scene.wall_albedo.data();
            } else {
                const float t = kEyeHeight * half / std::max(yc - half, 0.5f);
                shade = surface_shade(t);
                alb = scene.floor_albedo.data();
            }
            const size_t px = static_cast<size_t>(y) * W + x;
            for (int c = 0; c < 3; ++c)
                obs.rgb[static_cast<std::int64_t>(c) * H * W + px] = alb[c] * shade;
        }
    }
    return obs;
}

// ---- procedural generation ----

namespace detail {

inline float quant(float v) { return std::floor(v / kCell + 0.5f) * kCell; }

inline void add_split(std::vector<Wall>& walls, Rng& rng, float x0, float y0, float x1, float y1,
                      int depth, int max_depth) {
    const float wdt = x1 - x0, hgt = y1 - y0;
    if (depth >= max_depth || (wdt < 4.f && hgt < 4.f)) return;
    const bool vertical = wdt >= hgt;  // split across the longer side
    const float span = vertical ? wdt : hgt;
    const float pos = quant((vertical ? x0 : y0) + rng.uniform_f(2.f, span - 2.f));
    const float door_w = quant(rng.uniform_f(1.f, 1.5f));
    const float low = vertical ? y0 : x0, high = vertical ? y1 : x1;
    const float door_lo = quant(low + rng.uniform_f(0.25f, (high - low) - door_w - 0.25f));
    const float door_hi = door_lo + door_w;
    const int tex = rng.range_int(0, 2);
    if (vertical) {
        if (door_lo > low) walls.push_back({{pos, low}, {pos, door_lo}, tex});
        if (door_hi < high) walls.push_back({{pos, door_hi}, {pos, high}, tex});
        if (rng.bernoulli(0.5)) add_split(walls, rng, x0, y0, pos, y1, depth + 1, max_depth);
        if (rng.bernoulli(0.5)) add_split(walls, rng, pos, y0, x1, y1, depth + 1, max_depth);
    } else {
        if (door_lo > low) walls.push_back({{low, pos}, {door_lo, pos}, tex});
        if (door_hi < high) walls.push_back({{door_hi, pos}, {high, pos}, tex});
        if (rng.bernoulli(0.5)) add_split(walls, rng, x0, y0, x1, pos, depth + 1, max_depth);
        if (rng.bernoulli(0.5)) add_split(walls, rng, x0, pos, x1, y1, depth + 1, max_depth);
    }
}

inline std::array<float, 3> category_albedo(int category) {
    static constexpr std::array<std::array<float, 3>, kNumCategories> base{{
        {0.82f, 0.20f, 0.18f},  // 0
        {0.18f, 0.72f, 0.25f},  // 1
        {0.20f, 0.32f, 0.85f},  // 2
        {0.85f, 0.78f, 0.18f},  // 3
        {0.78f, 0.22f, 0.75f},  // 4
        {0.18f, 0.72f, 0.72f},  // 5
    }};
    return base[static_cast<size_t>(category)];
}

}  // namespace detail

// Deterministic in (seed, profile). Interior layouts are retried until the
// largest free component covers at least 80% of free cells; the forced
// category seed % 6 guarantees full category coverage over any 6 consecutive
// seeds.
inline SceneSpec generate_scene(std::uint64_t seed, const GenProfile& profile = {}) {
    Rng rng(derive_seed(seed, 0x5ce4eULL));
    for (int attempt = 0; attempt < 25; ++attempt) {
        SceneSpec s;
        s.seed = seed;
        s.extent_x = detail::quant(rng.uniform_f(profile.min_extent, profile.max_extent));
        s.extent_y = detail::quant(rng.uniform_f(profile.min_extent, profile.max_extent));
        for (int c = 0; c < 3; ++c) {
            s.wall_albedo[static_cast<size_t>(c)] = rng.uniform_f(0.5f, 0.72f);
            s.floor_albedo[static_cast<size_t>(c)] = rng.uniform_f(0.24f, 0.4f);
        }
        const float ex = s.extent_x, ey = s.extent_y;
        s.walls.push_back({{0, 0}, {ex, 0}, rng.range_int(0, 2)});
        s.walls.push_back({{ex, 0}, {ex, ey}, rng.range_int(0, 2)});
        s.walls.push_back({{ex, ey}, {0, ey}, rng.range_int(0, 2)});
        s.walls.push_back({{0, ey}, {0, 0}, rng.range_int(0, 2)});
        detail::add_split(s.walls, rng, 0, 0, ex, ey, 0, profile.max_split_depth);

        const int want = rng.range_int(profile.min_objects, profile.max_objects);
        for (int k = 0; k < want; ++k) {
            const int category =
                k == 0 ? static_cast<int>(seed % kNumCategories) : rng.range_int(0, 5);
            for (int t = 0; t < 50; ++t) {
                const float hw = rng.uniform_f(0.25f, 0.6f), hh = rng.uniform_f(0.25f, 0.6f);
                const float cx = rng.uniform_f(hw + 0.3f, ex - hw - 0.3f);
                const float cy = rng.uniform_f(hh + 0.3f, ey - hh - 0.3f);
                ObjectSpec obj;
                obj.category = category;
                obj.poly = {{cx - hw, cy - hh}, {cx + hw, cy - hh}, {cx + hw, cy + hh},
                            {cx - hw, cy + hh}};
                obj.height = rng.uniform_f(0.4f, 1.6f);
                obj.albedo = detail::category_albedo(category);
                for (auto& ch : obj.albedo)
                    ch = std::min(0.95f, std::max(0.05f, ch + rng.uniform_f(-0.08f, 0.08f)));

                bool ok = true;
                for (const auto& w : s.walls) {
                    for (size_t i = 0, j = 3; ok && i < 4; j = i++)
                        if (dist_segment_segment(obj.poly[j], obj.poly[i], w.a, w.b) < 0.45f)
                            ok = false;
                    if (!ok) break;
                }
                for (const auto& other : s.objects) {
                    if (!ok) break;
                    for (size_t i = 0, j = 3; ok && i < 4; j = i++)
                        for (size_t m = 0, n = 3; ok && m < 4; n = m++)
                            if (dist_segment_segment(obj.poly[j], obj.poly[i], other.poly[n],
                                                     other.poly[m]) < 0.5f)
                                ok = false;
                    if (ok && point_in_poly({cx, cy}, other.poly)) ok = false;
                }
                if (ok) {
                    s.objects.push_back(std::move(obj));
                    break;
                }
            }
        }
        if (static_cast<int>(s.objects.size()) < std::max(1, profile.min_objects)) continue;
        bool has_forced = false;
        for (const auto& o : s.objects)
            if (o.category == static_cast<int>(seed % kNumCategories)) has_forced = true;
        if (!has_forced) continue;

        const SpawnMap map = build_spawn_map(s);
        if (map.free_cells >= 30 &&
            map.largest_component * 5 >= map.free_cells * 4)  // >= 80% reachable
            return s;
    }
    throw ContractError("generate_scene: no valid layout for seed " + std::to_string(seed));
}

// ---- text dump and occupancy export ----

namespace detail {

inline void append_float(std::string& out, float v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, r.ptr);
}

}  // namespace detail

// One line per record; floats printed shortest-round-trip.
inline std::string dump_scene_text(const SceneSpec& s) {
    std::string out = "scene seed=" + std::to_string(s.seed) + " extent=";
    detail::append_float(out, s.extent_x);
    out += " ";
    detail::append_float(out, s.extent_y);
    out += " walls=" + std::to_string(s.walls.size()) +
           " objects=" + std::to_string(s.objects.size()) + "\n";
    for (const auto& w : s.walls) {
        out += "wall";
        for (float v : {w.a.x, w.a.y, w.b.x, w.b.y}) {
            out += " ";
            detail::append_float(out, v);
        }
        out += " tex=" + std::to_string(w.texture) + "\n";
    }
    for (const auto& o : s.objects) {
        out += "object cat=" + std::to_string(o.category) + " height=";
        detail::append_float(out, o.height);
        out += " albedo=";
        for (int c = 0; c < 3; ++c) {
            if (c) out += " ";
            detail::append_float(out, o.albedo[static_cast<size_t>(c)]);
        }
        out += " poly=";
        for (size_t i = 0; i < o.poly.size(); ++i) {
            if (i) out += " ";
            detail::append_float(out, o.poly[i].x);
            out += " ";
            detail::append_float(out, o.poly[i].y);
        }
        out += "\n";
    }
    return out;
}

// Occupancy snapshot: white = spawnable, gray = free but unreachable,
// black = blocked.
inline std::vector<std::uint8_t> occupancy_gray(const SceneSpec& s, int& nx, int& ny) {
    const SpawnMap m = build_spawn_map(s);
    nx = m.nx;
    ny = m.ny;
    std::vector<std::uint8_t> g(m.free.size(), 0);
    for (size_t k = 0; k < m.free.size(); ++k)
        g[k] = m.spawnable[k] ? 255 : (m.free[k] ? 96 : 0);
    return g;
}

}  // namespace alp::worldsim
