// Trajectory logging and exploration-coverage accounting: poses stream to a
// compact binary log during training; export quantizes them onto the 0.25 m
// grid, counts unique cells, and renders a tone-mapped PGM.
#pragma once

#include <map>
#include <set>

#include "alp/binio.hpp"
#include "alp/rollout.hpp"

namespace alp::coverage {

// Visit counts on the spawn-map grid. Poses may leave the nominal extents by
// a fraction of a cell (collision slack), so indices clamp to the edge.
struct CoverageGrid {
    int nx = 0, ny = 0;
    std::vector<std::int64_t> visits;
    std::set<int> seen;

    CoverageGrid(float extent_x, float extent_y) {
        nx = std::max(1, static_cast<int>(std::floor(extent_x / worldsim::kCell + 0.5f)));
        ny = std::max(1, static_cast<int>(std::floor(extent_y / worldsim::kCell + 0.5f)));
        visits.assign(static_cast<size_t>(nx) * ny, 0);
    }

    int cell_of(float x, float y) const {
        int i = static_cast<int>(std::floor(x / worldsim::kCell));
        int j = static_cast<int>(std::floor(y / worldsim::kCell));
        i = std::min(std::max(i, 0), nx - 1);
        j = std::min(std::max(j, 0), ny - 1);
        return j * nx + i;
    }

    void visit(float x, float y) {
        const int c = cell_of(x, y);
        ++visits[static_cast<size_t>(c)];
        seen.insert(c);
    }

    std::int64_t unique_cells() const { return static_cast<std::int64_t>(seen.size()); }
};

// Marks a record as an episode-start pose rather than an executed action, so
// a replayed path includes the spawn cell.
constexpr std::uint8_t kSpawnMarker = 255;

// One record per executed action, carrying the pose the action resolved to
// (post-move; post-reset when the action ended the episode, in which case
// `done` is set and the pose opens the next episode).
struct TrajStep {
    std::uint32_t env = 0;
    std::uint64_t step = 0;
    float x = 0.f, y = 0.f, heading = 0.f;
    std::uint8_t action = 0;  // kSpawnMarker for episode-start records
    std::uint8_t done = 0;
    std::uint32_t scene_id = 0;
};

constexpr std::uint32_t kTrajVersion = 1;

class TrajectoryWriter {
public:
    explicit TrajectoryWriter(const std::string& path) : os_(binio::open_out(path)) {
        binio::write_magic(os_, "ALPT");
        binio::write_pod<std::uint32_t>(os_, kTrajVersion);
    }

    void append(const TrajStep& s) {
        binio::write_pod<std::uint32_t>(os_, s.env);
        binio::write_pod<std::uint64_t>(os_, s.step);
        binio::write_pod<float>(os_, s.x);
        binio::write_pod<float>(os_, s.y);
        binio::write_pod<float>(os_, s.heading);
        binio::write_pod<std::uint8_t>(os_, s.action);
        binio::write_pod<std::uint8_t>(os_, s.done);
        binio::write_pod<std::uint32_t>(os_, s.scene_id);
    }

    void append_spawn(std::uint32_t env, std::uint64_t step, const rollout::AgentPose& pose,
                      std::uint32_t scene_id) {
        append(TrajStep{env, step, pose.x, pose.y, pose.heading_deg, kSpawnMarker, 0, scene_id});
    }

    // The batch stores decision-time poses, so the pose an action reached is
    // the next transition's; the window's last action resolves to `end_pose`
    // (the environment's pose right after collection).
    void append_batch(const rollout::RolloutBatch& batch,
                      const std::vector<rollout::AgentPose>& end_poses) {
        if (static_cast<int>(end_poses.size()) != batch.num_envs)
            throw ContractError("trajectory: need one end pose per environment");
        for (int e = 0; e < batch.num_envs; ++e)
            for (int t = 0; t < batch.len; ++t) {
                const rollout::Transition& tr = batch.at(e, t);
                const rollout::AgentPose after = t + 1 < batch.len
                                                     ? batch.at(e, t + 1).pose
                                                     : end_poses[static_cast<size_t>(e)];
                TrajStep s;
                s.env = static_cast<std::uint32_t>(e);
                s.step = tr.step_index;
                s.x = after.x;
                s.y = after.y;
                s.heading = after.heading_deg;
                s.action = static_cast<std::uint8_t>(tr.action);
                s.done = tr.done ? 1 : 0;
                s.scene_id = static_cast<std::uint32_t>(tr.scene_id);
                append(s);
            }
    }

    void close() {
        if (!os_.is_open()) return;
        os_.flush();
        if (!os_) throw IoError("trajectory: write failed");
        os_.close();
    }

private:
    std::ofstream os_;
};

inline std::vector<TrajStep> load_trajectory(std::istream& is) {
    binio::expect_magic(is, "ALPT", "trajectory");
    const auto version = binio::read_pod<std::uint32_t>(is, "trajectory version");
    if (version != kTrajVersion)
        throw IoError("trajectory: unsupported version " + std::to_string(version));
    std::vector<TrajStep> out;
    while (is.peek() != std::char_traits<char>::eof()) {
        TrajStep s;
        s.env = binio::read_pod<std::uint32_t>(is, "traj env");
        s.step = binio::read_pod<std::uint64_t>(is, "traj step");
        s.x = binio::read_pod<float>(is, "traj x");
        s.y = binio::read_pod<float>(is, "traj y");
        s.heading = binio::read_pod<float>(is, "traj heading");
        s.action = binio::read_pod<std::uint8_t>(is, "traj action");
        s.done = binio::read_pod<std::uint8_t>(is, "traj done");
        s.scene_id = binio::read_pod<std::uint32_t>(is, "traj scene id");
        out.push_back(s);
    }
    return out;
}

inline std::vector<TrajStep> load_trajectory(const std::string& path) {
    auto is = binio::open_in(path);
    return load_trajectory(is);
}

struct CoverageSummary {
    std::uint32_t scene_id = 0;
    std::int64_t unique_cells = 0;
    std::int64_t path_steps = 0;  // executed actions (spawn markers excluded)
    double path_length_m = 0.0;   // summed displacement along unbroken paths
};

// Tone map: 0 visits -> 0, else 64 + a log ramp to 255. Log keeps single
// visits visible next to heavily revisited cells.
inline std::uint8_t tone_map(std::int64_t visits, std::int64_t max_visits) {
    if (visits <= 0) return 0;
    const double t = std::log1p(static_cast<double>(visits)) /
                     std::log1p(static_cast<double>(std::max<std::int64_t>(max_visits, 1)));
    return static_cast<std::uint8_t>(std::lround(64.0 + t * 191.0));
}

// Replays one scene's records onto the grid and writes a P5 PGM (row 0 = top
// = max y). A nonempty comment lands in the header, so images can carry the
// run's config hash.
inline CoverageSummary export_coverage(const std::vector<TrajStep>& log,
                                       const worldsim::SceneSpec& scene, std::uint32_t scene_id,
                                       std::ostream& pgm, const std::string& comment = "") {
    CoverageGrid grid(scene.extent_x, scene.extent_y);
    CoverageSummary sum;
    sum.scene_id = scene_id;
    bool any = false;

    // chain of consecutive poses per env; spawns and episode ends break it
    std::map<std::uint32_t, rollout::AgentPose> last;
    for (const TrajStep& s : log) {
        if (s.scene_id != scene_id) continue;
        any = true;
        grid.visit(s.x, s.y);
        const bool fresh = s.action == kSpawnMarker || s.done;
        if (!fresh) {
            ++sum.path_steps;
            auto it = last.find(s.env);
            if (it != last.end()) {
                const float dx = s.x - it->second.x, dy = s.y - it->second.y;
                sum.path_length_m += std::sqrt(static_cast<double>(dx) * dx +
                                               static_cast<double>(dy) * dy);
            }
        } else if (s.done) {
            ++sum.path_steps;  // the capped action still happened
        }
        last[s.env] = rollout::AgentPose{s.x, s.y, s.heading};
    }
    if (!any)
        throw ContractError("export_coverage: no records for scene " + std::to_string(scene_id));
    sum.unique_cells = grid.unique_cells();

    std::int64_t max_visits = 0;
    for (std::int64_t v : grid.visits) max_visits = std::max(max_visits, v);
    pgm << "P5\n";
    if (!comment.empty()) pgm << "# " << comment << "\n";
    pgm << grid.nx << " " << grid.ny << "\n255\n";
    for (int j = grid.ny - 1; j >= 0; --j)
        for (int i = 0; i < grid.nx; ++i) {
            const std::uint8_t g =
                tone_map(grid.visits[static_cast<size_t>(j) * grid.nx + i], max_visits);
            pgm.put(static_cast<char>(g));
        }
    if (!pgm) throw IoError("export_coverage: image write failed");
    return sum;
}

}  // namespace alp::coverage
