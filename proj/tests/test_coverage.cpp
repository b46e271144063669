#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "alp/coverage.hpp"

using namespace alp;
using namespace alp::coverage;

namespace {

worldsim::SceneSpec empty_room(float w, float h) {
    worldsim::SceneSpec s;
    s.extent_x = w;
    s.extent_y = h;
    s.walls = {{{0, 0}, {w, 0}, 0}, {{w, 0}, {w, h}, 1}, {{w, h}, {0, h}, 2}, {{0, h}, {0, 0}, 3}};
    return s;
}

TrajStep rec(std::uint32_t env, std::uint64_t step, float x, float y, std::uint8_t action,
             bool done = false, std::uint32_t scene = 7) {
    return TrajStep{env, step, x, y, 0.f, action, static_cast<std::uint8_t>(done), scene};
}

}  // namespace

TEST(CoverageGrid, UniqueCellCountIsMonotonicAndMatchesBruteForce) {
    CoverageGrid g(4.f, 4.f);
    ASSERT_EQ(g.nx, 16);
    ASSERT_EQ(g.ny, 16);

    Rng rng(5);
    std::set<std::pair<int, int>> brute;
    std::int64_t prev = 0;
    for (int i = 0; i < 500; ++i) {
        const float x = rng.uniform_f(0.01f, 3.99f), y = rng.uniform_f(0.01f, 3.99f);
        g.visit(x, y);
        brute.insert({static_cast<int>(std::floor(x / 0.25f)),
                      static_cast<int>(std::floor(y / 0.25f))});
        EXPECT_GE(g.unique_cells(), prev);
        prev = g.unique_cells();
        ASSERT_EQ(g.unique_cells(), static_cast<std::int64_t>(brute.size()));
    }

    std::int64_t total = 0;
    for (auto v : g.visits) total += v;
    EXPECT_EQ(total, 500);
}

TEST(Trajectory, LogRoundTripsThroughDisk) {
    const std::string path =
        (std::filesystem::temp_directory_path() / "alp_traj_rt.alpt").string();
    std::vector<TrajStep> steps;
    Rng rng(9);
    for (int i = 0; i < 200; ++i)
        steps.push_back(rec(static_cast<std::uint32_t>(rng.below(4)), static_cast<std::uint64_t>(i),
                            rng.uniform_f(0.f, 5.f), rng.uniform_f(0.f, 5.f),
                            static_cast<std::uint8_t>(rng.below(3)), rng.below(10) == 0,
                            static_cast<std::uint32_t>(1000 + rng.below(2))));
    {
        TrajectoryWriter w(path);
        for (const auto& s : steps) w.append(s);
        w.close();
    }
    const auto loaded = load_trajectory(path);
    ASSERT_EQ(loaded.size(), steps.size());
    for (size_t i = 0; i < steps.size(); ++i) {
        EXPECT_EQ(loaded[i].env, steps[i].env);
        EXPECT_EQ(loaded[i].step, steps[i].step);
        EXPECT_EQ(loaded[i].x, steps[i].x);
        EXPECT_EQ(loaded[i].y, steps[i].y);
        EXPECT_EQ(loaded[i].action, steps[i].action);
        EXPECT_EQ(loaded[i].done, steps[i].done);
        EXPECT_EQ(loaded[i].scene_id, steps[i].scene_id);
    }
    std::filesystem::remove(path);
}

TEST(ExportCoverage, StationaryAgentCoversOneCell) {
    const auto scene = empty_room(4.f, 4.f);
    std::vector<TrajStep> log;
    log.push_back(rec(0, 0, 2.1f, 2.1f, kSpawnMarker));
    for (int i = 0; i < 10; ++i)
        log.push_back(rec(0, static_cast<std::uint64_t>(i), 2.1f, 2.1f, worldsim::kTurnLeft));

    std::ostringstream pgm;
    const CoverageSummary s = export_coverage(log, scene, 7, pgm);
    EXPECT_EQ(s.unique_cells, 1);
    EXPECT_EQ(s.path_steps, 10);
    EXPECT_DOUBLE_EQ(s.path_length_m, 0.0);
}

TEST(ExportCoverage, StraightWalkCountsStartPlusEachStep) {
    const auto scene = empty_room(8.f, 4.f);
    std::vector<TrajStep> log;
    // spawn at x=1.125, then 10 forward steps of 0.25 m along +x
    log.push_back(rec(0, 0, 1.125f, 2.125f, kSpawnMarker));
    for (int i = 1; i <= 10; ++i)
        log.push_back(rec(0, static_cast<std::uint64_t>(i), 1.125f + 0.25f * i, 2.125f,
                          worldsim::kForward));

    std::ostringstream pgm;
    const CoverageSummary s = export_coverage(log, scene, 7, pgm);
    EXPECT_EQ(s.unique_cells, 11);
    EXPECT_EQ(s.path_steps, 10);
    EXPECT_NEAR(s.path_length_m, 2.5, 1e-5);
}

TEST(ExportCoverage, EpisodeEndsBreakTheDisplacementChain) {
    const auto scene = empty_room(8.f, 8.f);
    std::vector<TrajStep> log;
    log.push_back(rec(0, 0, 1.1f, 1.1f, kSpawnMarker));
    log.push_back(rec(0, 1, 1.35f, 1.1f, worldsim::kForward));
    // episode caps: the record carries the fresh spawn on the far side
    log.push_back(rec(0, 2, 6.9f, 6.9f, worldsim::kForward, true));
    log.push_back(rec(0, 3, 7.15f, 6.9f, worldsim::kForward));

    std::ostringstream pgm;
    const CoverageSummary s = export_coverage(log, scene, 7, pgm);
    // teleport distance excluded: 0.25 + 0.25
    EXPECT_NEAR(s.path_length_m, 0.5, 1e-5);
    EXPECT_EQ(s.path_steps, 3);
    EXPECT_EQ(s.unique_cells, 4);
}

TEST(ExportCoverage, PgmHeaderCommentAndFiltering) {
    const auto scene = empty_room(4.f, 3.f);
    std::vector<TrajStep> log;
    log.push_back(rec(0, 0, 0.6f, 0.6f, kSpawnMarker, false, 7));
    log.push_back(rec(0, 0, 1.6f, 1.6f, kSpawnMarker, false, 8));  // other scene

    std::ostringstream pgm;
    const CoverageSummary s = export_coverage(log, scene, 7, pgm, "hash=abc123");
    EXPECT_EQ(s.unique_cells, 1);

    const std::string img = pgm.str();
    EXPECT_EQ(img.rfind("P5\n# hash=abc123\n16 12\n255\n", 0), 0u);
    EXPECT_EQ(img.size(), std::string("P5\n# hash=abc123\n16 12\n255\n").size() + 16u * 12u);

    // exactly one lit pixel, at the spawn cell (row flipped: y=0.6 -> cell 2)
    const std::string body = img.substr(img.size() - 16 * 12);
    int lit = 0;
    size_t where = 0;
    for (size_t i = 0; i < body.size(); ++i)
        if (body[i] != 0) {
            ++lit;
            where = i;
        }
    EXPECT_EQ(lit, 1);
    EXPECT_EQ(where % 16, 2u);        // x = 0.6 / 0.25
    EXPECT_EQ(where / 16, 12u - 1 - 2);  // y flipped

    EXPECT_THROW(export_coverage(log, scene, 9, pgm), ContractError);
}

TEST(Trajectory, BatchAppendRecordsPostActionPoses) {
    rollout::RolloutBatch b;
    b.num_envs = 1;
    b.len = 3;
    b.steps.resize(3);
    b.at(0, 0).pose = {1.0f, 1.0f, 0.f};
    b.at(0, 0).action = worldsim::kForward;
    b.at(0, 0).scene_id = 7;
    b.at(0, 0).step_index = 0;
    b.at(0, 1).pose = {1.25f, 1.0f, 0.f};
    b.at(0, 1).action = worldsim::kTurnLeft;
    b.at(0, 1).scene_id = 7;
    b.at(0, 1).step_index = 1;
    b.at(0, 2).pose = {1.25f, 1.0f, 30.f};
    b.at(0, 2).action = worldsim::kForward;
    b.at(0, 2).scene_id = 7;
    b.at(0, 2).step_index = 2;

    const std::string path =
        (std::filesystem::temp_directory_path() / "alp_traj_batch.alpt").string();
    {
        TrajectoryWriter w(path);
        w.append_spawn(0, 0, b.at(0, 0).pose, 7);
        w.append_batch(b, {rollout::AgentPose{1.466506f, 1.125f, 30.f}});
        w.close();
    }
    const auto log = load_trajectory(path);
    std::filesystem::remove(path);

    ASSERT_EQ(log.size(), 4u);
    EXPECT_EQ(log[0].action, kSpawnMarker);
    EXPECT_EQ(log[1].x, 1.25f);  // pose reached by the first forward
    EXPECT_EQ(log[2].x, 1.25f);  // turning in place
    EXPECT_EQ(log[2].heading, 30.f);
    EXPECT_EQ(log[3].x, 1.466506f);  // window end pose
}
