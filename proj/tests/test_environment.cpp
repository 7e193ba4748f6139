#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "robomag/config.hpp"
#include "robomag/environment.hpp"

using namespace robomag;

namespace {

const std::string kData = ROBOMAG_DATA_DIR;

JointConfig random_joints(const DHTable& dh, std::mt19937_64& rng) {
  JointConfig q;
  for (int i = 0; i < 6; ++i) {
    std::uniform_real_distribution<double> u(dh.rows[static_cast<std::size_t>(i)].q_min,
                                              dh.rows[static_cast<std::size_t>(i)].q_max);
    q[i] = u(rng);
  }
  return q;
}

Environment walled() {
  const auto path = std::filesystem::path(kData) / "environments" / "walled.json";
  return Environment::load(manifest_from_json(detail::read_json_file(path), path.parent_path()));
}

struct Fixture : ::testing::Test {
  DHTable dh = nominal_dh_table();
  MagnetSpec magnet = nominal_magnet();
  RobotBody body = default_robot_body(nominal_dh_table(), nominal_magnet());
};

}  // namespace

TEST_F(Fixture, BodyHasOneCapsulePerLinkPlusTool) {
  EXPECT_EQ(body.capsules.size(), 7u);
  EXPECT_NO_THROW(body.validate());
  EXPECT_EQ(body.capsules.back().frame, kToolFrame);
  RobotBody bad = body;
  bad.capsules[2].radius = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST_F(Fixture, EmptyEnvironmentIsClearWithInfiniteDistance) {
  const auto r = check_collision(body, dh, JointConfig::Zero(), Environment());
  EXPECT_TRUE(r.clear);
  EXPECT_TRUE(std::isinf(r.min_distance));
}

TEST_F(Fixture, EnclosedBaseCollides) {
  const Environment env({box_mesh(Vec3(-0.2, -0.2, -0.05), Vec3(0.2, 0.2, 0.12), "enclosure")});
  const auto r = check_collision(body, dh, JointConfig::Zero(), env);
  EXPECT_FALSE(r.clear);
  EXPECT_EQ(r.min_distance, 0.0);
}

TEST_F(Fixture, BaseInsideLargeClosedBoxCollidesWithoutTouchingFaces) {
  // closed mesh far larger than the robot: containment, not surface contact
  const Environment env({box_mesh(Vec3(-5, -5, -5), Vec3(5, 5, 5))});
  EXPECT_FALSE(check_collision(body, dh, JointConfig::Zero(), env).clear);
}

TEST(CapsuleDistance, PlaneAtKnownClearance) {
  const DHTable dh = nominal_dh_table();
  RobotBody one;
  one.capsules.push_back({0, Vec3(0, 0, 0), Vec3(0, 0, 0.1), 0.02});
  for (double d : {0.001, 0.013, 0.05, 0.3}) {
    const double x = 0.02 + d;
    const Environment env({quad_mesh(Vec3(x, -1, -1), Vec3(0, 2, 0), Vec3(0, 0, 2), "plane")});
    const auto r = check_collision(one, dh, JointConfig::Zero(), env);
    EXPECT_TRUE(r.clear);
    EXPECT_NEAR(r.min_distance, d, 1e-6);
  }
  const Environment touching({quad_mesh(Vec3(0.015, -1, -1), Vec3(0, 2, 0), Vec3(0, 0, 2))});
  const auto r = check_collision(one, dh, JointConfig::Zero(), touching);
  EXPECT_FALSE(r.clear);
  EXPECT_EQ(r.min_distance, 0.0);
}

TEST(CapsuleDistance, TiltedPlaneAgainstEndpoint) {
  const DHTable dh = nominal_dh_table();
  RobotBody one;
  one.capsules.push_back({0, Vec3(0, 0, 0), Vec3(0.1, 0, 0.1), 0.01});
  // plane through (0.3, 0, 0) with normal (1, 0, 1)/sqrt2; closest capsule point is (0.1, 0, 0.1)
  const Vec3 n = Vec3(1, 0, 1).normalized();
  const Vec3 o(0.3, 0, 0);
  const Vec3 u = Vec3(0, 1, 0), v = n.cross(u);
  const Environment env({quad_mesh(o - 2 * u - 2 * v, 4 * u, 4 * v)});
  const double expected = std::abs((Vec3(0.1, 0, 0.1) - o).dot(n)) - 0.01;
  EXPECT_NEAR(check_collision(one, dh, JointConfig::Zero(), env).min_distance, expected, 1e-6);
}

TEST_F(Fixture, ClearIffPositiveDistance) {
  const Environment env = walled();
  std::mt19937_64 rng(51);
  int clear = 0, hit = 0;
  for (int i = 0; i < 400; ++i) {
    const auto r = check_collision(body, dh, random_joints(dh, rng), env);
    EXPECT_EQ(r.clear, r.min_distance > 0.0);
    (r.clear ? clear : hit)++;
  }
  EXPECT_GT(clear, 0);
  EXPECT_GT(hit, 0);
}

TEST_F(Fixture, ShrinkingNeverCreatesCollision) {
  const Environment env = walled();
  std::mt19937_64 rng(52);
  for (int i = 0; i < 300; ++i) {
    const JointConfig q = random_joints(dh, rng);
    const auto full = check_collision(body, dh, q, env);
    for (double margin : {0.001, 0.005, 0.02}) {
      const auto small = check_collision(body.shrunk(margin), dh, q, env);
      if (full.clear) {
        EXPECT_TRUE(small.clear);
      }
      EXPECT_GE(small.min_distance, full.min_distance);
    }
  }
}

TEST_F(Fixture, PathFeasibleTrivialCases) {
  JointConfig a;
  a << 0.2, -0.3, 0.4, 0.0, 0.5, 0.0;
  const Environment env = walled();
  ASSERT_TRUE(check_collision(body, dh, a, env).clear);
  EXPECT_TRUE(path_feasible(body, dh, a, a, env));
  std::mt19937_64 rng(53);
  for (int i = 0; i < 20; ++i)
    EXPECT_TRUE(path_feasible(body, dh, random_joints(dh, rng), random_joints(dh, rng), Environment(), 0.05));
}

TEST_F(Fixture, PathBlockedByObstacleMidSweep) {
  JointConfig mid;
  mid << 0.0, -0.3, 0.3, 0.0, 0.6, 0.0;
  const Vec3 tcp = forward_kinematics(dh, mid).position;
  const Environment env({box_mesh(tcp - Vec3(0.02, 0.02, 0.02), tcp + Vec3(0.02, 0.02, 0.02), "post")});
  JointConfig a = mid, b = mid;
  a[0] = -1.2;
  b[0] = 1.2;
  ASSERT_TRUE(check_collision(body, dh, a, env).clear);
  ASSERT_TRUE(check_collision(body, dh, b, env).clear);
  ASSERT_FALSE(check_collision(body, dh, mid, env).clear);
  EXPECT_FALSE(path_feasible(body, dh, a, b, env));
  // going the other way round the base avoids it
  JointConfig c = a;
  c[0] = -2.9;
  EXPECT_TRUE(path_feasible(body, dh, a, c, env));
}

TEST_F(Fixture, PathEndpointInCollision) {
  const Environment env({box_mesh(Vec3(-0.2, -0.2, -0.05), Vec3(0.2, 0.2, 0.12))});
  try {
    path_feasible(body, dh, JointConfig::Zero(), JointConfig::Zero(), env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EndpointInCollision);
  }
}

TEST_F(Fixture, FinerPathStepIsConservative) {
  const Environment env = walled();
  std::mt19937_64 rng(54);
  int checked = 0;
  while (checked < 40) {
    const JointConfig a = random_joints(dh, rng), b = random_joints(dh, rng);
    if (!check_collision(body, dh, a, env).clear || !check_collision(body, dh, b, env).clear) continue;
    ++checked;
    for (double step : {0.2, 0.1, 0.05}) {
      const bool coarse = path_feasible(body, dh, a, b, env, step);
      const bool fine = path_feasible(body, dh, a, b, env, step / 2);
      if (!coarse) {
        EXPECT_FALSE(fine);
      }
    }
  }
}

TEST_F(Fixture, PartitionEmptyEnvironmentAllReachable) {
  std::mt19937_64 rng(55);
  std::vector<Pose> poses;
  for (int i = 0; i < 25; ++i) poses.push_back(forward_kinematics(dh, random_joints(dh, rng)));
  const auto part = partition_pose_dictionary(poses, dh, body, Environment(), JointConfig::Zero());
  ASSERT_EQ(part.size(), poses.size());
  for (std::size_t i = 0; i < part.size(); ++i) {
    EXPECT_EQ(part[i].status, FeasibilityStatus::Reachable) << i;
    EXPECT_TRUE(part[i].joints.has_value());
    EXPECT_EQ(part[i].pose, poses[i]);
  }
}

TEST_F(Fixture, PartitionBeyondReachIsIkFailure) {
  const std::vector<Pose> poses{Pose(Vec3(2.0, 0, 0.2), 0, 0, 0), Pose(Vec3(0, 0, -3), 0, 0, 0)};
  for (const auto& pf : partition_pose_dictionary(poses, dh, body, Environment(), JointConfig::Zero())) {
    EXPECT_EQ(pf.status, FeasibilityStatus::IkFailure);
    EXPECT_FALSE(pf.joints.has_value());
  }
}

TEST_F(Fixture, PartitionHalfSpaceWall) {
  // solid wall filling y < y_wall; magnet centres beyond it must collide
  const Vec3 sample(0.3, 0.0, 0.2);
  const double y_wall = -0.05;
  const Environment env({box_mesh(Vec3(-1, -1, -1), Vec3(1, y_wall, 1), "half-space")});
  std::vector<Pose> poses;
  for (double az = -90; az <= 90; az += 15)
    for (double ay = -30; ay <= 30; ay += 15)
      poses.push_back(magnet_pose_for_field_direction(sample, deg2rad(ay), deg2rad(az), 0.1));
  const auto part = partition_pose_dictionary(poses, dh, body, env, JointConfig::Zero());
  int collide = 0, with_joints = 0;
  for (const auto& pf : part) {
    EXPECT_EQ(pf.joints.has_value(), pf.status != FeasibilityStatus::IkFailure);
    if (pf.joints) ++with_joints;
    if (pf.status == FeasibilityStatus::Collision) ++collide;
    if (pf.joints && pf.pose.position.y() < y_wall) {
      EXPECT_EQ(pf.status, FeasibilityStatus::Collision);
    }
    if (pf.status == FeasibilityStatus::Reachable) {
      EXPECT_GT(pf.pose.position.y(), y_wall);
    }
  }
  const double frac = static_cast<double>(collide) / with_joints;
  EXPECT_GT(frac, 0.25);
  EXPECT_LT(frac, 0.75);
}

TEST_F(Fixture, PartitionIsDeterministic) {
  const Environment env = walled();
  std::vector<Pose> poses;
  for (double az = 0; az <= 90; az += 15)
    for (double ay = 0; ay <= 90; ay += 30)
      poses.push_back(magnet_pose_for_field_direction(Vec3(0.3, 0.08, 0.15), deg2rad(ay), deg2rad(az), 0.1));
  const auto a = partition_pose_dictionary(poses, dh, body, env, JointConfig::Zero());
  const auto b = partition_pose_dictionary(poses, dh, body, env, JointConfig::Zero());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].status, b[i].status);
    EXPECT_EQ(a[i].joints.has_value(), b[i].joints.has_value());
    if (a[i].joints) {
      EXPECT_EQ(*a[i].joints, *b[i].joints);
    }
    EXPECT_EQ(a[i].min_distance, b[i].min_distance);
  }
}
