#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles/fk_chain.hpp"
#include "oracles/rotations.hpp"
#include "robomag/kinematics.hpp"

using namespace robomag;

namespace {

JointConfig random_joints(const DHTable& dh, std::mt19937_64& rng, double margin = 0.0) {
  JointConfig q;
  for (int i = 0; i < 6; ++i) {
    const auto& r = dh.rows[static_cast<std::size_t>(i)];
    std::uniform_real_distribution<double> u(r.q_min + margin, r.q_max - margin);
    q[i] = u(rng);
  }
  return q;
}

}  // namespace

TEST(NormalizeAngle, HalfOpenInterval) {
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(-3 * kPi), kPi, 1e-12);
  EXPECT_NEAR(normalize_angle(2 * kPi + 0.3), 0.3, 1e-12);
  EXPECT_NEAR(normalize_angle(-0.3), -0.3, 1e-15);
}

TEST(Pose, AnglesNormalisedOnConstruction) {
  const Pose p(Vec3::Zero(), 4.0, -4.0, -kPi);
  for (double a : {p.alpha_x, p.alpha_y, p.alpha_z}) {
    EXPECT_GT(a, -kPi);
    EXPECT_LE(a, kPi);
  }
  EXPECT_DOUBLE_EQ(p.alpha_z, kPi);
}

TEST(Pose, RotationIsProperOrthonormal) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int i = 0; i < 200; ++i) {
    const Pose p(Vec3::Zero(), u(rng), u(rng), u(rng));
    const Mat3 r = p.rotation();
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Pose, RotationMatrixRoundTrip) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-kPi, kPi), uy(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Pose p(Vec3(0.1, 0.2, 0.3), u(rng), uy(rng), u(rng));
    const Pose q = Pose::from_matrix(p.matrix());
    EXPECT_LT((p.rotation() - q.rotation()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(q.alpha_x, p.alpha_x, 1e-9);
    EXPECT_NEAR(q.alpha_y, p.alpha_y, 1e-9);
    EXPECT_NEAR(q.alpha_z, p.alpha_z, 1e-9);
  }
}

TEST(UnitNormal, IdentityAndQuarterTurn) {
  const Vec3 a = unit_normal(0, 0).vec();
  EXPECT_NEAR(a.x(), 1, 1e-15);
  EXPECT_NEAR(a.y(), 0, 1e-15);
  EXPECT_NEAR(a.z(), 0, 1e-15);
  const Vec3 b = unit_normal(kPi / 2, 0).vec();
  EXPECT_NEAR(b.x(), 0, 1e-15);
  EXPECT_NEAR(b.y(), 0, 1e-15);
  EXPECT_NEAR(b.z(), -1, 1e-15);
}

TEST(UnitNormal, MatchesExplicitMatrixProduct) {
  const auto o = oracle::unit_normal(0.3, 0.7);
  const Vec3 n = unit_normal(0.3, 0.7).vec();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(n[i], o[static_cast<std::size_t>(i)], 1e-15);
}

TEST(UnitNormal, PropertyUnitNormAndPoseAxis) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2 * kPi, 2 * kPi);
  for (int i = 0; i < 1000; ++i) {
    const double ay = u(rng), az = u(rng);
    const Vec3 n = unit_normal(ay, az).vec();
    EXPECT_NEAR(n.norm(), 1.0, 1e-12);
    const auto o = oracle::unit_normal(ay, az);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(n[k], o[static_cast<std::size_t>(k)], 1e-14);
    // x-axis of any pose with these angles, whatever alpha_x
    const Pose p(Vec3::Zero(), u(rng), ay, az);
    EXPECT_LT((p.x_axis() - n).norm(), 1e-12);
  }
}

TEST(UnitNormal, ZeroElevationSweepsHorizontalPlane) {
  for (double az = -3.0; az <= 3.0; az += 0.25) {
    const Vec3 n = unit_normal(0.0, az).vec();
    EXPECT_NEAR(n.z(), 0.0, 1e-15);
    EXPECT_NEAR(std::atan2(n.y(), n.x()), az, 1e-12);
  }
}

TEST(UnitVector, RejectsZero) {
  try {
    UnitVector::from(Vec3::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(DHTable, NominalIsValidWithSixRows) {
  const auto dh = nominal_dh_table();
  EXPECT_NO_THROW(dh.validate());
  EXPECT_EQ(dh.rows.size(), 6u);
  EXPECT_GE(dh.tool_offset, 0.0);
}

TEST(DHTable, NegativeToolOffsetRejected) {
  auto dh = nominal_dh_table();
  dh.tool_offset = -0.01;
  EXPECT_THROW(dh.validate(), Error);
}

TEST(ForwardKinematics, HomeMatchesMatrixChainOracle) {
  const auto dh = nominal_dh_table();
  const JointConfig q = JointConfig::Zero();
  const auto t = oracle::forward(dh, q);
  const Mat4 f = forward_transform(dh, q);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(f(i, j), t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 1e-12);
  const Pose p = forward_kinematics(dh, q);
  EXPECT_NEAR(p.position.x(), t[0][3], 1e-12);
  EXPECT_NEAR(p.position.y(), t[1][3], 1e-12);
  EXPECT_NEAR(p.position.z(), t[2][3], 1e-12);
}

TEST(ForwardKinematics, MatchesMatrixChainOracleOnRandomJoints) {
  const auto dh = nominal_dh_table();
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const JointConfig q = random_joints(dh, rng);
    const auto t = oracle::forward(dh, q);
    const Mat4 f = forward_kinematics(dh, q).matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        worst = std::max(worst, std::abs(f(i, j) - t[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(ForwardKinematics, OrientationOrthonormalForValidJoints) {
  const auto dh = nominal_dh_table();
  std::mt19937_64 rng(22);
  for (int n = 0; n < 500; ++n) {
    const Mat3 r = forward_kinematics(dh, random_joints(dh, rng)).rotation();
    EXPECT_NEAR(r.determinant(), 1.0, 1e-10);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.col(c).norm(), 1.0, 1e-10);
  }
}

TEST(ForwardKinematics, BaseJointRotatesAboutWorldZ) {
  const auto dh = nominal_dh_table();
  JointConfig q;
  q << 0.0, -0.4, 0.3, 0.2, -0.5, 0.1;
  const Vec3 p0 = forward_kinematics(dh, q).position;
  const double delta = 0.7;
  q[0] += delta;
  const Vec3 p1 = forward_kinematics(dh, q).position;
  EXPECT_LT((p1 - rot_z(delta) * p0).norm(), 1e-12);
}

TEST(ForwardKinematics, JointLimitViolation) {
  const auto dh = nominal_dh_table();
  JointConfig q = JointConfig::Zero();
  q[1] = dh.rows[1].q_max + 0.1;
  try {
    forward_kinematics(dh, q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::JointLimit);
  }
}

TEST(InverseKinematics, FixedPoint) {
  const auto dh = nominal_dh_table();
  JointConfig q;
  q << 0.3, -0.5, 0.4, 0.2, 0.6, -0.3;
  const Pose target = forward_kinematics(dh, q);
  const JointConfig sol = inverse_kinematics(dh, target, q);
  const auto err = pose_error(dh, sol, target);
  EXPECT_LE(err.position, 1e-4);
  EXPECT_LE(err.angle, 1e-3);
}

TEST(InverseKinematics, RoundTripOnRandomReachablePoses) {
  const auto dh = nominal_dh_table();
  std::mt19937_64 rng(23);
  int ok = 0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const JointConfig q = random_joints(dh, rng);
    const Pose target = forward_kinematics(dh, q);
    try {
      const JointConfig sol = inverse_kinematics(dh, target, JointConfig::Zero());
      EXPECT_TRUE(within_limits(dh, sol));
      const Pose back = forward_kinematics(dh, sol);
      EXPECT_LE((back.position - target.position).norm(), 1e-4);
      const Eigen::AngleAxisd aa(Mat3(back.rotation().transpose() * target.rotation()));
      EXPECT_LE(std::abs(aa.angle()), 1e-3);
      ++ok;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::NoSolution);
    }
  }
  EXPECT_GE(ok, n * 97 / 100);
}

TEST(InverseKinematics, FreeRollOnlyConstrainsToolAxis) {
  const auto dh = nominal_dh_table();
  JointConfig q;
  q << -0.2, -0.3, 0.5, 0.1, 0.4, 0.0;
  Pose target = forward_kinematics(dh, q);
  target.alpha_x = normalize_angle(target.alpha_x + 1.0);  // roll is irrelevant
  IkOptions opt;
  opt.free_tool_roll = true;
  const JointConfig sol = inverse_kinematics(dh, target, JointConfig::Zero(), opt);
  const Pose back = forward_kinematics(dh, sol);
  EXPECT_LE((back.position - target.position).norm(), 1e-4);
  EXPECT_LE(std::acos(std::min(1.0, back.x_axis().dot(target.x_axis()))), 1e-3);
}

TEST(InverseKinematics, FarTargetHasNoSolution) {
  const auto dh = nominal_dh_table();
  try {
    inverse_kinematics(dh, Pose(Vec3(10, 0, 0), 0, 0, 0), JointConfig::Zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoSolution);
  }
}

TEST(InverseKinematics, SeedOutsideLimitsRejected) {
  const auto dh = nominal_dh_table();
  JointConfig seed = JointConfig::Zero();
  seed[0] = 4.0;
  EXPECT_THROW(inverse_kinematics(dh, forward_kinematics(dh, JointConfig::Zero()), seed), Error);
}

TEST(MagnetPose, AxisAndPlacement) {
  const Pose a = magnet_pose_for_field_direction(Vec3::Zero(), 0, 0, 0.1);
  EXPECT_LT((a.position - Vec3(-0.1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((a.x_axis() - Vec3::UnitX()).norm(), 1e-15);
  const Pose b = magnet_pose_for_field_direction(Vec3::Zero(), kPi / 2, 0, 0.1);
  EXPECT_LT((b.position - Vec3(0, 0, 0.1)).norm(), 1e-15);
  EXPECT_LT((b.x_axis() - Vec3(0, 0, -1)).norm(), 1e-15);
}

TEST(MagnetPose, ArbitraryAnglesFromUnitNormalOracle) {
  const Vec3 sample(0.3, -0.1, 0.2);
  const Pose p = magnet_pose_for_field_direction(sample, 0.35, -1.1, 0.12);
  const auto n = oracle::unit_normal(0.35, -1.1);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.position[i], sample[i] - 0.12 * n[static_cast<std::size_t>(i)], 1e-15);
    EXPECT_NEAR(p.x_axis()[i], n[static_cast<std::size_t>(i)], 1e-15);
  }
  EXPECT_THROW(magnet_pose_for_field_direction(sample, 0, 0, 0.0), Error);
}

TEST(PoseWithAxis, RecoversDirection) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g;
  for (int i = 0; i < 200; ++i) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const Pose p = pose_with_axis(Vec3::Zero(), UnitVector::from(v));
    EXPECT_LT((p.x_axis() - v.normalized()).norm(), 1e-12);
  }
}

TEST(Quantize, SnapsToGrid) {
  const Vec3 q = quantize_position(Vec3(0.10026, -0.03374, 0.0), 5e-4);
  EXPECT_NEAR(q.x(), 0.1005, 1e-12);
  EXPECT_NEAR(q.y(), -0.0335, 1e-12);
  EXPECT_NEAR(q.z(), 0.0, 1e-15);
}
