#pragma once

// Robot-vs-environment collision checking and pose-dictionary partitioning.
// Self-collision of the arm is not modelled.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "robomag/bvh.hpp"
#include "robomag/kinematics.hpp"
#include "robomag/magnetostatics.hpp"
#include "robomag/mesh.hpp"

namespace robomag {

/// Capsule fixed to one frame of the chain: frames 0..6 are D-H frames,
/// frame 7 is the TCP (magnet) frame.
struct CollisionCapsule {
  int frame = 0;
  Vec3 p0 = Vec3::Zero();  // local coordinates, m
  Vec3 p1 = Vec3::Zero();
  double radius = 0.0;
};

inline constexpr int kToolFrame = 7;

/// One capsule per link plus one for the magnet tool.
struct RobotBody {
  std::vector<CollisionCapsule> capsules;

  void validate() const {
    if (capsules.empty()) throw Error(ErrorKind::InvalidArgument, "robot body has no collision primitives");
    for (const auto& c : capsules) {
      if (!(c.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "capsule radius must be > 0");
      if (c.frame < 0 || c.frame > kToolFrame) throw Error(ErrorKind::InvalidArgument, "capsule frame out of range");
    }
  }

  /// Every radius reduced by `margin` (clamped at a tiny positive value).
  RobotBody shrunk(double margin) const {
    RobotBody b = *this;
    for (auto& c : b.capsules) c.radius = std::max(c.radius - margin, 1e-9);
    return b;
  }
};

/// Capsules along each link (previous frame origin to this frame origin) and
/// around the magnet tool from the flange to the magnet's far face.
inline RobotBody default_robot_body(const DHTable& dh, const MagnetSpec& magnet,
                                    const std::array<double, 6>& link_radii = {0.045, 0.04, 0.035, 0.03, 0.03, 0.025}) {
  RobotBody body;
  for (int i = 0; i < 6; ++i) {
    // origin of frame i-1 expressed in frame i
    const Mat4 t = dh_transform(dh.rows[static_cast<std::size_t>(i)], 0.0);
    const Vec3 prev = -t.topLeftCorner<3, 3>().transpose() * t.topRightCorner<3, 1>();
    body.capsules.push_back({i + 1, prev, Vec3::Zero(), link_radii[static_cast<std::size_t>(i)]});
  }
  body.capsules.push_back({kToolFrame, Vec3(-dh.tool_offset, 0, 0), Vec3(0.5 * magnet.length, 0, 0), magnet.outer_radius});
  return body;
}

struct MeshPlacement {
  std::filesystem::path path;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();  // extrinsic x, y, z, rad
};

/// Static obstacle set. Meshes and their trees are immutable and shared
/// between copies.
class Environment {
 public:
  Environment() : data_(std::make_shared<Data>()) {}

  explicit Environment(std::vector<TriangleMesh> meshes) {
    auto d = std::make_shared<Data>();
    d->meshes = std::move(meshes);
    for (const auto& m : d->meshes) {
      m.validate();
      d->closed.push_back(m.is_closed());
    }
    for (const auto& m : d->meshes) d->trees.emplace_back(m);
    data_ = std::move(d);
  }

  static Environment load(const std::vector<MeshPlacement>& manifest) {
    std::vector<TriangleMesh> meshes;
    for (const auto& e : manifest) meshes.push_back(transformed(load_mesh(e.path), e.translation, e.rotation));
    return Environment(std::move(meshes));
  }

  bool empty() const { return data_->meshes.empty(); }
  const std::vector<TriangleMesh>& meshes() const { return data_->meshes; }

  /// Distance from a capsule axis segment to the environment (0 on contact or
  /// when inside a closed mesh). +inf when empty.
  double segment_distance(const Segment& seg) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data_->meshes.size(); ++i) {
      const auto& tree = data_->trees[i];
      best = std::min(best, tree.segment_distance(seg, best));
      if (best == 0.0) return 0.0;
      if (data_->closed[i] && contains(i, seg.p0)) return 0.0;
    }
    return best;
  }

 private:
  bool contains(std::size_t i, const Vec3& p) const {
    // skewed direction keeps the ray off axis-aligned edges
    return data_->trees[i].ray_crossings(p, Vec3(0.5773, 0.6114, 0.5412)) % 2 == 1;
  }

  struct Data {
    std::vector<TriangleMesh> meshes;
    std::vector<AabbTree> trees;
    std::vector<bool> closed;
  };
  std::shared_ptr<const Data> data_;
};

struct CollisionResult {
  bool clear = true;
  /// Smallest capsule-surface to mesh distance, m; 0 when colliding, +inf for
  /// an empty environment.
  double min_distance = std::numeric_limits<double>::infinity();
};

inline std::vector<Segment> body_segments(const RobotBody& body, const DHTable& dh, const JointConfig& q) {
  const auto f = frame_chain(dh, q);
  std::vector<Segment> segs;
  segs.reserve(body.capsules.size());
  for (const auto& c : body.capsules) {
    const Mat4& t = f[static_cast<std::size_t>(c.frame)];
    const Mat3 r = t.topLeftCorner<3, 3>();
    const Vec3 o = t.topRightCorner<3, 1>();
    segs.push_back({r * c.p0 + o, r * c.p1 + o});
  }
  return segs;
}

inline CollisionResult check_collision(const RobotBody& body, const DHTable& dh, const JointConfig& joints,
                                       const Environment& env) {
  CollisionResult res;
  if (env.empty()) return res;
  const auto segs = body_segments(body, dh, joints);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double d = env.segment_distance(segs[i]) - body.capsules[i].radius;
    res.min_distance = std::min(res.min_distance, std::max(d, 0.0));
  }
  res.clear = res.min_distance > 0.0;
  return res;
}

/// Joint-space linear interpolation check. Uses 2^k equal sub-steps, the
/// smallest k with max per-joint step <= `step`; grids for step and step/2 are
/// therefore nested.
inline bool path_feasible(const RobotBody& body, const DHTable& dh, const JointConfig& start, const JointConfig& end,
                          const Environment& env, double step = 0.01) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "interpolation step must be > 0");
  if (!check_collision(body, dh, start, env).clear)
    throw Error(ErrorKind::EndpointInCollision, "start configuration collides");
  if (!check_collision(body, dh, end, env).clear) throw Error(ErrorKind::EndpointInCollision, "end configuration collides");
  const double span = (end - start).cwiseAbs().maxCoeff();
  std::uint64_t n = 1;
  while (span / static_cast<double>(n) > step) n *= 2;
  for (std::uint64_t i = 1; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n);
    if (!check_collision(body, dh, start + s * (end - start), env).clear) return false;
  }
  return true;
}

enum class FeasibilityStatus { Reachable, IkFailure, Collision };

inline constexpr std::string_view to_string(FeasibilityStatus s) {
  switch (s) {
    case FeasibilityStatus::Reachable: return "Reachable";
    case FeasibilityStatus::IkFailure: return "IkFailure";
    case FeasibilityStatus::Collision: return "Collision";
  }
  return "?";
}

struct PoseFeasibility {
  Pose pose;
  std::optional<JointConfig> joints;  // present iff status != IkFailure
  FeasibilityStatus status = FeasibilityStatus::IkFailure;
  double min_distance = std::numeric_limits<double>::infinity();
};

/// IK options for magnet poses: roll about the magnetisation axis is free.
inline IkOptions magnet_ik_options() {
  IkOptions o;
  o.free_tool_roll = true;
  return o;
}

inline PoseFeasibility evaluate_pose(const Pose& pose, const DHTable& dh, const RobotBody& body, const Environment& env,
                                     const JointConfig& seed, const IkOptions& ik = magnet_ik_options()) {
  PoseFeasibility pf;
  pf.pose = pose;
  try {
    pf.joints = inverse_kinematics(dh, pose, seed, ik);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoSolution) throw;
    pf.status = FeasibilityStatus::IkFailure;
    return pf;
  }
  const auto col = check_collision(body, dh, *pf.joints, env);
  pf.min_distance = col.min_distance;
  pf.status = col.clear ? FeasibilityStatus::Reachable : FeasibilityStatus::Collision;
  return pf;
}

/// Classify every pose. IK is seeded with the previous pose's solution when
/// there is one, else with `seed`. Output order equals input order.
inline std::vector<PoseFeasibility> partition_pose_dictionary(const std::vector<Pose>& poses, const DHTable& dh,
                                                              const RobotBody& body, const Environment& env,
                                                              const JointConfig& seed,
                                                              const IkOptions& ik = magnet_ik_options()) {
  std::vector<PoseFeasibility> out;
  out.reserve(poses.size());
  JointConfig current = seed;
  for (const auto& p : poses) {
    out.push_back(evaluate_pose(p, dh, body, env, current, ik));
    if (out.back().joints) current = *out.back().joints;
  }
  return out;
}

}  // namespace robomag
