#pragma once

// Closest-point primitives and an axis-aligned bounding-box tree over a
// triangle mesh.

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <vector>

#include "robomag/core.hpp"
#include "robomag/mesh.hpp"

namespace robomag {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
};

inline double aabb_distance(const Aabb& a, const Aabb& b) {
  const Vec3 gap = (a.lo - b.hi).cwiseMax(b.lo - a.hi).cwiseMax(0.0);
  return gap.norm();
}

struct Segment {
  Vec3 p0, p1;
  Aabb bounds() const {
    Aabb b;
    b.expand(p0);
    b.expand(p1);
    return b;
  }
};

/// Closest point to `p` on triangle (a, b, c). Voronoi-region walk.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Squared distance between segments p1-q1 and p2-q2.
inline double segment_segment_distance2(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  constexpr double eps = 1e-18;
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0, t = 0;
  if (a <= eps && e <= eps) return r.squaredNorm();
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0) {
        t = 0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1) {
        t = 1;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + d1 * s) - (p2 + d2 * t)).squaredNorm();
}

/// Segment-triangle intersection test (parameter t in [0, 1]).
inline bool segment_intersects_triangle(const Vec3& p0, const Vec3& p1, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 dir = p1 - p0;
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 h = dir.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Vec3 s = p0 - a;
  const double u = inv * s.dot(h);
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = inv * dir.dot(q);
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = inv * e2.dot(q);
  return t >= 0.0 && t <= 1.0;
}

inline double segment_triangle_distance(const Segment& seg, const Vec3& a, const Vec3& b, const Vec3& c) {
  if (segment_intersects_triangle(seg.p0, seg.p1, a, b, c)) return 0.0;
  double best = (seg.p0 - closest_point_on_triangle(seg.p0, a, b, c)).squaredNorm();
  best = std::min(best, (seg.p1 - closest_point_on_triangle(seg.p1, a, b, c)).squaredNorm());
  best = std::min(best, segment_segment_distance2(seg.p0, seg.p1, a, b));
  best = std::min(best, segment_segment_distance2(seg.p0, seg.p1, b, c));
  best = std::min(best, segment_segment_distance2(seg.p0, seg.p1, c, a));
  return std::sqrt(best);
}

/// Bounding-volume hierarchy over one mesh. Built once, read-only afterwards.
class AabbTree {
 public:
  AabbTree() = default;
  explicit AabbTree(const TriangleMesh& mesh) : mesh_(&mesh) {
    order_.resize(mesh.triangles.size());
    std::iota(order_.begin(), order_.end(), 0);
    boxes_.reserve(order_.size());
    centers_.reserve(order_.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      Aabb b;
      for (int k = 0; k < 3; ++k) b.expand(mesh.corner(t, k));
      boxes_.push_back(b);
      centers_.push_back(b.center());
    }
    if (!order_.empty()) build(0, order_.size());
  }

  bool empty() const { return nodes_.empty(); }
  const Aabb& bounds() const { return nodes_.front().box; }

  /// Distance from a segment to the closest triangle, pruned at `cutoff`.
  double segment_distance(const Segment& seg, double cutoff = std::numeric_limits<double>::infinity()) const {
    double best = cutoff;
    if (nodes_.empty()) return best;
    const Aabb sb = seg.bounds();
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes_[stack.back()];
      stack.pop_back();
      if (aabb_distance(n.box, sb) >= best) continue;
      if (n.count > 0) {
        for (std::size_t i = n.first; i < n.first + n.count; ++i) {
          const std::size_t t = order_[i];
          best = std::min(best, segment_triangle_distance(seg, mesh_->corner(t, 0), mesh_->corner(t, 1), mesh_->corner(t, 2)));
          if (best == 0.0) return 0.0;
        }
      } else {
        // visit nearer child first
        const double dl = aabb_distance(nodes_[n.left].box, sb), dr = aabb_distance(nodes_[n.right].box, sb);
        if (dl < dr) {
          stack.push_back(n.right);
          stack.push_back(n.left);
        } else {
          stack.push_back(n.left);
          stack.push_back(n.right);
        }
      }
    }
    return best;
  }

  /// Number of triangles crossed by the half-open ray p + t*dir, t > 0.
  int ray_crossings(const Vec3& p, const Vec3& dir) const {
    if (nodes_.empty()) return 0;
    const Vec3 far = p + dir.normalized() * (1e3 + (bounds().hi - bounds().lo).norm() + (p - bounds().center()).norm());
    const Segment seg{p, far};
    const Aabb sb = seg.bounds();
    int hits = 0;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
      const Node& n = nodes_[stack.back()];
      stack.pop_back();
      if (aabb_distance(n.box, sb) > 0.0) continue;
      if (n.count > 0) {
        for (std::size_t i = n.first; i < n.first + n.count; ++i) {
          const std::size_t t = order_[i];
          if (segment_intersects_triangle(p, far, mesh_->corner(t, 0), mesh_->corner(t, 1), mesh_->corner(t, 2))) ++hits;
        }
      } else {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    return hits;
  }

 private:
  struct Node {
    Aabb box;
    std::size_t left = 0, right = 0;
    std::size_t first = 0, count = 0;  // leaf when count > 0
  };

  std::size_t build(std::size_t first, std::size_t last) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    Aabb box, cbox;
    for (std::size_t i = first; i < last; ++i) {
      box.expand(boxes_[order_[i]]);
      cbox.expand(centers_[order_[i]]);
    }
    nodes_[id].box = box;
    if (last - first <= kLeafSize) {
      nodes_[id].first = first;
      nodes_[id].count = last - first;
      return id;
    }
    int axis = 0;
    (cbox.hi - cbox.lo).maxCoeff(&axis);
    const std::size_t mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + static_cast<long>(first), order_.begin() + static_cast<long>(mid),
                     order_.begin() + static_cast<long>(last),
                     [&](std::size_t a, std::size_t b) { return centers_[a][axis] < centers_[b][axis]; });
    const std::size_t l = build(first, mid);
    const std::size_t r = build(mid, last);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static constexpr std::size_t kLeafSize = 4;
  const TriangleMesh* mesh_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centers_;
};

}  // namespace robomag
