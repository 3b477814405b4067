#include "nbode/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nbode/errors.hpp"

namespace nbode {

double squared_distance(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

KdTree::KdTree(const RowMat& points, int leaf_size) : dim_(static_cast<int>(points.cols())) {
  std::vector<std::uint32_t> rows(static_cast<std::size_t>(points.rows()));
  std::iota(rows.begin(), rows.end(), 0u);
  *this = KdTree(points, rows, leaf_size);
}

KdTree::KdTree(const RowMat& points, std::span<const std::uint32_t> rows, int leaf_size)
    : dim_(static_cast<int>(points.cols())) {
  if (leaf_size < 1) throw ArgumentError("leaf size must be positive");
  ids_.assign(rows.begin(), rows.end());
  coords_.resize(ids_.size() * static_cast<std::size_t>(dim_));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] >= points.rows()) throw ArgumentError("row index out of range");
    for (int k = 0; k < dim_; ++k) coords_[i * dim_ + k] = points(ids_[i], k);
  }
  if (!ids_.empty()) build(0, static_cast<std::uint32_t>(ids_.size()), leaf_size);
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end, int leaf_size) {
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  std::vector<double> lo(static_cast<std::size_t>(dim_), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(dim_), -std::numeric_limits<double>::infinity());
  for (std::uint32_t i = begin; i < end; ++i) {
    for (int k = 0; k < dim_; ++k) {
      lo[k] = std::min(lo[k], coords_[i * dim_ + k]);
      hi[k] = std::max(hi[k], coords_[i * dim_ + k]);
    }
  }
  box_lo_.insert(box_lo_.end(), lo.begin(), lo.end());
  box_hi_.insert(box_hi_.end(), hi.begin(), hi.end());
  if (end - begin <= static_cast<std::uint32_t>(leaf_size)) return index;

  int axis = 0;
  for (int k = 1; k < dim_; ++k) {
    if (hi[k] - lo[k] > hi[axis] - lo[axis]) axis = k;
  }
  if (!(hi[axis] > lo[axis])) return index;  // all points identical

  // Partition a permutation, then apply it to coordinates and ids.
  const std::uint32_t count = end - begin;
  std::vector<std::uint32_t> perm(count);
  std::iota(perm.begin(), perm.end(), begin);
  const std::uint32_t half = count / 2;
  std::nth_element(perm.begin(), perm.begin() + half, perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double va = coords_[a * dim_ + axis], vb = coords_[b * dim_ + axis];
    return va < vb || (va == vb && a < b);
  });
  std::vector<double> c(static_cast<std::size_t>(count) * dim_);
  std::vector<std::uint32_t> id(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::copy_n(&coords_[perm[i] * dim_], dim_, &c[i * dim_]);
    id[i] = ids_[perm[i]];
  }
  std::copy(c.begin(), c.end(), coords_.begin() + static_cast<std::ptrdiff_t>(begin) * dim_);
  std::copy(id.begin(), id.end(), ids_.begin() + begin);

  const std::int32_t left = build(begin, begin + half, leaf_size);
  const std::int32_t right = build(begin + half, end, leaf_size);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

double KdTree::min_dist2(const Node& node, const double* q) const {
  const auto n = static_cast<std::size_t>(&node - nodes_.data()) * dim_;
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) {
    const double lo = box_lo_[n + k], hi = box_hi_[n + k];
    const double gap = q[k] < lo ? lo - q[k] : (q[k] > hi ? q[k] - hi : 0.0);
    s += gap * gap;
  }
  return s;
}

double KdTree::max_dist2(const Node& node, const double* q) const {
  const auto n = static_cast<std::size_t>(&node - nodes_.data()) * dim_;
  double s = 0.0;
  for (int k = 0; k < dim_; ++k) {
    const double far = std::max(std::abs(q[k] - box_lo_[n + k]), std::abs(q[k] - box_hi_[n + k]));
    s += far * far;
  }
  return s;
}

template <class Visit, class Bulk>
void KdTree::walk(const double* q, double lo2, double hi2, Visit&& visit, Bulk&& bulk) const {
  if (nodes_.empty()) return;
  // Box bounds are padded by a relative margin so that pruning never disagrees
  // with the exact per-point test through rounding.
  constexpr double kMargin = 1e-9;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    const double dmin = min_dist2(node, q);
    if (dmin > hi2 * (1 + kMargin)) continue;
    const double dmax = max_dist2(node, q);
    if (dmax < lo2 * (1 - kMargin)) continue;
    if ((lo2 == 0.0 || dmin > lo2 * (1 + kMargin)) && dmax < hi2 * (1 - kMargin)) {
      bulk(node.begin, node.end);
      continue;
    }
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(q, &coords_[i * dim_], dim_);
        if (d2 >= lo2 && d2 <= hi2) visit(i);
      }
    } else {
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
}

std::vector<std::uint32_t> KdTree::query_radius(std::span<const double> q, double r) const {
  std::vector<std::uint32_t> out;
  query_annulus(q, 0.0, r, out);
  return out;
}

void KdTree::query_annulus(std::span<const double> q, double r_min, double r_max,
                           std::vector<std::uint32_t>& out) const {
  if (static_cast<int>(q.size()) != dim_) throw ArgumentError("query dimension mismatch");
  out.clear();
  walk(
      q.data(), r_min * r_min, r_max * r_max, [&](std::uint32_t i) { out.push_back(ids_[i]); },
      [&](std::uint32_t b, std::uint32_t e) { out.insert(out.end(), ids_.begin() + b, ids_.begin() + e); });
}

std::size_t KdTree::count_annulus(std::span<const double> q, double r_min, double r_max) const {
  if (static_cast<int>(q.size()) != dim_) throw ArgumentError("query dimension mismatch");
  std::size_t count = 0;
  walk(
      q.data(), r_min * r_min, r_max * r_max, [&](std::uint32_t) { ++count; },
      [&](std::uint32_t b, std::uint32_t e) { count += e - b; });
  return count;
}

}  // namespace nbode
