#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace rgbdi {

/// Static 3D k-d tree over a borrowed point array.
class KdTree {
public:
  explicit KdTree(const std::vector<Eigen::Vector3d>& points, int leaf_size = 12)
      : points_(points), leaf_size_(leaf_size) {
    index_.resize(points.size());
    std::iota(index_.begin(), index_.end(), 0);
    if (!points.empty()) build(0, static_cast<int>(points.size()));
  }

  std::size_t size() const { return points_.size(); }

  /// Index of the nearest point (-1 for an empty tree); squared distance through `dist2`.
  int nearest(const Eigen::Vector3d& q, double* dist2 = nullptr) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) nearest_rec(0, q, best, best_d2);
    if (dist2) *dist2 = best_d2;
    return best;
  }

  /// The k nearest points sorted by increasing distance (ties by index).
  std::vector<int> knn(const Eigen::Vector3d& q, int k) const {
    Heap heap;
    if (!nodes_.empty() && k > 0) knn_rec(0, q, static_cast<std::size_t>(k), heap);
    std::vector<std::pair<double, int>> items;
    items.reserve(heap.size());
    while (!heap.empty()) {
      items.push_back(heap.top());
      heap.pop();
    }
    std::sort(items.begin(), items.end());
    std::vector<int> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.second);
    return out;
  }

private:
  struct Node {
    int begin = 0, end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0;
    int left = -1, right = -1;
  };
  using Heap = std::priority_queue<std::pair<double, int>>;

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[index_[i]]);
      hi = hi.cwiseMax(points_[index_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](int a, int b) {
                       const double pa = points_[a][axis], pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[index_[mid]][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void nearest_rec(int id, const Eigen::Vector3d& q, int& best, double& best_d2) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = index_[i];
        const double d2 = (points_[p] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
          best_d2 = d2;
          best = p;
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0 ? n.left : n.right;
    const int second = diff < 0 ? n.right : n.left;
    nearest_rec(first, q, best, best_d2);
    if (diff * diff <= best_d2) nearest_rec(second, q, best, best_d2);
  }

  void knn_rec(int id, const Eigen::Vector3d& q, std::size_t k, Heap& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int p = index_[i];
        const std::pair<double, int> item{(points_[p] - q).squaredNorm(), p};
        if (heap.size() < k) {
          heap.push(item);
        } else if (item < heap.top()) {
          heap.pop();
          heap.push(item);
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int first = diff < 0 ? n.left : n.right;
    const int second = diff < 0 ? n.right : n.left;
    knn_rec(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().first) knn_rec(second, q, k, heap);
  }

  const std::vector<Eigen::Vector3d>& points_;
  int leaf_size_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
};

}  // namespace rgbdi
