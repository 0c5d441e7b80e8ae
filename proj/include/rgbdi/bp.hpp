#pragma once

#include "rgbdi/common.hpp"
#include "rgbdi/image.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

namespace rgbdi {

/// Colors attached to one label: the color it gives the pixel itself, and the colors it
/// predicts for the four neighbors (left, right, top, bottom).
struct LabelColors {
  Color self = Color::Zero();
  std::array<Color, 4> expected{Color::Zero(), Color::Zero(), Color::Zero(), Color::Zero()};
};

/// One MRF node: a masked pixel with a non-empty label set.
struct MrfNode {
  int x = 0, y = 0;
  std::vector<LabelColors> labels;
  /// Known image color of an out-of-mask neighbor, per direction.
  std::array<std::optional<Color>, 4> boundary;
};

/// Pairwise MRF over a 4-connected pixel set. Edges are all 4-adjacent node pairs.
class MrfProblem {
public:
  MrfProblem() = default;
  explicit MrfProblem(std::vector<MrfNode> nodes, double alpha = 10.0, double data_offset = 0.0)
      : nodes_(std::move(nodes)), alpha_(alpha), data_offset_(data_offset) {
    std::map<std::pair<int, int>, int> where;
    for (int i = 0; i < size(); ++i) {
      if (nodes_[i].labels.empty()) throw std::invalid_argument("MRF node without labels");
      if (!where.emplace(std::pair{nodes_[i].x, nodes_[i].y}, i).second)
        throw std::invalid_argument("duplicate MRF node");
    }
    neighbors_.assign(nodes_.size(), {-1, -1, -1, -1});
    for (int i = 0; i < size(); ++i)
      for (int d = 0; d < 4; ++d) {
        auto it = where.find({nodes_[i].x + kDx[d], nodes_[i].y + kDy[d]});
        if (it != where.end()) neighbors_[i][d] = it->second;
      }
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  const MrfNode& node(int i) const { return nodes_[i]; }
  const std::vector<MrfNode>& nodes() const { return nodes_; }
  int label_count(int i) const { return static_cast<int>(nodes_[i].labels.size()); }
  /// Neighbor node in direction d, or -1.
  int neighbor(int i, int d) const { return neighbors_[i][d]; }
  double alpha() const { return alpha_; }
  double data_offset() const { return data_offset_; }

  /// Boundary term: L1 between the label's expected neighbor color and the known color, summed
  /// over every side that touches a known pixel; alpha for interior pixels.
  double data_cost(int p, int label) const {
    const MrfNode& n = nodes_[p];
    const LabelColors& l = n.labels[label];
    double cost = 0;
    bool boundary = false;
    for (int d = 0; d < 4; ++d) {
      if (!n.boundary[d]) continue;
      boundary = true;
      cost += l1(l.expected[d], *n.boundary[d]);
    }
    return (boundary ? cost : alpha_) + data_offset_;
  }

  /// Pairwise term for q = neighbor(p, d): each side's prediction of the other against the
  /// other's actual color.
  double discontinuity_cost(int p, int d, int lp, int lq) const {
    const int q = neighbors_[p][d];
    const LabelColors& a = nodes_[p].labels[lp];
    const LabelColors& b = nodes_[q].labels[lq];
    return l1(a.expected[d], b.self) + l1(a.self, b.expected[opposite(d)]);
  }

  /// Energy of a full labeling. Each undirected edge is counted once (right / bottom).
  double energy(const std::vector<int>& labels) const {
    double e = 0;
    for (int p = 0; p < size(); ++p) {
      e += data_cost(p, labels[p]);
      for (int d : {int(kRight), int(kBottom)}) {
        const int q = neighbors_[p][d];
        if (q >= 0) e += discontinuity_cost(p, d, labels[p], labels[q]);
      }
    }
    return e;
  }

private:
  std::vector<MrfNode> nodes_;
  std::vector<std::array<int, 4>> neighbors_;
  double alpha_ = 10.0;
  double data_offset_ = 0.0;
};

struct Labeling {
  std::vector<int> labels;
  double energy = 0;
};

struct BpOptions {
  int iterations = 30;
};

/// Min-sum loopy belief propagation with a synchronous schedule and min-normalized messages.
///
/// Decoding walks the nodes in index order; each node takes the argmin (lowest index on ties) of
/// its data cost plus incoming messages from undecided neighbors plus the exact pairwise cost
/// to already decided neighbors. Without ties this equals the per-node belief argmin, and on
/// trees it always yields a jointly optimal labeling.
inline Labeling solve_map_bp(const MrfProblem& prob, const BpOptions& opts = {}) {
  const int n = prob.size();
  Labeling out;
  out.labels.assign(n, 0);
  if (n == 0) return out;

  // messages[p][d][l]: message sent from neighbor(p, d) into p, as a function of p's label.
  using Msg = std::vector<double>;
  std::vector<std::array<Msg, 4>> msg(n), next(n);
  std::vector<std::vector<double>> data(n);
  for (int p = 0; p < n; ++p) {
    data[p].resize(prob.label_count(p));
    for (int l = 0; l < prob.label_count(p); ++l) data[p][l] = prob.data_cost(p, l);
    for (int d = 0; d < 4; ++d)
      if (prob.neighbor(p, d) >= 0) {
        msg[p][d].assign(prob.label_count(p), 0.0);
        next[p][d] = msg[p][d];
      }
  }

  // Pairwise tables cached per directed edge: table[p][d][lp * |Lq| + lq].
  std::vector<std::array<std::vector<double>, 4>> table(n);
  for (int p = 0; p < n; ++p)
    for (int d = 0; d < 4; ++d) {
      const int q = prob.neighbor(p, d);
      if (q < 0) continue;
      const int lp = prob.label_count(p), lq = prob.label_count(q);
      auto& t = table[p][d];
      t.resize(static_cast<std::size_t>(lp) * lq);
      for (int a = 0; a < lp; ++a)
        for (int b = 0; b < lq; ++b) t[static_cast<std::size_t>(a) * lq + b] = prob.discontinuity_cost(p, d, a, b);
    }

  for (int it = 0; it < opts.iterations; ++it) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t pi) {
      const int p = static_cast<int>(pi);
      const int lp = prob.label_count(p);
      std::vector<double> h(lp);
      for (int d = 0; d < 4; ++d) {
        const int q = prob.neighbor(p, d);
        if (q < 0) continue;
        // h(l_p) = D_p + all incoming except the one from q.
        for (int a = 0; a < lp; ++a) {
          double v = data[p][a];
          for (int e = 0; e < 4; ++e)
            if (e != d && prob.neighbor(p, e) >= 0) v += msg[p][e][a];
          h[a] = v;
        }
        const int lq = prob.label_count(q);
        Msg& out_msg = next[q][opposite(d)];
        double lo = std::numeric_limits<double>::infinity();
        for (int b = 0; b < lq; ++b) {
          double best = std::numeric_limits<double>::infinity();
          for (int a = 0; a < lp; ++a)
            best = std::min(best, h[a] + table[p][d][static_cast<std::size_t>(a) * lq + b]);
          out_msg[b] = best;
          lo = std::min(lo, best);
        }
        for (double& v : out_msg) v -= lo;
      }
    });
    std::swap(msg, next);
  }

  std::vector<char> decided(n, 0);
  for (int p = 0; p < n; ++p) {
    int best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (int a = 0; a < prob.label_count(p); ++a) {
      double v = data[p][a];
      for (int d = 0; d < 4; ++d) {
        const int q = prob.neighbor(p, d);
        if (q < 0) continue;
        v += decided[q] ? prob.discontinuity_cost(p, d, a, out.labels[q]) : msg[p][d][a];
      }
      if (v < best_v) {
        best_v = v;
        best = a;
      }
    }
    out.labels[p] = best;
    decided[p] = 1;
  }
  out.energy = prob.energy(out.labels);
  return out;
}

/// Connected component id of every node over the 4-neighbor edges.
inline std::vector<int> mrf_components(const MrfProblem& prob, int* count = nullptr) {
  std::vector<int> comp(prob.size(), -1);
  int k = 0;
  std::vector<int> stack;
  for (int s = 0; s < prob.size(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = k;
    stack.assign(1, s);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int d = 0; d < 4; ++d) {
        const int q = prob.neighbor(p, d);
        if (q >= 0 && comp[q] < 0) {
          comp[q] = k;
          stack.push_back(q);
        }
      }
    }
    ++k;
  }
  if (count) *count = k;
  return comp;
}

/// Per connected component, keeps whichever of `labeling` and `reference` has the lower exact
/// energy (ties keep `labeling`). The energy separates over components, so the result is never
/// above either input.
inline Labeling keep_lower_energy(const MrfProblem& prob, Labeling labeling, const std::vector<int>& reference) {
  if (reference.size() != labeling.labels.size()) throw std::invalid_argument("reference labeling size mismatch");
  int k = 0;
  const auto comp = mrf_components(prob, &k);
  std::vector<double> e_lab(k, 0.0), e_ref(k, 0.0);
  for (int p = 0; p < prob.size(); ++p) {
    e_lab[comp[p]] += prob.data_cost(p, labeling.labels[p]);
    e_ref[comp[p]] += prob.data_cost(p, reference[p]);
    for (int d : {int(kRight), int(kBottom)}) {
      const int q = prob.neighbor(p, d);
      if (q < 0) continue;
      e_lab[comp[p]] += prob.discontinuity_cost(p, d, labeling.labels[p], labeling.labels[q]);
      e_ref[comp[p]] += prob.discontinuity_cost(p, d, reference[p], reference[q]);
    }
  }
  for (int p = 0; p < prob.size(); ++p)
    if (e_ref[comp[p]] < e_lab[comp[p]]) labeling.labels[p] = reference[p];
  labeling.energy = prob.energy(labeling.labels);
  return labeling;
}

inline constexpr double kExhaustiveCap = 1e6;

/// Exact minimum by enumeration. Labelings are visited in lexicographic order (node 0 most
/// significant), so the lexicographically smallest optimum wins ties.
inline Labeling solve_map_exhaustive(const MrfProblem& prob, double cap = kExhaustiveCap) {
  const int n = prob.size();
  double total = 1;
  for (int p = 0; p < n; ++p) {
    total *= prob.label_count(p);
    if (total > cap) throw InstanceTooLargeError("solve_map_exhaustive: label space exceeds cap");
  }
  Labeling best;
  best.labels.assign(n, 0);
  best.energy = prob.energy(best.labels);
  std::vector<int> cur(n, 0);
  while (true) {
    int p = n - 1;
    while (p >= 0 && ++cur[p] == prob.label_count(p)) cur[p--] = 0;
    if (p < 0) break;
    const double e = prob.energy(cur);
    if (e < best.energy) {
      best.energy = e;
      best.labels = cur;
    }
  }
  return best;
}

}  // namespace rgbdi
