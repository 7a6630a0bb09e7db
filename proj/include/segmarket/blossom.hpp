#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <limits>
#include <vector>

// Maximum-weight matching in general graphs (Edmonds' blossom algorithm with
// Galil's O(n^3) bookkeeping). Structure follows J. van Rantwijk's reference
// implementation; all arithmetic is on 64-bit integers.
namespace segmarket::blossom {

struct Edge {
  int u;
  int v;
  std::int64_t weight;
};

// Returns mate[v] (or -1) for vertices 0..n-1. Weights must be non-negative
// and at most 2^60.
class Solver {
 public:
  Solver(int n, const std::vector<Edge>& edges) : n_(n), edges_(edges) {
    for (auto& e : edges_) e.weight *= 2;  // keeps every dual update integral
  }

  std::vector<int> solve();

 private:
  int n_;
  std::vector<Edge> edges_;

  std::vector<int> endpoint_;
  std::vector<std::vector<int>> neighbend_;
  std::vector<int> mate_;
  std::vector<int> label_;
  std::vector<int> labelend_;
  std::vector<int> inblossom_;
  std::vector<int> blossomparent_;
  std::vector<std::vector<int>> blossomchilds_;
  std::vector<int> blossombase_;
  std::vector<std::vector<int>> blossomendps_;
  std::vector<int> bestedge_;
  std::vector<std::vector<int>> blossombestedges_;
  std::vector<bool> has_bestedges_;
  std::vector<int> unusedblossoms_;
  std::vector<std::int64_t> dualvar_;
  std::vector<char> allowedge_;
  std::vector<int> queue_;

  std::int64_t slack(int k) const {
    const auto& e = edges_[k];
    return dualvar_[e.u] + dualvar_[e.v] - 2 * e.weight;
  }

  void leaves(int b, std::vector<int>& out) const {
    if (b < n_) {
      out.push_back(b);
      return;
    }
    for (int t : blossomchilds_[b]) leaves(t, out);
  }
  std::vector<int> leaves(int b) const {
    std::vector<int> out;
    leaves(b, out);
    return out;
  }

  static int wrap(int j, int len) { return ((j % len) + len) % len; }

  void assign_label(int w, int t, int p);
  int scan_blossom(int v, int w);
  void add_blossom(int base, int k);
  void expand_blossom(int b, bool endstage);
  void augment_blossom(int b, int v);
  void augment_matching(int k);
};

inline void Solver::assign_label(int w, int t, int p) {
  const int b = inblossom_[w];
  assert(label_[w] == 0 && label_[b] == 0);
  label_[w] = label_[b] = t;
  labelend_[w] = labelend_[b] = p;
  bestedge_[w] = bestedge_[b] = -1;
  if (t == 1) {
    leaves(b, queue_);
  } else if (t == 2) {
    const int base = blossombase_[b];
    assert(mate_[base] >= 0);
    assign_label(endpoint_[mate_[base]], 1, mate_[base] ^ 1);
  }
}

// Traces back from v and w to find a new blossom base, or -1 for an
// augmenting path.
inline int Solver::scan_blossom(int v, int w) {
  std::vector<int> path;
  int base = -1;
  while (v != -1 || w != -1) {
    int b = inblossom_[v];
    if (label_[b] & 4) {
      base = blossombase_[b];
      break;
    }
    assert(label_[b] == 1);
    path.push_back(b);
    label_[b] = 5;
    assert(labelend_[b] == mate_[blossombase_[b]]);
    if (labelend_[b] == -1) {
      v = -1;
    } else {
      v = endpoint_[labelend_[b]];
      b = inblossom_[v];
      assert(label_[b] == 2);
      assert(labelend_[b] >= 0);
      v = endpoint_[labelend_[b]];
    }
    if (w != -1) std::swap(v, w);
  }
  for (int b : path) label_[b] = 1;
  return base;
}

inline void Solver::add_blossom(int base, int k) {
  int v = edges_[k].u, w = edges_[k].v;
  const int bb = inblossom_[base];
  int bv = inblossom_[v], bw = inblossom_[w];
  const int b = unusedblossoms_.back();
  unusedblossoms_.pop_back();
  blossombase_[b] = base;
  blossomparent_[b] = -1;
  blossomparent_[bb] = b;
  auto& path = blossomchilds_[b];
  auto& endps = blossomendps_[b];
  path.clear();
  endps.clear();
  while (bv != bb) {
    blossomparent_[bv] = b;
    path.push_back(bv);
    endps.push_back(labelend_[bv]);
    assert(label_[bv] == 2 || (label_[bv] == 1 && labelend_[bv] == mate_[blossombase_[bv]]));
    assert(labelend_[bv] >= 0);
    v = endpoint_[labelend_[bv]];
    bv = inblossom_[v];
  }
  path.push_back(bb);
  std::reverse(path.begin(), path.end());
  std::reverse(endps.begin(), endps.end());
  endps.push_back(2 * k);
  while (bw != bb) {
    blossomparent_[bw] = b;
    path.push_back(bw);
    endps.push_back(labelend_[bw] ^ 1);
    assert(label_[bw] == 2 || (label_[bw] == 1 && labelend_[bw] == mate_[blossombase_[bw]]));
    assert(labelend_[bw] >= 0);
    w = endpoint_[labelend_[bw]];
    bw = inblossom_[w];
  }
  assert(label_[bb] == 1);
  label_[b] = 1;
  labelend_[b] = labelend_[bb];
  dualvar_[b] = 0;
  for (int leaf : leaves(b)) {
    if (label_[inblossom_[leaf]] == 2) queue_.push_back(leaf);
    inblossom_[leaf] = b;
  }
  std::vector<int> bestedgeto(2 * n_, -1);
  for (int sub : path) {
    std::vector<int> candidates;
    if (!has_bestedges_[sub]) {
      for (int leaf : leaves(sub))
        for (int p : neighbend_[leaf]) candidates.push_back(p / 2);
    } else {
      candidates = blossombestedges_[sub];
    }
    for (int kk : candidates) {
      int i = edges_[kk].u, j = edges_[kk].v;
      if (inblossom_[j] == b) std::swap(i, j);
      const int bj = inblossom_[j];
      if (bj != b && label_[bj] == 1 && (bestedgeto[bj] == -1 || slack(kk) < slack(bestedgeto[bj])))
        bestedgeto[bj] = kk;
    }
    blossombestedges_[sub].clear();
    has_bestedges_[sub] = false;
    bestedge_[sub] = -1;
  }
  auto& mine = blossombestedges_[b];
  mine.clear();
  for (int kk : bestedgeto)
    if (kk != -1) mine.push_back(kk);
  has_bestedges_[b] = true;
  bestedge_[b] = -1;
  for (int kk : mine)
    if (bestedge_[b] == -1 || slack(kk) < slack(bestedge_[b])) bestedge_[b] = kk;
}

inline void Solver::expand_blossom(int b, bool endstage) {
  const std::vector<int> children = blossomchilds_[b];
  for (int s : children) {
    blossomparent_[s] = -1;
    if (s < n_) {
      inblossom_[s] = s;
    } else if (endstage && dualvar_[s] == 0) {
      expand_blossom(s, endstage);
    } else {
      for (int leaf : leaves(s)) inblossom_[leaf] = s;
    }
  }
  if (!endstage && label_[b] == 2) {
    assert(labelend_[b] >= 0);
    const auto& childs = blossomchilds_[b];
    const auto& endps = blossomendps_[b];
    const int len = static_cast<int>(childs.size());
    const int entrychild = inblossom_[endpoint_[labelend_[b] ^ 1]];
    int j = static_cast<int>(std::find(childs.begin(), childs.end(), entrychild) - childs.begin());
    int jstep, endptrick;
    if (j & 1) {
      j -= len;
      jstep = 1;
      endptrick = 0;
    } else {
      jstep = -1;
      endptrick = 1;
    }
    int p = labelend_[b];
    while (j != 0) {
      label_[endpoint_[p ^ 1]] = 0;
      label_[endpoint_[endps[wrap(j - endptrick, len)] ^ endptrick ^ 1]] = 0;
      assign_label(endpoint_[p ^ 1], 2, p);
      allowedge_[endps[wrap(j - endptrick, len)] / 2] = 1;
      j += jstep;
      p = endps[wrap(j - endptrick, len)] ^ endptrick;
      allowedge_[p / 2] = 1;
      j += jstep;
    }
    int bv = childs[wrap(j, len)];
    label_[endpoint_[p ^ 1]] = label_[bv] = 2;
    labelend_[endpoint_[p ^ 1]] = labelend_[bv] = p;
    bestedge_[bv] = -1;
    j += jstep;
    while (childs[wrap(j, len)] != entrychild) {
      bv = childs[wrap(j, len)];
      if (label_[bv] == 1) {
        j += jstep;
        continue;
      }
      int found = -1;
      for (int leaf : leaves(bv))
        if (label_[leaf] != 0) {
          found = leaf;
          break;
        }
      if (found != -1) {
        assert(label_[found] == 2);
        assert(inblossom_[found] == bv);
        label_[found] = 0;
        label_[endpoint_[mate_[blossombase_[bv]]]] = 0;
        assign_label(found, 2, labelend_[found]);
      }
      j += jstep;
    }
  }
  label_[b] = labelend_[b] = -1;
  blossomchilds_[b].clear();
  blossomendps_[b].clear();
  blossombase_[b] = -1;
  blossombestedges_[b].clear();
  has_bestedges_[b] = false;
  bestedge_[b] = -1;
  unusedblossoms_.push_back(b);
}

// Swaps matched/unmatched edges along the even path from v to the base of b.
inline void Solver::augment_blossom(int b, int v) {
  int t = v;
  while (blossomparent_[t] != b) t = blossomparent_[t];
  if (t >= n_) augment_blossom(t, v);
  auto& childs = blossomchilds_[b];
  auto& endps = blossomendps_[b];
  const int len = static_cast<int>(childs.size());
  const int i = static_cast<int>(std::find(childs.begin(), childs.end(), t) - childs.begin());
  int j = i;
  int jstep, endptrick;
  if (i & 1) {
    j -= len;
    jstep = 1;
    endptrick = 0;
  } else {
    jstep = -1;
    endptrick = 1;
  }
  while (j != 0) {
    j += jstep;
    t = childs[wrap(j, len)];
    const int p = endps[wrap(j - endptrick, len)] ^ endptrick;
    if (t >= n_) augment_blossom(t, endpoint_[p]);
    j += jstep;
    t = childs[wrap(j, len)];
    if (t >= n_) augment_blossom(t, endpoint_[p ^ 1]);
    mate_[endpoint_[p]] = p ^ 1;
    mate_[endpoint_[p ^ 1]] = p;
  }
  std::rotate(childs.begin(), childs.begin() + i, childs.end());
  std::rotate(endps.begin(), endps.begin() + i, endps.end());
  blossombase_[b] = blossombase_[childs[0]];
  assert(blossombase_[b] == v);
}

inline void Solver::augment_matching(int k) {
  const int v = edges_[k].u, w = edges_[k].v;
  const int starts[2][2] = {{v, 2 * k + 1}, {w, 2 * k}};
  for (const auto& start : starts) {
    int s = start[0], p = start[1];
    while (true) {
      const int bs = inblossom_[s];
      assert(label_[bs] == 1);
      assert(labelend_[bs] == mate_[blossombase_[bs]]);
      if (bs >= n_) augment_blossom(bs, s);
      mate_[s] = p;
      if (labelend_[bs] == -1) break;
      const int t = endpoint_[labelend_[bs]];
      const int bt = inblossom_[t];
      assert(label_[bt] == 2);
      assert(labelend_[bt] >= 0);
      s = endpoint_[labelend_[bt]];
      const int j = endpoint_[labelend_[bt] ^ 1];
      assert(blossombase_[bt] == t);
      if (bt >= n_) augment_blossom(bt, j);
      mate_[j] = labelend_[bt];
      p = labelend_[bt] ^ 1;
    }
  }
}

inline std::vector<int> Solver::solve() {
  const int n = n_;
  const int nedge = static_cast<int>(edges_.size());
  mate_.assign(n, -1);
  if (nedge == 0 || n == 0) return mate_;

  std::int64_t maxweight = 0;
  for (const auto& e : edges_) maxweight = std::max(maxweight, e.weight);
  endpoint_.resize(2 * nedge);
  for (int k = 0; k < nedge; ++k) {
    endpoint_[2 * k] = edges_[k].u;
    endpoint_[2 * k + 1] = edges_[k].v;
  }
  neighbend_.assign(n, {});
  for (int k = 0; k < nedge; ++k) {
    neighbend_[edges_[k].u].push_back(2 * k + 1);
    neighbend_[edges_[k].v].push_back(2 * k);
  }
  label_.assign(2 * n, 0);
  labelend_.assign(2 * n, -1);
  inblossom_.resize(n);
  for (int v = 0; v < n; ++v) inblossom_[v] = v;
  blossomparent_.assign(2 * n, -1);
  blossomchilds_.assign(2 * n, {});
  blossombase_.assign(2 * n, -1);
  for (int v = 0; v < n; ++v) blossombase_[v] = v;
  blossomendps_.assign(2 * n, {});
  bestedge_.assign(2 * n, -1);
  blossombestedges_.assign(2 * n, {});
  has_bestedges_.assign(2 * n, false);
  unusedblossoms_.clear();
  for (int b = n; b < 2 * n; ++b) unusedblossoms_.push_back(b);
  dualvar_.assign(2 * n, 0);
  for (int v = 0; v < n; ++v) dualvar_[v] = maxweight;
  allowedge_.assign(nedge, 0);

  for (int stage = 0; stage < n; ++stage) {
    std::fill(label_.begin(), label_.end(), 0);
    std::fill(bestedge_.begin(), bestedge_.end(), -1);
    for (int b = n; b < 2 * n; ++b) {
      blossombestedges_[b].clear();
      has_bestedges_[b] = false;
    }
    std::fill(allowedge_.begin(), allowedge_.end(), 0);
    queue_.clear();
    for (int v = 0; v < n; ++v)
      if (mate_[v] == -1 && label_[inblossom_[v]] == 0) assign_label(v, 1, -1);

    bool augmented = false;
    while (true) {
      while (!queue_.empty() && !augmented) {
        const int v = queue_.back();
        queue_.pop_back();
        assert(label_[inblossom_[v]] == 1);
        for (int p : neighbend_[v]) {
          const int k = p / 2;
          const int w = endpoint_[p];
          if (inblossom_[v] == inblossom_[w]) continue;
          std::int64_t kslack = 0;
          if (!allowedge_[k]) {
            kslack = slack(k);
            if (kslack <= 0) allowedge_[k] = 1;
          }
          if (allowedge_[k]) {
            if (label_[inblossom_[w]] == 0) {
              assign_label(w, 2, p ^ 1);
            } else if (label_[inblossom_[w]] == 1) {
              const int base = scan_blossom(v, w);
              if (base >= 0) {
                add_blossom(base, k);
              } else {
                augment_matching(k);
                augmented = true;
                break;
              }
            } else if (label_[w] == 0) {
              assert(label_[inblossom_[w]] == 2);
              label_[w] = 2;
              labelend_[w] = p ^ 1;
            }
          } else if (label_[inblossom_[w]] == 1) {
            const int b = inblossom_[v];
            if (bestedge_[b] == -1 || kslack < slack(bestedge_[b])) bestedge_[b] = k;
          } else if (label_[w] == 0) {
            if (bestedge_[w] == -1 || kslack < slack(bestedge_[w])) bestedge_[w] = k;
          }
        }
      }
      if (augmented) break;

      // No augmenting path under the current duals: compute the dual step.
      int deltatype = 1;
      std::int64_t delta = std::numeric_limits<std::int64_t>::max();
      int deltaedge = -1, deltablossom = -1;
      for (int v = 0; v < n; ++v) delta = std::min(delta, dualvar_[v]);
      for (int v = 0; v < n; ++v)
        if (label_[inblossom_[v]] == 0 && bestedge_[v] != -1) {
          const std::int64_t d = slack(bestedge_[v]);
          if (d < delta) {
            delta = d;
            deltatype = 2;
            deltaedge = bestedge_[v];
          }
        }
      for (int b = 0; b < 2 * n; ++b)
        if (blossomparent_[b] == -1 && label_[b] == 1 && bestedge_[b] != -1) {
          const std::int64_t ks = slack(bestedge_[b]);
          assert(ks % 2 == 0);
          const std::int64_t d = ks / 2;
          if (d < delta) {
            delta = d;
            deltatype = 3;
            deltaedge = bestedge_[b];
          }
        }
      for (int b = n; b < 2 * n; ++b)
        if (blossombase_[b] >= 0 && blossomparent_[b] == -1 && label_[b] == 2 && dualvar_[b] < delta) {
          delta = dualvar_[b];
          deltatype = 4;
          deltablossom = b;
        }

      for (int v = 0; v < n; ++v) {
        if (label_[inblossom_[v]] == 1)
          dualvar_[v] -= delta;
        else if (label_[inblossom_[v]] == 2)
          dualvar_[v] += delta;
      }
      for (int b = n; b < 2 * n; ++b)
        if (blossombase_[b] >= 0 && blossomparent_[b] == -1) {
          if (label_[b] == 1)
            dualvar_[b] += delta;
          else if (label_[b] == 2)
            dualvar_[b] -= delta;
        }

      if (deltatype == 1) {
        break;
      } else if (deltatype == 2) {
        allowedge_[deltaedge] = 1;
        int i = edges_[deltaedge].u, j = edges_[deltaedge].v;
        if (label_[inblossom_[i]] == 0) std::swap(i, j);
        assert(label_[inblossom_[i]] == 1);
        queue_.push_back(i);
      } else if (deltatype == 3) {
        allowedge_[deltaedge] = 1;
        const int i = edges_[deltaedge].u;
        assert(label_[inblossom_[i]] == 1);
        queue_.push_back(i);
      } else {
        expand_blossom(deltablossom, false);
      }
    }
    if (!augmented) break;

    for (int b = n; b < 2 * n; ++b)
      if (blossomparent_[b] == -1 && blossombase_[b] >= 0 && label_[b] == 1 && dualvar_[b] == 0)
        expand_blossom(b, true);
  }

  std::vector<int> result(n, -1);
  for (int v = 0; v < n; ++v)
    if (mate_[v] >= 0) result[v] = endpoint_[mate_[v]];
  return result;
}

inline std::vector<int> max_weight_mates(int n, const std::vector<Edge>& edges) {
  return Solver(n, edges).solve();
}

}  // namespace segmarket::blossom
