#pragma once

// Event-driven (eps2, eps3) hard-sphere flow with binary contacts at
// distance eps2 and ternary interactions at d3 = sqrt(2) eps3.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ternkin/collision.hpp"
#include "ternkin/geometry.hpp"

namespace tk {

struct Configuration {
  std::vector<Vec> x, v;

  Configuration() = default;
  Configuration(std::vector<Vec> xs, std::vector<Vec> vs) : x(std::move(xs)), v(std::move(vs)) {
    if (x.size() != v.size()) throw std::invalid_argument("Configuration: x/v count mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec::same_dim(x[i], x[0]);
      Vec::same_dim(v[i], x[0]);
    }
  }
  std::size_t m() const noexcept { return x.size(); }
  std::size_t dim() const noexcept { return x.empty() ? 0 : x[0].size(); }
};

enum class PathologyPolicy { Abort, Perturb, Skip };

inline PathologyPolicy parse_policy(std::string_view s) {
  if (s == "abort") return PathologyPolicy::Abort;
  if (s == "perturb") return PathologyPolicy::Perturb;
  if (s == "skip") return PathologyPolicy::Skip;
  throw std::invalid_argument("unknown pathology policy: " + std::string(s));
}

struct FlowParams {
  double eps2 = 0.1;
  double eps3 = 0.2;
  double graze_rel = 1e-12;  ///< grazing band is graze_rel * (1 + |relative velocity|)
  double tie_tol = 1e-12;    ///< event times closer than this count as simultaneous
  PathologyPolicy policy = PathologyPolicy::Abort;
  std::size_t max_events = 10'000'000;
  double box = 0.0;  ///< periodic box side; 0 means free space
  std::size_t list_threshold = 24;  ///< candidate lists above this many particles

  /// Ordering needed by the dynamics itself.
  void validate() const {
    if (!(eps2 > 0 && eps2 < eps3))
      throw std::invalid_argument("FlowParams: need 0 < eps2 < eps3");
    if (box < 0) throw std::invalid_argument("FlowParams: negative box");
  }
  /// Adds eps3 < 1, the regime of the kinetic scaling.
  void validate_regime() const {
    validate();
    if (!(eps3 < 1)) throw std::invalid_argument("FlowParams: need eps3 < 1");
  }
};

class PathologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Phase-space classification

enum class PhaseKind { Interior, BinaryBoundary, TernaryBoundary, MultipleBoundary, Violation };

inline std::string_view to_string(PhaseKind k) {
  switch (k) {
    case PhaseKind::Interior: return "interior";
    case PhaseKind::BinaryBoundary: return "binary-boundary";
    case PhaseKind::TernaryBoundary: return "ternary-boundary";
    case PhaseKind::MultipleBoundary: return "multiple-boundary";
    case PhaseKind::Violation: return "violation";
  }
  return "?";
}

struct PhaseStatus {
  PhaseKind kind = PhaseKind::Interior;
  int i = -1, j = -1, k = -1;
};

inline Vec min_image(Vec d, double box) {
  if (box > 0)
    for (auto& c : d) c -= box * std::nearbyint(c / box);
  return d;
}

struct NeighborPair {
  int i, j;
  Vec d;  ///< minimum-image x_j - x_i
};

/// All pairs i < j closer than `radius`, found through a cell grid.
inline std::vector<NeighborPair> neighbor_pairs(const std::vector<Vec>& x, double radius,
                                                double box = 0.0) {
  const int m = static_cast<int>(x.size());
  std::vector<NeighborPair> out;
  if (m < 2) return out;
  const std::size_t d = x[0].size();
  const int nc = box > 0 ? static_cast<int>(box / radius) : 0;
  if (m <= 32 || (box > 0 && nc < 3)) {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        Vec dij = min_image(x[j] - x[i], box);
        if (norm(dij) < radius) out.push_back({i, j, std::move(dij)});
      }
    return out;
  }
  // flat grid, cells of width >= radius, filled by counting sort
  std::vector<long> dims(d);
  std::vector<double> lo(d, 0.0), cw(d);
  long total = 1;
  for (std::size_t a = 0; a < d; ++a) {
    if (box > 0) {
      dims[a] = nc;
      cw[a] = box / nc;
    } else {
      double mn = x[0][a], mx = x[0][a];
      for (const auto& p : x) {
        mn = std::min(mn, p[a]);
        mx = std::max(mx, p[a]);
      }
      lo[a] = mn;
      cw[a] = std::max(radius, (mx - mn) / static_cast<double>(std::max(1, 4 * m)));
      dims[a] = static_cast<long>((mx - mn) / cw[a]) + 1;
    }
    total *= dims[a];
  }
  if (total > 16L * m + 1024) {
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        Vec dij = min_image(x[j] - x[i], box);
        if (norm(dij) < radius) out.push_back({i, j, std::move(dij)});
      }
    return out;
  }
  std::vector<long> coord(static_cast<std::size_t>(m) * d);
  std::vector<long> cell_id(m), start(total + 1, 0), order(m);
  for (int i = 0; i < m; ++i) {
    long id = 0;
    for (std::size_t a = 0; a < d; ++a) {
      double w = x[i][a] - lo[a];
      if (box > 0) w -= box * std::floor(w / box);
      const long c = std::clamp(static_cast<long>(w / cw[a]), 0L, dims[a] - 1);
      coord[i * d + a] = c;
      id = id * dims[a] + c;
    }
    cell_id[i] = id;
    ++start[id + 1];
  }
  for (long c = 0; c < total; ++c) start[c + 1] += start[c];
  {
    std::vector<long> fill(start.begin(), start.end() - 1);
    for (int i = 0; i < m; ++i) order[fill[cell_id[i]]++] = i;
  }
  long offsets = 1;
  for (std::size_t a = 0; a < d; ++a) offsets *= 3;
  std::vector<long> seen;
  for (int i = 0; i < m; ++i) {
    seen.clear();
    for (long off = 0; off < offsets; ++off) {
      long o = off, id = 0;
      bool inside = true;
      for (std::size_t a = 0; a < d; ++a) {
        long c = coord[i * d + a] + o % 3 - 1;
        o /= 3;
        if (box > 0) {
          c = (c % dims[a] + dims[a]) % dims[a];
        } else if (c < 0 || c >= dims[a]) {
          inside = false;
          break;
        }
        id = id * dims[a] + c;
      }
      if (!inside || std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
      seen.push_back(id);
      for (long q = start[id]; q < start[id + 1]; ++q) {
        const int j = static_cast<int>(order[q]);
        if (j <= i) continue;
        double r2 = 0;
        for (std::size_t a = 0; a < d; ++a) {
          double c = x[j][a] - x[i][a];
          if (box > 0) c -= box * std::nearbyint(c / box);
          r2 += c * c;
        }
        if (r2 < radius * radius) out.push_back({i, j, min_image(x[j] - x[i], box)});
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const NeighborPair& a, const NeighborPair& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
  return out;
}

/// band < 0 selects the relative band 1e-12 (1 + threshold).
inline PhaseStatus in_phase_space(const Configuration& z, double eps2, double eps3,
                                  double band = -1.0, double box = 0.0) {
  const double t2 = eps2, t3 = std::sqrt(2.0) * eps3;
  const double b2band = band < 0 ? 1e-12 * (1 + t2) : band;
  const double b3band = band < 0 ? 1e-12 * (1 + t3) : band;
  PhaseStatus st;
  int contacts = 0;
  const int m = static_cast<int>(z.m());
  // each leg of a ternary contact is at most d3 itself
  const auto near = neighbor_pairs(z.x, std::max(t2 + b2band, t3 + b3band) * (1 + 1e-12), box);
  for (const auto& q : near) {
    const double dd = norm(q.d);
    if (dd < t2 - b2band) return {PhaseKind::Violation, q.i, q.j, -1};
    if (dd <= t2 + b2band && ++contacts == 1) st = {PhaseKind::BinaryBoundary, q.i, q.j, -1};
  }
  std::vector<std::vector<const NeighborPair*>> by_center(m);
  for (const auto& q : near) by_center[q.i].push_back(&q);
  for (int i = 0; i < m; ++i) {
    const auto& nb = by_center[i];
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b) {
        const double dd = std::sqrt(norm2(nb[a]->d) + norm2(nb[b]->d));
        if (dd < t3 - b3band) return {PhaseKind::Violation, i, nb[a]->j, nb[b]->j};
        if (dd <= t3 + b3band && ++contacts == 1)
          st = {PhaseKind::TernaryBoundary, i, nb[a]->j, nb[b]->j};
      }
  }
  if (contacts > 1) return {PhaseKind::MultipleBoundary, -1, -1, -1};
  return st;
}

inline bool admissible(const Configuration& z, double eps2, double eps3, double band = -1.0,
                       double box = 0.0) {
  return in_phase_space(z, eps2, eps3, band, box).kind != PhaseKind::Violation;
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind { Binary, Ternary };

struct CollisionEvent {
  double t = 0;
  EventKind kind = EventKind::Binary;
  int i = -1, j = -1, k = -1;
  Vec w1, w2;  ///< impact at contact; w2 empty for binary events
  bool multiple = false;
  Collision cls = Collision::Precollisional;
};

inline std::string_view to_string(EventKind k) {
  return k == EventKind::Binary ? "binary" : "ternary";
}

/// First time t >= 0 with |p + t q|^2 = thr^2 while approaching, if any.
/// Returns +inf when there is no approaching root.
inline double contact_time(double pp, double pq, double qq, double thr2) {
  if (!(pq < 0) || qq <= 0) return std::numeric_limits<double>::infinity();
  const double c = pp - thr2;
  const double disc = pq * pq - qq * c;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const double t = c / (-pq + std::sqrt(disc));
  return t < 0 ? 0.0 : t;
}

inline double kinetic_energy(const Configuration& z) {
  double e = 0;
  for (const auto& v : z.v) e += norm2(v);
  return 0.5 * e;
}

inline Vec total_momentum(const Configuration& z) {
  Vec p(z.dim());
  for (const auto& v : z.v) p += v;
  return p;
}

/// Exact translation X + tV.
inline Configuration advance_free(Configuration z, double t) {
  for (std::size_t i = 0; i < z.m(); ++i) z.x[i] += t * z.v[i];
  return z;
}

struct AdvanceStats {
  std::size_t events = 0, binary = 0, ternary = 0, grazing = 0, multiple = 0;
  bool pathology = false;  ///< set when a Skip policy stopped the run
};

using EventCallback = std::function<void(const CollisionEvent&, const Configuration& before,
                                         const Configuration& after)>;

/// Stateful engine. Small systems scan every pair and triple on each
/// event; larger ones use Verlet-style candidate lists with a skin.
class Flow {
 public:
  Flow(Configuration z, FlowParams p) : z_(std::move(z)), p_(p) {
    p_.validate();
    if (z_.m() == 0) throw std::invalid_argument("Flow: empty configuration");
    d_ = z_.dim();
    use_lists_ = z_.m() > p_.list_threshold;
    if (p_.box > 0) wrap();
    if (use_lists_) rebuild();
  }

  const Configuration& state() const noexcept { return z_; }
  const FlowParams& params() const noexcept { return p_; }
  double time() const noexcept { return t_; }
  const AdvanceStats& stats() const noexcept { return stats_; }

  /// Streams to the earliest event within `horizon` and returns it, with
  /// `t` the absolute flow time; without an event streams the full horizon.
  /// The event is located but not yet applied.
  std::optional<CollisionEvent> step(double horizon) {
    for (;;) {
      const double vf = use_lists_ ? valid_for() : std::numeric_limits<double>::infinity();
      const double lim = std::min({horizon, image_window(), vf});
      auto ev = scan(lim);
      if (ev) {
        stream(ev->t);
        ev->t = t_;
        return ev;
      }
      if (!std::isfinite(lim)) return std::nullopt;
      stream(lim);
      if (lim >= horizon) return std::nullopt;
      horizon -= lim;
      if (use_lists_ && lim == vf) rebuild();
    }
  }

  /// Advance by t >= 0 applying collisions. Returns false if a pathology
  /// stopped the run under the Skip policy.
  bool advance(double t, const EventCallback& cb = nullptr) {
    if (t < 0) throw std::invalid_argument("Flow::advance: negative time");
    resolve_initial_contacts(cb);
    const double t_end = t_ + t;
    while (t_ < t_end) {
      auto ev = step(t_end - t_);
      if (!ev) break;
      if (ev->multiple) {
        ++stats_.multiple;
        if (p_.policy == PathologyPolicy::Abort)
          throw PathologyError("simultaneous collisions at t=" + std::to_string(t_));
        if (p_.policy == PathologyPolicy::Skip) {
          stats_.pathology = true;
          return false;
        }
      }
      apply(*ev, cb);
      if (stats_.events > p_.max_events) throw std::runtime_error("Flow: event budget exceeded");
    }
    if (p_.box > 0) wrap();
    return true;
  }

  /// Apply the collision rule to an event located at the current time.
  void apply(CollisionEvent ev, const EventCallback& cb = nullptr) {
    Configuration before;
    if (cb) before = z_;
    ev.t = t_;
    if (ev.kind == EventKind::Binary) {
      const auto cl = classify_binary(ev.w1, z_.v[ev.i], z_.v[ev.j], graze_tol_pair(ev.i, ev.j));
      ev.cls = cl.tag;
      if (cl.tag == Collision::Precollisional) {
        auto [a, b] = binary_transform(ev.w1, z_.v[ev.i], z_.v[ev.j]);
        z_.v[ev.i] = a;
        z_.v[ev.j] = b;
      }
      ++stats_.binary;
    } else {
      const auto cl = classify_ternary(ev.w1, ev.w2, z_.v[ev.i], z_.v[ev.j], z_.v[ev.k],
                                       graze_tol_triple(ev.i, ev.j, ev.k));
      ev.cls = cl.tag;
      if (cl.tag == Collision::Precollisional) {
        auto out = ternary_transform(ev.w1, ev.w2, z_.v[ev.i], z_.v[ev.j], z_.v[ev.k]);
        z_.v[ev.i] = out.v1;
        z_.v[ev.j] = out.v2;
        z_.v[ev.k] = out.v3;
      }
      ++stats_.ternary;
    }
    if (ev.cls == Collision::Grazing) {
      ++stats_.grazing;
      grazing_.push_back(ev);
    } else {
      grazing_.clear();
    }
    if (use_lists_) {
      refresh(ev.i);
      refresh(ev.j);
      if (ev.k >= 0) refresh(ev.k);
    }
    ++stats_.events;
    if (cb) cb(ev, before, z_);
  }

 private:
  struct Cand {
    int i, j, k;
  };

  double graze_tol_pair(int i, int j) const {
    return p_.graze_rel * (1.0 + norm(z_.v[j] - z_.v[i]));
  }
  double graze_tol_triple(int i, int j, int k) const {
    return p_.graze_rel *
           (1.0 + std::sqrt(norm2(z_.v[j] - z_.v[i]) + norm2(z_.v[k] - z_.v[i])));
  }

  bool is_recent_grazing(EventKind kind, int i, int j, int k) const {
    for (const auto& g : grazing_)
      if (g.kind == kind && g.i == i && g.j == j && g.k == k) return true;
    return false;
  }

  void stream(double dt) {
    if (dt <= 0) return;
    for (std::size_t i = 0; i < z_.m(); ++i)
      for (std::size_t c = 0; c < d_; ++c) {
        const double s = dt * z_.v[i][c];
        z_.x[i][c] += s;
        if (use_lists_) disp_[i][c] += s;
      }
    t_ += dt;
    grazing_.clear();
  }

  void wrap() {
    for (auto& x : z_.x)
      for (auto& c : x) c -= p_.box * std::floor(c / p_.box);
  }

  Vec rel(int a, int b) const { return min_image(z_.x[b] - z_.x[a], p_.box); }

  /// Events at t = 0 for inward-moving boundary contacts.
  void resolve_initial_contacts(const EventCallback& cb) {
    auto ev = scan(0.0);
    if (ev && ev->t == 0.0) {
      if (ev->multiple && p_.policy == PathologyPolicy::Abort)
        throw PathologyError("simultaneous contacts at start");
      if (!ev->multiple) apply(*ev, cb);
    }
  }

  void consider(double t, EventKind kind, int i, int j, int k, double horizon,
                std::optional<CollisionEvent>& best, double& second_best) const {
    if (!std::isfinite(t) || !(t <= horizon)) return;
    if (is_recent_grazing(kind, i, j, k)) return;
    CollisionEvent ev;
    ev.t = t;
    ev.kind = kind;
    ev.i = i;
    ev.j = j;
    ev.k = k;
    if (!best || t < best->t) {
      if (best) second_best = std::min(second_best, best->t);
      best = ev;
    } else {
      second_best = std::min(second_best, t);
    }
  }

  // accumulates |p|^2, <p,q>, |q|^2 for the relative state of b w.r.t. a
  void rel_moments(int a, int b, double& pp, double& pq, double& qq) const {
    const Vec& xa = z_.x[a];
    const Vec& xb = z_.x[b];
    const Vec& va = z_.v[a];
    const Vec& vb = z_.v[b];
    for (std::size_t c = 0; c < d_; ++c) {
      double p = xb[c] - xa[c];
      if (p_.box > 0) p -= p_.box * std::nearbyint(p / p_.box);
      const double q = vb[c] - va[c];
      pp += p * p;
      pq += p * q;
      qq += q * q;
    }
  }
  double pair_time(int i, int j) const {
    double pp = 0, pq = 0, qq = 0;
    rel_moments(i, j, pp, pq, qq);
    return contact_time(pp, pq, qq, p_.eps2 * p_.eps2);
  }
  double triple_time(int i, int j, int k) const {
    double pp = 0, pq = 0, qq = 0;
    rel_moments(i, j, pp, pq, qq);
    rel_moments(i, k, pp, pq, qq);
    return contact_time(pp, pq, qq, 2.0 * p_.eps3 * p_.eps3);
  }

  std::optional<CollisionEvent> scan(double horizon) {
    std::optional<CollisionEvent> best;
    double second = std::numeric_limits<double>::infinity();
    const int m = static_cast<int>(z_.m());
    if (use_lists_) {
      for (std::size_t c = 0; c < pairs_.size(); ++c)
        if (pair_t_[c] - t_ <= horizon)
          consider(std::max(0.0, pair_t_[c] - t_), EventKind::Binary, pairs_[c].i, pairs_[c].j,
                   -1, horizon, best, second);
      for (std::size_t c = 0; c < triples_.size(); ++c)
        if (trip_t_[c] - t_ <= horizon)
          consider(std::max(0.0, trip_t_[c] - t_), EventKind::Ternary, triples_[c].i,
                   triples_[c].j, triples_[c].k, horizon, best, second);
    } else {
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
          consider(pair_time(i, j), EventKind::Binary, i, j, -1, horizon, best, second);
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
          for (int k = j + 1; k < m; ++k)
            consider(triple_time(i, j, k), EventKind::Ternary, i, j, k, horizon, best, second);
    }
    if (!best) return best;
    best->multiple = (second - best->t) <= p_.tie_tol;
    // impact directions at the contact time
    const double t = best->t;
    if (best->kind == EventKind::Binary) {
      Vec p = rel(best->i, best->j) + t * (z_.v[best->j] - z_.v[best->i]);
      best->w1 = p / norm(p);
    } else {
      Vec p1 = rel(best->i, best->j) + t * (z_.v[best->j] - z_.v[best->i]);
      Vec p2 = rel(best->i, best->k) + t * (z_.v[best->k] - z_.v[best->i]);
      const double s = std::sqrt(norm2(p1) + norm2(p2));
      best->w1 = p1 / s;
      best->w2 = p2 / s;
    }
    return best;
  }

  /// In a periodic box, a contact with a non-minimal image needs a relative
  /// displacement of at least box/2 - range; scans stay below that.
  double image_window() const {
    if (p_.box <= 0) return std::numeric_limits<double>::infinity();
    double vmax = 0;
    for (const auto& v : z_.v) vmax = std::max(vmax, norm(v));
    if (vmax <= 0) return std::numeric_limits<double>::infinity();
    const double range = std::sqrt(2.0) * p_.eps3;
    const double room = 0.5 * p_.box - range;
    if (room <= 0) throw std::invalid_argument("Flow: periodic box too small for the interaction range");
    return 0.9 * room / (2.0 * std::sqrt(2.0) * vmax);
  }

  // ---- candidate lists ----
  // pair_t_ and trip_t_ cache absolute contact times; an event only
  // invalidates the candidates that contain one of its particles.
  double cached_pair(std::size_t c) const {
    const auto& q = pairs_[c];
    if (is_recent_grazing(EventKind::Binary, q.i, q.j, -1))
      return std::numeric_limits<double>::infinity();
    return t_ + pair_time(q.i, q.j);
  }
  double cached_triple(std::size_t c) const {
    const auto& q = triples_[c];
    if (is_recent_grazing(EventKind::Ternary, q.i, q.j, q.k))
      return std::numeric_limits<double>::infinity();
    return t_ + triple_time(q.i, q.j, q.k);
  }
  void refresh(int particle) {
    for (int c : inc_pairs_[particle]) pair_t_[c] = cached_pair(c);
    for (int c : inc_trips_[particle]) trip_t_[c] = cached_triple(c);
  }
  double valid_for() const {
    double dmax = 0, vmax = 0;
    for (std::size_t i = 0; i < z_.m(); ++i) {
      dmax = std::max(dmax, norm(disp_[i]));
      vmax = std::max(vmax, norm(z_.v[i]));
    }
    if (vmax <= 0) return std::numeric_limits<double>::infinity();
    return std::max(0.0, (skin_ - dmax) / vmax);
  }

  void rebuild() {
    const int m = static_cast<int>(z_.m());
    const double r3 = std::sqrt(2.0) * p_.eps3;
    // skin_ bounds each particle's displacement during the list lifetime
    if (skin_ <= 0) skin_ = 0.5 * r3;
    if (p_.box > 0) {
      wrap();
      if (p_.box < 2.0 * (r3 + 2.0 * std::sqrt(2.0) * skin_))
        throw std::invalid_argument("Flow: periodic box too small for the interaction range");
    }
    disp_.assign(m, Vec(d_));
    pairs_.clear();
    triples_.clear();
    const double rb = p_.eps2 + 2.0 * skin_;
    const double rt = r3 + 2.0 * std::sqrt(2.0) * skin_;
    const auto near = neighbor_pairs(z_.x, rt, p_.box);
    std::vector<std::vector<const NeighborPair*>> nbr(m);
    for (const auto& q : near) {
      if (norm(q.d) < rb) pairs_.push_back({q.i, q.j, -1});
      nbr[q.i].push_back(&q);
    }
    for (int i = 0; i < m; ++i) {
      const auto& ni = nbr[i];
      for (std::size_t a = 0; a < ni.size(); ++a)
        for (std::size_t b = a + 1; b < ni.size(); ++b)
          if (std::sqrt(norm2(ni[a]->d) + norm2(ni[b]->d)) < rt)
            triples_.push_back({i, ni[a]->j, ni[b]->j});
    }
    inc_pairs_.assign(m, {});
    inc_trips_.assign(m, {});
    pair_t_.resize(pairs_.size());
    trip_t_.resize(triples_.size());
    for (std::size_t c = 0; c < pairs_.size(); ++c) {
      inc_pairs_[pairs_[c].i].push_back(static_cast<int>(c));
      inc_pairs_[pairs_[c].j].push_back(static_cast<int>(c));
      pair_t_[c] = cached_pair(c);
    }
    for (std::size_t c = 0; c < triples_.size(); ++c) {
      for (int q : {triples_[c].i, triples_[c].j, triples_[c].k})
        inc_trips_[q].push_back(static_cast<int>(c));
      trip_t_[c] = cached_triple(c);
    }
  }

  Configuration z_;
  FlowParams p_;
  std::size_t d_ = 0;
  double t_ = 0;
  bool use_lists_ = false;
  double skin_ = 0;
  std::vector<Vec> disp_;
  std::vector<Cand> pairs_, triples_;
  std::vector<double> pair_t_, trip_t_;
  std::vector<std::vector<int>> inc_pairs_, inc_trips_;
  std::vector<CollisionEvent> grazing_;
  AdvanceStats stats_;
};

/// Next event of Z within the horizon; Z must be admissible.
inline std::optional<CollisionEvent> next_event(const Configuration& z, const FlowParams& p,
                                                double horizon) {
  if (!admissible(z, p.eps2, p.eps3, 1e-9, p.box))
    throw std::invalid_argument("next_event: configuration is not admissible");
  Flow f(z, p);
  return f.step(horizon);
}

/// Flow map for real t; negative t runs the time-reversed dynamics.
inline Configuration advance(const Configuration& z, double t, const FlowParams& p,
                             AdvanceStats* stats = nullptr, const EventCallback& cb = nullptr) {
  if (!admissible(z, p.eps2, p.eps3, 1e-9, p.box))
    throw std::invalid_argument("advance: configuration is not admissible");
  Configuration start = z;
  const bool back = t < 0;
  if (back)
    for (auto& v : start.v) v *= -1.0;
  Flow f(std::move(start), p);
  f.advance(std::abs(t), cb);
  if (stats) *stats = f.stats();
  Configuration out = f.state();
  if (back)
    for (auto& v : out.v) v *= -1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Pathology classification over a window of length delta

enum class Pathology { Free, OneSimpleEvent, Grazing, Multiple, TwoEventsWithinDelta };

inline std::string_view to_string(Pathology p) {
  switch (p) {
    case Pathology::Free: return "free";
    case Pathology::OneSimpleEvent: return "one-simple";
    case Pathology::Grazing: return "grazing";
    case Pathology::Multiple: return "multiple";
    case Pathology::TwoEventsWithinDelta: return "two-within-delta";
  }
  return "?";
}

inline bool is_pathological(Pathology p) {
  return p == Pathology::Grazing || p == Pathology::Multiple ||
         p == Pathology::TwoEventsWithinDelta;
}

/// Classifies the forward evolution on [0, delta]; backward = true uses
/// the reversed velocities.
inline Pathology detect_pathology(const Configuration& z, double delta, const FlowParams& p,
                                  bool backward = false) {
  Configuration s = z;
  if (backward)
    for (auto& v : s.v) v *= -1.0;
  FlowParams q = p;
  q.policy = PathologyPolicy::Skip;
  Flow f(std::move(s), q);
  auto e1 = f.step(delta);
  if (!e1) return Pathology::Free;
  if (e1->multiple) return Pathology::Multiple;
  const auto& at = f.state();
  const Collision cls =
      e1->kind == EventKind::Binary
          ? classify_binary(e1->w1, at.v[e1->i], at.v[e1->j]).tag
          : classify_ternary(e1->w1, e1->w2, at.v[e1->i], at.v[e1->j], at.v[e1->k]).tag;
  if (cls == Collision::Grazing) return Pathology::Grazing;
  f.apply(*e1);
  if (f.step(delta - f.time())) return Pathology::TwoEventsWithinDelta;
  return Pathology::OneSimpleEvent;
}

}  // namespace tk
