#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "ne/netcore.hpp"
#include "ne/rng.hpp"

namespace ne {

/// Schedule parameters for Neuroplastic Expansion.
struct GrowthConfig {
  double sparsity = 0.75;       // Sp: initial fraction of sparse-layer connections removed
  long grow_interval = 2500;    // steps between topology events
  double alpha = 0.02;          // initial growth fraction of rest capacity
  long t_end = 0;               // growth shutdown step; 0 = resolve to the run length
  double omega = 0.4;           // prune budget = floor(omega * grow count) per layer
  double kappa = 3.0;           // weight clip multiplier
  double tau = 0.0;             // dormancy threshold (0 = fully dormant only)
  int probe_batch_size = 128;

  void validate() const {
    if (!(sparsity >= 0.0 && sparsity < 1.0))
      throw std::invalid_argument("sparsity: must satisfy 0 <= Sp < 1");
    if (grow_interval < 1) throw std::invalid_argument("grow_interval: must be >= 1");
    if (t_end < grow_interval)
      throw std::invalid_argument("t_end: must be >= grow_interval");
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha: must be > 0");
    if (!(omega >= 0.0 && omega < 1.0))
      throw std::invalid_argument("omega: must satisfy 0 <= omega < 1");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa: must be > 0");
    if (tau < 0.0) throw std::invalid_argument("tau: must be >= 0");
    if (probe_batch_size < 1)
      throw std::invalid_argument("probe_batch_size: must be >= 1");
  }
};

/// One connection coordinate.
struct Coord {
  int layer;
  int row;
  int col;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

using GrowSet = std::vector<Coord>;
using PruneSet = std::vector<Coord>;

struct LayerEventStats {
  int layer = 0;
  long grow_count = 0;
  long prune_before = 0;  // dormant-connection count before truncation
  long prune_after = 0;
  double density_after = 0.0;
};

struct GrowPruneEvent {
  long step = 0;
  std::vector<LayerEventStats> per_layer;

  long total_grown() const {
    long n = 0;
    for (const auto& s : per_layer) n += s.grow_count;
    return n;
  }
  long total_pruned() const {
    long n = 0;
    for (const auto& s : per_layer) n += s.prune_after;
    return n;
  }
};

namespace detail {

inline std::vector<long> er_counts_for_scale(const std::vector<LayerSpec>& spec,
                                             double c) {
  std::vector<long> counts(spec.size(), 0);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].force_dense) continue;
    const double fi = spec[i].fan_in, fo = spec[i].fan_out;
    const double d = std::min(1.0, c * (fi + fo) / (fi * fo));
    counts[i] = std::llround(d * fi * fo);
  }
  return counts;
}

inline long sum(const std::vector<long>& v) {
  long s = 0;
  for (long x : v) s += x;
  return s;
}

}  // namespace detail

/// Erdos-Renyi sparse initialization: per sparse layer, density proportional
/// to (fan_in + fan_out)/(fan_in * fan_out), with one global scale solved by
/// bisection so total active sparse connections hit round((1-Sp) * total)
/// (within one connection; if all layers saturate the achieved density is
/// reported as-is). force_dense layers get all-ones masks.
inline std::vector<Matrix> erdos_renyi_masks(const std::vector<LayerSpec>& spec,
                                             double sparsity, Rng& rng) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw std::invalid_argument("sparsity: must satisfy 0 <= Sp < 1");
  std::vector<Matrix> masks(spec.size());
  long total_sparse = 0;
  double c_hi = 1.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    masks[i] = Matrix::Ones(spec[i].fan_out, spec[i].fan_in);
    if (!spec[i].force_dense) {
      total_sparse += static_cast<long>(spec[i].fan_in) * spec[i].fan_out;
      const double fi = spec[i].fan_in, fo = spec[i].fan_out;
      c_hi = std::max(c_hi, fi * fo / (fi + fo));  // saturates this layer
    }
  }
  if (total_sparse == 0) return masks;  // nothing to sparsify

  const long target = std::llround((1.0 - sparsity) * total_sparse);
  // smallest scale whose rounded count reaches the target
  double lo = 0.0, hi = c_hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (detail::sum(detail::er_counts_for_scale(spec, mid)) >= target)
      hi = mid;
    else
      lo = mid;
  }
  auto counts = detail::er_counts_for_scale(spec, hi);
  const auto counts_lo = detail::er_counts_for_scale(spec, lo);
  if (std::labs(detail::sum(counts_lo) - target) <
      std::labs(detail::sum(counts) - target))
    counts = counts_lo;

  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].force_dense) continue;
    const long size = static_cast<long>(spec[i].fan_in) * spec[i].fan_out;
    masks[i].setZero();
    for (std::size_t idx : rng.sample_without_replacement(
             static_cast<std::size_t>(size), static_cast<std::size_t>(counts[i]))) {
      const int r = static_cast<int>(idx / spec[i].fan_in);
      const int col = static_cast<int>(idx % spec[i].fan_in);
      masks[i](r, col) = 1.0;
    }
  }
  return masks;
}

inline void apply_masks(MaskedNetwork& net, const std::vector<Matrix>& masks) {
  if (masks.size() != net.layer_count())
    throw std::invalid_argument("apply_masks: layer count mismatch");
  for (std::size_t i = 0; i < masks.size(); ++i) net.layers[i].mask = masks[i];
}

/// g(t) = (alpha/2) * (1 + cos(t*pi/T_end)); zero past T_end.
inline double cosine_growth_fraction(long t, long t_end, double alpha) {
  if (t_end < 1) throw std::invalid_argument("t_end: must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha: must be > 0");
  if (t < 0) throw std::invalid_argument("t: must be >= 0");
  if (t > t_end) return 0.0;
  return 0.5 * alpha *
         (1.0 + std::cos(static_cast<double>(t) * std::numbers::pi /
                         static_cast<double>(t_end)));
}

/// k_l = ceil(g(t) * inactive count), capped at the inactive count.
inline long growth_budget(const MaskedLayer& layer, long t, const GrowthConfig& cfg) {
  const long inactive = layer.size() - layer.active_count();
  const double g = cosine_growth_fraction(t, cfg.t_end, cfg.alpha);
  const long k = static_cast<long>(std::ceil(g * static_cast<double>(inactive)));
  return std::min(k, inactive);
}

/// Inactive coordinates with the largest |gradient|, k_l per sparse layer.
/// Ties break toward ascending (row, col).
inline GrowSet select_growth(const FullGradients& grads, const MaskedNetwork& net,
                             const std::vector<long>& budgets) {
  if (budgets.size() != net.layer_count())
    throw std::invalid_argument("select_growth: budgets size mismatch");
  GrowSet grow;
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const MaskedLayer& layer = net.layers[li];
    if (layer.force_dense || budgets[li] <= 0) continue;
    struct Cand {
      double mag;
      int row, col;
    };
    std::vector<Cand> cands;
    cands.reserve(layer.size() - layer.active_count());
    for (int r = 0; r < layer.fan_out(); ++r)
      for (int c = 0; c < layer.fan_in(); ++c)
        if (layer.mask(r, c) == 0.0)
          cands.push_back({std::abs(grads.weight_grads[li](r, c)), r, c});
    const std::size_t k =
        std::min<std::size_t>(cands.size(), static_cast<std::size_t>(budgets[li]));
    auto better = [](const Cand& a, const Cand& b) {
      if (a.mag != b.mag) return a.mag > b.mag;
      if (a.row != b.row) return a.row < b.row;
      return a.col < b.col;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(k),
                      cands.end(), better);
    for (std::size_t i = 0; i < k; ++i)
      grow.push_back({static_cast<int>(li), cands[i].row, cands[i].col});
  }
  std::sort(grow.begin(), grow.end());
  return grow;
}

/// Naive growth baseline: uniform inactive coordinates, no gradient signal.
inline GrowSet random_growth_select(const MaskedNetwork& net,
                                    const std::vector<long>& budgets, Rng& rng) {
  if (budgets.size() != net.layer_count())
    throw std::invalid_argument("random_growth_select: budgets size mismatch");
  GrowSet grow;
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    const MaskedLayer& layer = net.layers[li];
    if (layer.force_dense || budgets[li] <= 0) continue;
    std::vector<Coord> inactive;
    for (int r = 0; r < layer.fan_out(); ++r)
      for (int c = 0; c < layer.fan_in(); ++c)
        if (layer.mask(r, c) == 0.0) inactive.push_back({static_cast<int>(li), r, c});
    const std::size_t k =
        std::min<std::size_t>(inactive.size(), static_cast<std::size_t>(budgets[li]));
    for (std::size_t idx : rng.sample_without_replacement(inactive.size(), k))
      grow.push_back(inactive[idx]);
  }
  std::sort(grow.begin(), grow.end());
  return grow;
}

/// Hidden neurons whose post-activation stays <= tau on every probe input.
/// Output-layer neurons are never reported.
inline std::vector<std::vector<int>> detect_dormant(const MaskedNetwork& net,
                                                    const Matrix& probe_batch,
                                                    double tau) {
  if (probe_batch.rows() == 0)
    throw std::invalid_argument("detect_dormant: empty probe batch");
  const auto [out, cache] = forward(net, probe_batch);
  std::vector<std::vector<int>> dormant(net.layer_count());
  for (std::size_t li = 0; li + 1 < net.layer_count(); ++li) {
    const Matrix& post = cache.post[li];
    for (int i = 0; i < post.cols(); ++i)
      if (post.col(i).maxCoeff() <= tau) dormant[li].push_back(i);
  }
  return dormant;
}

/// All active in- and out-edges of each dormant neuron, skipping coordinates
/// that live in force_dense layers.
inline PruneSet assemble_prune_set(const std::vector<std::vector<int>>& dormant,
                                   const MaskedNetwork& net) {
  PruneSet prune;
  for (std::size_t li = 0; li < dormant.size(); ++li) {
    for (int neuron : dormant[li]) {
      const MaskedLayer& in_layer = net.layers[li];
      if (neuron < 0 || neuron >= in_layer.fan_out())
        throw std::invalid_argument("assemble_prune_set: neuron index out of range");
      if (!in_layer.force_dense)
        for (int c = 0; c < in_layer.fan_in(); ++c)
          if (in_layer.mask(neuron, c) == 1.0)
            prune.push_back({static_cast<int>(li), neuron, c});
      if (li + 1 < net.layer_count() && !net.layers[li + 1].force_dense) {
        const MaskedLayer& out_layer = net.layers[li + 1];
        for (int r = 0; r < out_layer.fan_out(); ++r)
          if (out_layer.mask(r, neuron) == 1.0)
            prune.push_back({static_cast<int>(li) + 1, r, neuron});
      }
    }
  }
  std::sort(prune.begin(), prune.end());
  prune.erase(std::unique(prune.begin(), prune.end()), prune.end());
  return prune;
}

/// Per layer, randomly drop prune candidates down to floor(omega * grow
/// count). A layer with no growth keeps nothing (no shrink-only events).
inline PruneSet truncate(const PruneSet& prune, const GrowSet& grow, double omega,
                         Rng& rng) {
  if (!(omega >= 0.0 && omega < 1.0))
    throw std::invalid_argument("omega: must satisfy 0 <= omega < 1");
  std::vector<long> grow_counts, prune_counts;
  auto count_of = [](std::vector<long>& v, int layer) -> long& {
    if (layer >= static_cast<int>(v.size())) v.resize(layer + 1, 0);
    return v[layer];
  };
  for (const auto& c : grow) count_of(grow_counts, c.layer)++;
  for (const auto& c : prune) count_of(prune_counts, c.layer)++;

  PruneSet out;
  int max_layer = -1;
  for (const auto& c : prune) max_layer = std::max(max_layer, c.layer);
  for (int layer = 0; layer <= max_layer; ++layer) {
    const long have =
        layer < static_cast<int>(prune_counts.size()) ? prune_counts[layer] : 0;
    if (have == 0) continue;
    const long grown =
        layer < static_cast<int>(grow_counts.size()) ? grow_counts[layer] : 0;
    const long bound = static_cast<long>(
        std::floor(omega * static_cast<double>(grown)));
    std::vector<Coord> layer_coords;
    layer_coords.reserve(have);
    for (const auto& c : prune)
      if (c.layer == layer) layer_coords.push_back(c);
    if (have <= bound) {
      out.insert(out.end(), layer_coords.begin(), layer_coords.end());
    } else {
      for (std::size_t idx : rng.sample_without_replacement(
               layer_coords.size(), static_cast<std::size_t>(bound)))
        out.push_back(layer_coords[idx]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Atomically applies one topology event. Pruned coordinates leave the mask
/// and get a fresh random stored weight (ready to rejoin later); grown
/// coordinates enter with a fresh clipped weight. Adam moments of all touched
/// coordinates are zeroed. Preconditions (grow inactive, prune active,
/// disjoint) are enforced; violations indicate a controller bug.
inline GrowPruneEvent apply_topology_event(MaskedNetwork& net, AdamState& adam,
                                           const GrowSet& grow, const PruneSet& prune,
                                           double kappa, Rng& rng, long step = 0) {
  auto check = [&](const Coord& c) {
    if (c.layer < 0 || c.layer >= static_cast<int>(net.layer_count()) ||
        c.row < 0 || c.row >= net.layers[c.layer].fan_out() || c.col < 0 ||
        c.col >= net.layers[c.layer].fan_in())
      throw std::logic_error("apply_topology_event: coordinate out of range");
    if (net.layers[c.layer].force_dense)
      throw std::logic_error("apply_topology_event: coordinate in force_dense layer");
  };
  for (const auto& c : grow) {
    check(c);
    if (net.layers[c.layer].mask(c.row, c.col) != 0.0)
      throw std::logic_error("apply_topology_event: grow coordinate already active");
  }
  for (const auto& c : prune) {
    check(c);
    if (net.layers[c.layer].mask(c.row, c.col) != 1.0)
      throw std::logic_error("apply_topology_event: prune coordinate not active");
  }
  for (const auto& c : grow)
    if (std::binary_search(prune.begin(), prune.end(), c))
      throw std::logic_error("apply_topology_event: grow/prune overlap");

  GrowPruneEvent event;
  event.step = step;
  for (const auto& c : grow) {
    MaskedLayer& layer = net.layers[c.layer];
    const double s = layer.clip_bound;
    const double bound = kappa * s;
    layer.mask(c.row, c.col) = 1.0;
    layer.weights(c.row, c.col) =
        std::clamp(rng.uniform(-s, s), -bound, bound);
    adam.m_w[c.layer](c.row, c.col) = 0.0;
    adam.v_w[c.layer](c.row, c.col) = 0.0;
  }
  for (const auto& c : prune) {
    MaskedLayer& layer = net.layers[c.layer];
    const double s = layer.clip_bound;
    layer.mask(c.row, c.col) = 0.0;
    layer.weights(c.row, c.col) = rng.uniform(-s, s);
    adam.m_w[c.layer](c.row, c.col) = 0.0;
    adam.v_w[c.layer](c.row, c.col) = 0.0;
  }

  event.per_layer.resize(net.layer_count());
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& st = event.per_layer[li];
    st.layer = static_cast<int>(li);
    st.density_after = static_cast<double>(net.layers[li].active_count()) /
                       static_cast<double>(net.layers[li].size());
  }
  for (const auto& c : grow) event.per_layer[c.layer].grow_count++;
  for (const auto& c : prune) {
    event.per_layer[c.layer].prune_after++;
    event.per_layer[c.layer].prune_before++;  // orchestrator overwrites
  }
  return event;
}

enum class GrowthSelector { GradientTopK, UniformRandom };

/// One full NE step for a single network: budget, growth selection, dormancy
/// probe, prune assembly, truncation and application. `prune_enabled = false`
/// reproduces the growth-only baseline.
inline GrowPruneEvent neuroplastic_event(MaskedNetwork& net, AdamState& adam,
                                         const FullGradients& grads,
                                         const Matrix& probe_batch, long t,
                                         const GrowthConfig& cfg, Rng& rng,
                                         GrowthSelector selector,
                                         bool prune_enabled) {
  std::vector<long> budgets(net.layer_count(), 0);
  for (std::size_t li = 0; li < net.layer_count(); ++li)
    if (!net.layers[li].force_dense)
      budgets[li] = growth_budget(net.layers[li], t, cfg);

  const GrowSet grow = selector == GrowthSelector::GradientTopK
                           ? select_growth(grads, net, budgets)
                           : random_growth_select(net, budgets, rng);

  PruneSet candidates;
  if (prune_enabled) {
    const auto dormant = detect_dormant(net, probe_batch, cfg.tau);
    candidates = assemble_prune_set(dormant, net);
  }
  std::vector<long> before_counts;
  for (const auto& c : candidates) {
    if (c.layer >= static_cast<int>(before_counts.size()))
      before_counts.resize(c.layer + 1, 0);
    before_counts[c.layer]++;
  }
  const PruneSet prune = truncate(candidates, grow, cfg.omega, rng);

  GrowPruneEvent event =
      apply_topology_event(net, adam, grow, prune, cfg.kappa, rng, t);
  for (std::size_t li = 0; li < event.per_layer.size(); ++li)
    event.per_layer[li].prune_before =
        li < before_counts.size() ? before_counts[li] : 0;
  return event;
}

}  // namespace ne
