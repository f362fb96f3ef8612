// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mmformer/hot.hpp"
#include "mmformer/hypergraph.hpp"
#include "mmformer/mmformer.hpp"
#include "mmformer/train.hpp"
#include "support.hpp"

using namespace mmf;

namespace {

constexpr double kCombinatoricsSeconds = 1.0;
constexpr double kEquivarianceTol = 1e-9;
constexpr double kEquivarianceSeconds = 120.0;
constexpr double kGradientTol = 1e-4;
constexpr double kGradientSeconds = 600.0;
constexpr double kAttentionReferenceTol = 1e-9;
constexpr double kRowSumTol = 1e-9;
constexpr double kRankDirectionCos = 0.99;
constexpr double kRankOracleCos = 0.95;
constexpr double kOrderGapPoints = 10.0;
constexpr double kTwoBranchTop1 = 0.90;
constexpr double kOverBaselinePoints = 3.0;
constexpr double kBenchmarkSeconds = 900.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- combinatorics ----

Outcome combinatorics() {
  const auto t0 = Clock::now();
  Outcome out;
  const std::size_t kinetics = enumerate_hyperedges(18, 4).edges.size();
  if (kinetics != 3060) out.pass = false;
  // Pascal's triangle as the independent count.
  std::vector<std::vector<std::size_t>> pascal(21, std::vector<std::size_t>(21, 0));
  for (std::size_t n = 0; n <= 20; ++n) {
    pascal[n][0] = 1;
    for (std::size_t k = 1; k <= n; ++k) pascal[n][k] = pascal[n - 1][k - 1] + pascal[n - 1][k];
  }
  std::size_t checked = 0, wrong = 0;
  for (std::size_t J = 1; J <= 20; ++J) {
    for (std::size_t m = 1; m <= std::min<std::size_t>(5, J); ++m) {
      ++checked;
      if (enumerate_hyperedges(J, m).edges.size() != pascal[J][m] || binomial(J, m) != pascal[J][m]) {
        ++wrong;
      }
    }
  }
  const double secs = seconds_since(t0);
  if (wrong != 0 || secs >= kCombinatoricsSeconds) out.pass = false;
  out.detail = "C(18,4) edges " + std::to_string(kinetics) + ", " + std::to_string(checked - wrong) +
               "/" + std::to_string(checked) + " counts match, " + fmt("%.3fs", secs);
  return out;
}

// ---- equivariance ----

Tensor permute_square(const Tensor& a, const std::vector<std::size_t>& s) {
  return transpose(testing::permute_joints(transpose(testing::permute_joints(a, s, 1)), s, 1));
}

Tensor run_linear(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t J, std::size_t m,
                  std::size_t n) {
  ad::Tape tape;
  return equivariant_linear(tape.constant(x), tape.constant(w), tape.constant(b), J, m, n,
                            Aggregation::mean)
      .value();
}

Tensor run_hot(const ParamSet& params, const HotLayerSpec& spec, const Tensor& x, std::size_t J) {
  ad::Tape tape;
  Binding bind(tape, params, false);
  return hot_layer(bind, "h", spec, tape.constant(x), J).value();
}

Outcome equivariance() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const std::pair<std::size_t, std::size_t> linear_shapes[] = {
      {1, 1}, {1, 2}, {1, 3}, {2, 1}, {2, 2}, {2, 3}, {3, 1}, {3, 2}, {3, 3}, {2, 2}};
  const std::pair<std::size_t, std::size_t> hot_shapes[] = {
      {1, 1}, {1, 2}, {1, 3}, {2, 2}, {3, 3}, {1, 1}, {1, 2}, {1, 3}, {2, 2}, {3, 3}};
  constexpr int kConfigs = 10, kPerms = 20;
  double linear_dev = 0.0, hot_dev = 0.0, gcn_dev = 0.0, hgcn_dev = 0.0;

  for (int c = 0; c < kConfigs; ++c) {
    const auto [m, n] = linear_shapes[c];
    const std::size_t J = 3 + rng() % 3, din = 1 + rng() % 4, dout = 1 + rng() % 4;
    const Tensor x = testing::random_tensor({int_pow(J, m), din}, rng);
    const Tensor w = testing::random_tensor({bell_number(m + n), din, dout}, rng);
    const Tensor b = testing::random_tensor({bell_number(n), dout}, rng);
    const Tensor y = run_linear(x, w, b, J, m, n);
    for (int p = 0; p < kPerms; ++p) {
      const auto s = testing::random_permutation(J, rng);
      linear_dev = std::max(linear_dev, max_abs_diff(run_linear(testing::permute_joints(x, s, m), w, b, J, m, n),
                                                     testing::permute_joints(y, s, n)));
    }
  }

  for (int c = 0; c < kConfigs; ++c) {
    const auto [m, n] = hot_shapes[c];
    HotLayerSpec spec;
    spec.m = m;
    spec.n = n;
    spec.d = 2 + rng() % 3;
    spec.heads = 1 + rng() % 2;
    spec.d_head = 2;
    spec.d_ff = 3;
    spec.mode = AttentionMode::exact;
    const std::size_t J = m == 3 ? 4 : 3 + rng() % 3;
    ParamSet params;
    init_hot_layer(params, "h", spec, rng);
    const Tensor x = testing::random_tensor({int_pow(J, m), spec.d}, rng);
    const Tensor y = run_hot(params, spec, x, J);
    for (int p = 0; p < kPerms; ++p) {
      const auto s = testing::random_permutation(J, rng);
      hot_dev = std::max(hot_dev, max_abs_diff(run_hot(params, spec, testing::permute_joints(x, s, m), J),
                                               testing::permute_joints(y, s, n)));
    }
  }

  for (int c = 0; c < kConfigs; ++c) {
    const std::size_t J = 3 + rng() % 8;
    std::vector<HyperEdge> pairs, hyper;
    for (std::size_t v = 0; v + 1 < J; ++v) pairs.push_back({v, v + 1});
    for (const HyperEdge& e : enumerate_hyperedges(J, 3).edges) {
      if (rng() % 3 == 0) hyper.push_back(e);
    }
    for (std::size_t v = 0; v + 1 < J; ++v) hyper.push_back({v, v + 1});
    std::vector<double> w(hyper.size());
    for (double& v : w) v = 0.5 + static_cast<double>(rng() % 100) / 100.0;
    const Tensor a = adjacency_from_incidence(incidence_matrix(J, pairs));
    const Tensor h = incidence_matrix(J, hyper);
    const Tensor x = testing::random_tensor({J, 4}, rng);
    const Tensor theta = testing::random_tensor({4, 3}, rng);
    const Tensor g = gcn_update(x, a, theta), hg = hgcn_update(x, h, w, theta);
    for (int p = 0; p < kPerms; ++p) {
      const auto s = testing::random_permutation(J, rng);
      const Tensor px = testing::permute_joints(x, s, 1);
      gcn_dev = std::max(gcn_dev, max_abs_diff(gcn_update(px, permute_square(a, s), theta),
                                               testing::permute_joints(g, s, 1)));
      hgcn_dev = std::max(hgcn_dev, max_abs_diff(hgcn_update(px, testing::permute_joints(h, s, 1), w, theta),
                                                 testing::permute_joints(hg, s, 1)));
    }
  }

  const double worst = std::max({linear_dev, hot_dev, gcn_dev, hgcn_dev});
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = worst <= kEquivarianceTol && secs < kEquivarianceSeconds;
  out.detail = "max deviation linear " + fmt("%.1e", linear_dev) + ", hot " + fmt("%.1e", hot_dev) +
               ", gcn " + fmt("%.1e", gcn_dev) + ", hgcn " + fmt("%.1e", hgcn_dev) + " over 4x10 configs x 20 perms, " +
               fmt("%.1fs", secs);
  return out;
}

// ---- gradients ----

HeadSpec small_head(Variant variant, PoolMethod pool, std::size_t J, std::size_t r,
                    std::size_t d_prime, std::size_t tau) {
  HeadSpec spec;
  spec.variant = variant;
  spec.pool = pool;
  spec.d_prime = d_prime;
  spec.tau = tau;
  spec.num_classes = 3;
  spec.layout = MultiOrderLayout::full(J, r);
  return spec;
}

double gradient_case(int k, std::mt19937_64& rng, std::string& label) {
  ad::GradCheckOptions opts;
  opts.max_coords_per_input = 15;
  opts.seed = static_cast<std::uint64_t>(k);
  static const PoolMethod pools[] = {PoolMethod::avg, PoolMethod::max,  PoolMethod::sum,
                                     PoolMethod::attn, PoolMethod::tri, PoolMethod::rank};
  static const std::pair<std::size_t, std::size_t> hot_shapes[] = {{1, 1}, {1, 2}, {1, 3},
                                                                   {2, 2}, {3, 3}};
  const int kind = k % 10, round = k / 10;
  ParamSet params;
  if (kind == 0) {
    label = "mlp_unit";
    const MlpUnitSpec spec{2 + static_cast<std::size_t>(rng() % 4), 3};
    init_mlp_unit(params, "u", spec, rng);
    // Zero biases put whole rows exactly on the ReLU kink when every first-layer unit is off.
    for (const char* b : {"u.l1.b", "u.l2.b", "u.l3.b"}) {
      params.at(b) = testing::random_tensor(params.at(b).shape(), rng, 0.5);
    }
    const Tensor w = testing::random_tensor({4, spec.d}, rng);
    return testing::param_grad_check(params, {testing::random_tensor({4, spec.in}, rng)},
                                     [&](Binding& b, std::span<const ad::Var> v) {
                                       return testing::readout(mlp_unit(b, "u", spec, v[0], DropoutSource{}), w);
                                     },
                                     opts);
  }
  if (kind <= 5) {
    const auto [m, n] = hot_shapes[kind - 1];
    HotLayerSpec spec;
    spec.m = m;
    spec.n = n;
    spec.d = 2;
    spec.heads = 1 + round % 2;
    spec.d_head = 2;
    spec.d_ff = 2;
    spec.d_k = 6;
    spec.mode = round % 2 == 0 ? AttentionMode::exact : AttentionMode::performer;
    const std::size_t J = m + n >= 5 ? 3 : 3 + rng() % 3;
    label = "hot_layer " + std::to_string(m) + "->" + std::to_string(n) +
            (spec.mode == AttentionMode::exact ? " exact" : " performer") + " J=" + std::to_string(J);
    init_hot_layer(params, "h", spec, rng);
    const Tensor w = testing::random_tensor({int_pow(J, n), spec.d}, rng);
    return testing::param_grad_check(params, {testing::random_tensor({int_pow(J, m), spec.d}, rng, 0.5)},
                                     [&](Binding& b, std::span<const ad::Var> v) {
                                       return testing::readout(hot_layer(b, "h", spec, v[0], J), w);
                                     },
                                     opts);
  }
  if (kind == 6) {
    label = "mp_forward";
    const std::size_t J = 3 + rng() % 2, r = 1 + rng() % 2, d2 = 2 + rng() % 3;
    const MultiOrderLayout layout = MultiOrderLayout::full(J, r);
    init_mp(params, "mp", d2, layout, rng);
    const Tensor w = testing::random_tensor({r * d2, J}, rng);
    return testing::param_grad_check(params, {testing::random_tensor({d2, layout.total}, rng)},
                                     [&](Binding& b, std::span<const ad::Var> v) {
                                       return testing::readout(mp_forward(b, "mp", layout, v[0]), w);
                                     },
                                     opts);
  }
  if (kind <= 8) {
    const PoolMethod pool = pools[(2 * round + (kind - 7)) % 6];
    label = "tp_attention + " + to_string(pool);
    const std::size_t d3 = 3 + rng() % 3, tau = 2 + rng() % 4;
    init_tp(params, "tp", d3, pool, rng);
    const Tensor w = testing::random_tensor({d3}, rng);
    return testing::param_grad_check(params, {testing::random_tensor({d3, tau}, rng)},
                                     [&](Binding& b, std::span<const ad::Var> v) {
                                       return testing::readout(temporal_pool(b, "tp", pool, tp_attention(b, "tp", v[0])), w);
                                     },
                                     opts);
  }
  const PoolMethod pool = pools[round % 6];
  label = "two_branch_forward " + to_string(pool);
  const HeadSpec spec = small_head(Variant::two_branch, pool, 4, 2, 2, 2);
  init_head(params, spec, rng);
  const std::size_t label_class = rng() % 3;
  return testing::param_grad_check(params, {testing::random_tensor({2, 10, 2}, rng)},
                                   [&](Binding& b, std::span<const ad::Var> v) {
                                     return ad::cross_entropy(head_forward(b, spec, v[0]), label_class);
                                   },
                                   opts);
}

Outcome gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  double worst = 0.0;
  std::string worst_label;
  for (int k = 0; k < 50; ++k) {
    std::string label;
    const double err = gradient_case(k, rng, label);
    if (std::isnan(err) || err > worst || k == 0) {
      worst = std::isnan(err) ? INFINITY : err;
      worst_label = label;
    }
  }
  const double secs = seconds_since(t0);
  Outcome out;
  out.pass = worst <= kGradientTol && secs < kGradientSeconds;
  out.detail = "50 configs, max relative error " + fmt("%.2e", worst) + " (" + worst_label + "), " +
               fmt("%.1fs", secs);
  return out;
}

// ---- attention oracles ----

double all_pairs_reference_error() {
  std::mt19937_64 rng(303);
  const std::size_t J = 6, d = 4, dh = 3;
  HotLayerSpec spec;
  spec.m = spec.n = 1;
  spec.d = d;
  spec.heads = 1;
  spec.d_head = dh;
  spec.mode = AttentionMode::exact;
  spec.active_classes = {false, true};
  ParamSet params;
  init_hot_layer(params, "a", spec, rng);
  const Tensor wq = testing::random_tensor({d, dh}, rng, 0.5);
  const Tensor wk = testing::random_tensor({d, dh}, rng, 0.5);
  for (auto [name, w] : {std::pair{"a.q", &wq}, std::pair{"a.k", &wk}}) {
    Tensor& coeffs = params.at(std::string(name) + ".coeffs");
    coeffs.fill(0.0);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t e = 0; e < dh; ++e) coeffs.at({0, c, dh + e}) = (*w)[c * dh + e];
    }
    params.at(std::string(name) + ".bias").fill(0.0);
  }
  const Tensor x = testing::random_tensor({J, d}, rng);
  ad::Tape tape;
  Binding bind(tape, params, false);
  const Tensor a = hot_attention(bind, "a", spec, tape.constant(x), J).value();
  const Tensor q = matmul(x, wq), k = matmul(x, wk);
  const Tensor wv = slice(params.at("a.wv"), 0, 1, 1).reshaped({d, dh});
  const Tensor wo = slice(params.at("a.wo"), 0, 1, 1).reshaped({dh, d});
  const Tensor v = matmul(matmul(x, wv), wo);
  Tensor ref = x;
  for (std::size_t i = 0; i < J; ++i) {
    std::vector<double> e(J);
    double z = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += q[i * dh + c] * k[j * dh + c];
      e[j] = std::exp(s);
      z += e[j];
    }
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t c = 0; c < d; ++c) ref[i * d + c] += e[j] / z * v[j * d + c];
    }
  }
  return max_abs_diff(add(x, a), ref);
}

std::vector<std::size_t> digits_of(std::size_t flat, std::size_t base, std::size_t len) {
  std::vector<std::size_t> d(len);
  for (std::size_t q = len; q-- > 0;) {
    d[q] = flat % base;
    flat /= base;
  }
  return d;
}

bool pattern_holds(const Partition& p, const std::vector<std::size_t>& idx) {
  for (std::size_t a = 0; a < p.size(); ++a) {
    for (std::size_t b = a + 1; b < p.size(); ++b) {
      if (p[a] == p[b] && idx[a] != idx[b]) return false;
    }
  }
  return true;
}

// Worst |sum - 1| on the support plus worst |alpha| off it.
double row_sum_error() {
  std::mt19937_64 rng(304);
  const std::pair<std::size_t, std::size_t> shapes[] = {{1, 1}, {1, 2}, {1, 3}, {2, 2}, {3, 3}, {2, 1}, {2, 3}};
  double worst = 0.0;
  for (auto [m, n] : shapes) {
    const std::size_t J = 3, heads = 2;
    const PartitionIndex& index = PartitionIndex::get(J, m, n);
    const std::size_t groups = index.count() * heads;
    const Tensor q = testing::random_tensor({index.out_size(), groups * 2}, rng);
    const Tensor k = testing::random_tensor({index.in_size(), groups * 2}, rng);
    const ClassAttentionShape shape{J, m, n, heads, {}};
    for (std::size_t c = 0; c < index.count(); ++c) {
      for (std::size_t h = 0; h < heads; ++h) {
        const Tensor alpha = attention_coefficients(q, k, shape, c, h);
        for (std::size_t j = 0; j < index.out_size(); ++j) {
          double sum = 0.0;
          bool any = false;
          for (std::size_t i = 0; i < index.in_size(); ++i) {
            auto idx = digits_of(i, J, m);
            const auto dj = digits_of(j, J, n);
            idx.insert(idx.end(), dj.begin(), dj.end());
            const double a = alpha[i * index.out_size() + j];
            if (pattern_holds(index.partition(c), idx)) {
              any = true;
              sum += a;
            } else {
              worst = std::max(worst, std::abs(a));
            }
          }
          if (any) worst = std::max(worst, std::abs(sum - 1.0));
        }
      }
    }
  }
  return worst;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::vector<double> performer_medians() {
  std::vector<double> out;
  for (std::size_t dk : {16u, 64u, 256u}) {
    std::vector<double> devs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      HotLayerSpec spec;
      spec.m = 1;
      spec.n = 2;
      spec.d = 4;
      spec.heads = 1;
      spec.d_head = 4;
      spec.d_k = dk;
      ParamSet params;
      init_hot_layer(params, "h", spec, rng);
      const std::size_t J = 5;
      const Tensor x = testing::random_tensor({J, spec.d}, rng, 0.5);
      ad::Tape tape;
      Binding bind(tape, params, false);
      spec.mode = AttentionMode::exact;
      const Tensor exact = hot_attention(bind, "h", spec, tape.constant(x), J).value();
      spec.mode = AttentionMode::performer;
      const Tensor approx = hot_attention(bind, "h", spec, tape.constant(x), J).value();
      devs.push_back(max_abs_diff(exact, approx));
    }
    out.push_back(median(devs));
  }
  return out;
}

Outcome attention_oracles() {
  const double ref = all_pairs_reference_error();
  const double rows = row_sum_error();
  const auto med = performer_medians();
  Outcome out;
  out.pass = ref <= kAttentionReferenceTol && rows <= kRowSumTol && med[0] > med[1] && med[1] > med[2];
  out.detail = "all-pairs reference " + fmt("%.1e", ref) + ", row sums " + fmt("%.1e", rows) +
               ", performer median deviation d_K 16/64/256: " + fmt("%.3g", med[0]) + " / " +
               fmt("%.3g", med[1]) + " / " + fmt("%.3g", med[2]);
  return out;
}

// ---- shape algebra ----

Outcome shape_algebra() {
  std::mt19937_64 rng(404);
  const std::size_t J = 5, r = 3, dp = 4, tau = 2;
  const HeadSpec spec = small_head(Variant::two_branch, PoolMethod::rank, J, r, dp, tau);
  ParamSet params;
  init_head(params, spec, rng);
  std::vector<std::vector<Tensor>> phi;
  for (std::size_t m = 1; m <= r; ++m) {
    phi.emplace_back();
    for (std::size_t t = 0; t < tau; ++t) phi.back().push_back(testing::random_tensor({int_pow(J, m), dp}, rng));
  }
  const Tensor m = assemble_multi_order(phi, spec.layout);
  ad::Tape tape;
  Binding bind(tape, params, false);
  const ad::Var mv = tape.constant(m);
  const Shape a = branch_mp_tp(bind, spec, mv).shape();
  const Shape b = branch_tp_mp(bind, spec, mv).shape();
  const Shape c = head_features(bind, spec, mv).shape();
  Outcome out;
  out.pass = m.shape() == Shape{4, 25, 2} && a == Shape{60} && b == Shape{60} && c == Shape{120} &&
             c[0] == 2 * r * dp * J;
  out.detail = "M " + shape_str(m.shape()) + ", MP->TP " + shape_str(a) + ", TP->MP " + shape_str(b) +
               ", concat " + shape_str(c);
  return out;
}

// ---- rank pooling ----

double cosine(const Tensor& a, const Tensor& b) { return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b)); }

Tensor rank_pool(const Tensor& o) {
  ParamSet params;
  ad::Tape tape;
  Binding bind(tape, params, false);
  return temporal_pool(bind, "p", PoolMethod::rank, tape.constant(o)).value();
}

Outcome rank_pooling() {
  std::mt19937_64 rng(505);
  double direction = 1.0;
  for (std::size_t tau = 2; tau <= 20; ++tau) {
    const Tensor u = testing::random_tensor({6}, rng);
    Tensor o({6, tau});
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t t = 0; t < tau; ++t) o[i * tau + t] = static_cast<double>(t + 1) * u[i];
    }
    direction = std::min(direction, cosine(rank_pool(o), u));
  }

  double oracle = 1.0;
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t tau = 3 + trial % 4, d = 5;
    const Tensor u = testing::random_tensor({d}, rng);
    Tensor o({d, tau});
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t t = 0; t < tau; ++t) o[i * tau + t] = static_cast<double>(t + 1) * u[i] + noise(rng);
    }
    std::vector<Tensor> v(tau, Tensor({d}, 0.0));
    for (std::size_t t = 0; t < tau; ++t) {
      for (std::size_t q = 0; q <= t; ++q) {
        for (std::size_t i = 0; i < d; ++i) v[t][i] += o[i * tau + q] / static_cast<double>(t + 1);
      }
    }
    const double lambda = 0.01;
    Tensor w({d}, 0.0);
    for (int it = 1; it <= 5000; ++it) {
      Tensor grad = scale(w, lambda);
      for (std::size_t t = 0; t < tau; ++t) {
        for (std::size_t s = t + 1; s < tau; ++s) {
          const Tensor diff = sub(v[s], v[t]);
          if (dot(w, diff) < 1.0) grad = sub(grad, diff);
        }
      }
      w = sub(w, scale(grad, 1.0 / (lambda * it)));
      const double norm = std::sqrt(dot(w, w)), radius = 1.0 / std::sqrt(lambda);
      if (norm > radius) w = scale(w, radius / norm);
    }
    oracle = std::min(oracle, cosine(rank_pool(o), w));
  }

  // Average pooling cannot tell two block orders apart; rank pooling negates.
  const Tensor ab = Tensor::matrix(2, 2, {1.0, 3.0, -2.0, 0.5});
  const Tensor ba = Tensor::matrix(2, 2, {3.0, 1.0, 0.5, -2.0});
  const bool sensitive = max_abs_diff(rank_pool(ab), scale(rank_pool(ba), -1.0)) < 1e-15 &&
                         max_abs_diff(rank_pool(ab), rank_pool(ba)) > 1.0;

  Outcome out;
  out.pass = direction > kRankDirectionCos && oracle > kRankOracleCos && sensitive;
  out.detail = "min direction cosine " + fmt("%.6f", direction) + ", min ranking-oracle cosine " +
               fmt("%.4f", oracle) + ", order counterexample " + (sensitive ? "holds" : "fails");
  return out;
}

// ---- synthetic benchmark ----

TrainConfig benchmark_config() {
  TrainConfig cfg;
  cfg.T = 10;
  cfg.S = 5;
  cfg.r = 3;
  cfg.d = 4;
  cfg.d_prime = 4;
  cfg.heads = 1;
  cfg.depth = 1;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.lr0 = 0.003;
  cfg.lr_drops = {};
  cfg.pool = PoolMethod::rank;
  cfg.train_per_class = 100;
  cfg.seed = 0;
  return cfg;
}

double benchmark_top1(const Dataset& train_set, const Dataset& test_set, const Dataset& all,
                      TrainConfig cfg, std::string& note) {
  try {
    Model model(model_config(cfg, all));
    std::vector<PreparedSequence> tr, te;
    for (const auto& s : train_set) tr.push_back(model.prepare(s));
    for (const auto& s : test_set) te.push_back(model.prepare(s));
    train_model(model, tr, cfg);
    return evaluate_prepared(model, te).top1;
  } catch (const std::exception& e) {
    note += " [" + to_string(cfg.variant) + " seed " + std::to_string(cfg.seed) + ": " + e.what() + "]";
    return 0.0;
  }
}

Outcome synthetic_benchmark() {
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.num_classes = 4;
  sc.per_class = 150;
  sc.joints = 10;
  sc.frames = 40;
  sc.seed = 0;
  const Dataset data = synth_dataset(sc);
  const TrainConfig base = benchmark_config();
  Dataset train_set, test_set;
  split_dataset(data, base, train_set, test_set);
  std::string note;

  TrainConfig c = base;
  c.variant = Variant::two_branch;
  c.orders = {1};
  const double order1 = benchmark_top1(train_set, test_set, data, c, note);
  c.orders = {3};
  const double order3 = benchmark_top1(train_set, test_set, data, c, note);
  c.orders = {};
  const double two_branch = benchmark_top1(train_set, test_set, data, c, note);

  std::vector<double> mp, tp, bl;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    c.seed = seed;
    c.variant = Variant::mp_only;
    mp.push_back(benchmark_top1(train_set, test_set, data, c, note));
    c.variant = Variant::tp_only;
    tp.push_back(benchmark_top1(train_set, test_set, data, c, note));
    c.variant = Variant::baseline;
    bl.push_back(benchmark_top1(train_set, test_set, data, c, note));
  }
  const double baseline = bl[0];
  const double secs = seconds_since(t0);

  const bool a = 100.0 * (order3 - order1) >= kOrderGapPoints;
  const bool b = two_branch >= kTwoBranchTop1;
  const bool cc = 100.0 * (two_branch - baseline) >= kOverBaselinePoints;
  const double mmp = median(mp), mtp = median(tp), mbl = median(bl);
  const bool d = mmp >= mtp && mtp >= mbl;
  Outcome out;
  out.pass = a && b && cc && secs < kBenchmarkSeconds;
  out.detail = std::string("(a) order-3 ") + fmt("%.3f", order3) + " vs order-1 " + fmt("%.3f", order1) +
               (a ? " ok" : " FAIL") + "; (b) two-branch rank " + fmt("%.3f", two_branch) +
               (b ? " ok" : " FAIL") + "; (c) vs baseline " + fmt("%.3f", baseline) + (cc ? " ok" : " FAIL") +
               "; (d) medians mp_only " + fmt("%.3f", mmp) + " tp_only " + fmt("%.3f", mtp) + " baseline " +
               fmt("%.3f", mbl) + (d ? " (trend holds)" : " (trend not observed)") + "; " + fmt("%.0fs", secs) +
               note;
  return out;
}

// ---- determinism ----

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void pipeline(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthConfig sc;
  sc.num_classes = 2;
  sc.per_class = 9;
  sc.joints = 6;
  sc.frames = 14;
  sc.seed = 7;
  save_jsonl((dir / "data.jsonl").string(), synth_dataset(sc));
  const Dataset data = load_jsonl((dir / "data.jsonl").string());
  TrainConfig cfg;
  cfg.orders = {1, 2};
  cfg.r = 2;
  cfg.d = 4;
  cfg.d_prime = 4;
  cfg.heads = 1;
  cfg.depth = 1;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.lr0 = 0.01;
  cfg.lr_drops = {2};
  cfg.dropout = 0.1;
  cfg.seed = 11;
  Dataset train_set, test_set;
  split_dataset(data, cfg, train_set, test_set);
  TrainResult r = train(train_set, cfg);
  save_checkpoint((dir / "model.ckpt").string(), r.model);
  const Model model = load_checkpoint((dir / "model.ckpt").string());
  const Metrics m = evaluate(model, test_set);
  std::ofstream report(dir / "report.csv", std::ios::binary);
  report << "epoch,lr,loss\n";
  for (const EpochStats& s : r.history) report << s.epoch << ',' << fmt("%.17g", s.lr) << ',' << fmt("%.17g", s.loss) << '\n';
  report << "top1,top5,loss\n" << fmt("%.17g", m.top1) << ',' << fmt("%.17g", m.top5) << ',' << fmt("%.17g", m.loss) << '\n';
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / ("mmformer_accept_" + std::to_string(::getpid()));
  pipeline(root / "a");
  pipeline(root / "b");
  Outcome out;
  std::string differing;
  for (const char* f : {"data.jsonl", "model.ckpt", "report.csv"}) {
    const std::string x = slurp(root / "a" / f), y = slurp(root / "b" / f);
    if (x.empty() || x != y) differing += std::string(" ") + f;
  }
  std::filesystem::remove_all(root);
  out.pass = differing.empty();
  out.detail = differing.empty() ? "data, checkpoint and report byte-identical across two runs"
                                 : "differs:" + differing;
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"combinatorics", combinatorics},
      {"equivariance", equivariance},
      {"gradients", gradients},
      {"attention_oracles", attention_oracles},
      {"shape_algebra", shape_algebra},
      {"rank_pooling", rank_pooling},
      {"synthetic_benchmark", synthetic_benchmark},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("%s %s (%.2fs): %s\n", o.pass ? "PASS" : "FAIL", name, seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
