#include <doctest.h>

#include <cmath>
#include <random>

#include "mmformer/hot.hpp"
#include "mmformer/mmformer.hpp"
#include "support.hpp"

using namespace mmf;

namespace {

double cosine(const Tensor& a, const Tensor& b) {
  return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

std::vector<std::vector<Tensor>> random_phi(const MultiOrderLayout& layout, std::size_t d,
                                            std::size_t tau, std::mt19937_64& rng) {
  std::vector<std::vector<Tensor>> phi;
  for (std::size_t m : layout.orders) {
    phi.emplace_back();
    for (std::size_t t = 0; t < tau; ++t) {
      phi.back().push_back(testing::random_tensor({int_pow(layout.joints, m), d}, rng));
    }
  }
  return phi;
}

HeadSpec toy_head(Variant variant, PoolMethod pool, std::size_t J, std::size_t r,
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

Tensor pool_value(PoolMethod method, const Tensor& o, const ParamSet& params) {
  ad::Tape tape;
  Binding bind(tape, params, false);
  return temporal_pool(bind, "p", method, tape.constant(o)).value();
}

}  // namespace

TEST_CASE("assembly keeps strictly increasing tuples") {
  const MultiOrderLayout layout = MultiOrderLayout::full(3, 2);
  CHECK(layout.total == 6);
  CHECK(layout.offsets == std::vector<std::size_t>{0, 3});
  Tensor phi1({3, 1}, std::vector<double>{10, 11, 12});
  Tensor phi2({9, 1});
  for (std::size_t i = 0; i < 9; ++i) phi2[i] = static_cast<double>(i);
  const Tensor m = assemble_multi_order({{phi1}, {phi2}}, layout);
  CHECK(m.shape() == Shape{1, 6, 1});
  // (0,1), (0,2), (1,2) sit at flat rows 1, 2 and 5 of the 3 x 3 order-2 tensor.
  CHECK(m == Tensor({1, 6, 1}, std::vector<double>{10, 11, 12, 1, 2, 5}));
}

TEST_CASE("assembly shape and index trace") {
  std::mt19937_64 rng(1);
  const MultiOrderLayout layout = MultiOrderLayout::full(5, 3);
  const auto phi = random_phi(layout, 4, 2, rng);
  const Tensor m = assemble_multi_order(phi, layout);
  CHECK(m.shape() == Shape{4, 25, 2});
  const auto& pairs = layout.edges[1].edges;
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t t = 0; t < 2; ++t) {
        CHECK(m.at({c, 5 + e, t}) == phi[1][t][(pairs[e][0] * 5 + pairs[e][1]) * 4 + c]);
      }
    }
  }
  for (std::size_t J = 3; J <= 8; ++J) {
    for (std::size_t r = 1; r <= 3; ++r) {
      CHECK(MultiOrderLayout::full(J, r).total == total_hyperedges(J, r));
    }
  }
  CHECK_THROWS_AS(MultiOrderLayout::full(2, 3), std::invalid_argument);
  CHECK_THROWS_AS(MultiOrderLayout::make(5, {3, 1}), std::invalid_argument);
  auto bad = phi;
  bad[2][1] = Tensor({125, 3});
  CHECK_THROWS_AS(assemble_multi_order(bad, layout), std::invalid_argument);
  bad = phi;
  bad[0].pop_back();
  CHECK_THROWS_AS(assemble_multi_order(bad, layout), std::invalid_argument);

  // The differentiable version agrees and routes gradients back to the kept entries.
  const MultiOrderLayout small = MultiOrderLayout::make(4, {1, 3});
  const auto phis = random_phi(small, 2, 2, rng);
  std::vector<Tensor> flat;
  for (const auto& order : phis) flat.insert(flat.end(), order.begin(), order.end());
  const Tensor w = testing::random_tensor({2, small.total, 2}, rng);
  const double err = ad::grad_check(
      [&](ad::Tape&, std::span<const ad::Var> v) {
        return testing::readout(assemble_multi_order({{v[0], v[1]}, {v[2], v[3]}}, small), w);
      },
      flat);
  CHECK(err < 1e-8);
  ad::Tape tape;
  ad::Var y = assemble_multi_order({{tape.constant(flat[0]), tape.constant(flat[1])},
                                    {tape.constant(flat[2]), tape.constant(flat[3])}},
                                   small);
  CHECK(y.value() == assemble_multi_order(phis, small));
}

TEST_CASE("coupled-mode attention examples") {
  std::mt19937_64 rng(2);
  ad::Tape tape;
  const Tensor m = testing::random_tensor({4, 6}, rng);
  ad::Var zero = tape.constant(Tensor({4, 4}, 0.0)), eye = tape.constant(Tensor::identity(4));
  AttentionResult uniform = coupled_mode_attention(tape.constant(m), zero, zero, eye);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double col = 0.0;
      for (std::size_t k = 0; k < 4; ++k) col += 0.25 * m[k * 6 + j];
      CHECK(uniform.out.value()[i * 6 + j] == col);
    }
  }

  const Tensor single = testing::random_tensor({1, 5}, rng);
  const Tensor w1 = testing::random_tensor({1, 1}, rng);
  ad::Var w = tape.constant(w1);
  AttentionResult one = coupled_mode_attention(tape.constant(single), w, w, w);
  CHECK(max_abs_diff(one.out.value(), scale(single, w1[0])) < 1e-15);

  const Tensor wq = testing::random_tensor({4, 4}, rng), wk = testing::random_tensor({4, 4}, rng),
               wv = testing::random_tensor({4, 4}, rng);
  AttentionResult res = coupled_mode_attention(tape.constant(m), tape.constant(wq),
                                               tape.constant(wk), tape.constant(wv));
  // Straight-line reference.
  const Tensor q = matmul(wq, m), k = matmul(wk, m), v = matmul(wv, m);
  Tensor out({4, 6}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> s(4);
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      s[j] = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s[j] += q[i * 6 + c] * k[j * 6 + c];
      s[j] /= std::sqrt(6.0);
      mx = std::max(mx, s[j]);
    }
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t c = 0; c < 6; ++c) out[i * 6 + c] += s[j] / z * v[j * 6 + c];
    }
  }
  CHECK(max_abs_diff(res.out.value(), out) < 1e-10);
  CHECK_THROWS_AS(coupled_mode_attention(tape.constant(m), eye, eye, tape.constant(wq.reshaped({2, 8}))),
                  std::invalid_argument);
}

TEST_CASE("multi-order pooling") {
  std::mt19937_64 rng(3);
  const MultiOrderLayout layout = MultiOrderLayout::full(5, 3);
  ParamSet params;
  init_mp(params, "mp", 8, layout, rng);
  CHECK(params.at("mp.h2").shape() == Shape{10, 5});
  // Normalized incidence: column j averages the edges that contain j.
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor& h = params.at("mp.h" + std::to_string(k + 1));
    for (std::size_t j = 0; j < 5; ++j) {
      double col = 0.0;
      for (std::size_t e = 0; e < h.dim(0); ++e) {
        const auto& edge = layout.edges[k].edges[e];
        const bool inside = std::find(edge.begin(), edge.end(), j) != edge.end();
        CHECK((h[e * 5 + j] != 0.0) == inside);
        col += h[e * 5 + j];
      }
      CHECK(col == doctest::Approx(1.0));
    }
  }
  const Tensor x = testing::random_tensor({8, 25}, rng);
  ad::Tape tape;
  Binding bind(tape, params, false);
  AttentionTrace trace;
  const Tensor y = mp_forward(bind, "mp", layout, tape.constant(x), &trace, "t").value();
  CHECK(y.shape() == Shape{24, 5});
  CHECK(trace.at("t").shape() == Shape{8, 8});
  // With the incidence init, order-2 output (c, j) averages attention outputs over pairs with j.
  AttentionResult att = coupled_mode_attention(tape.constant(x), bind("mp.wq"), bind("mp.wk"),
                                               bind("mp.wv"));
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t j = 0; j < 5; ++j) {
      double mean = 0.0;
      for (std::size_t e = 0; e < 10; ++e) {
        const auto& edge = layout.edges[1].edges[e];
        if (edge[0] == j || edge[1] == j) mean += att.out.value()[c * 25 + 5 + e] / 4.0;
      }
      CHECK(std::abs(y[(8 + c) * 5 + j] - mean) < 1e-12);
    }
  }

  // One order with H = I passes the attention output through.
  const MultiOrderLayout first = MultiOrderLayout::full(5, 1);
  ParamSet p1;
  init_mp(p1, "mp", 3, first, rng);
  CHECK(p1.at("mp.h1") == Tensor::identity(5));
  const Tensor x1 = testing::random_tensor({3, 5}, rng);
  Binding b1(tape, p1, false);
  AttentionResult a1 = coupled_mode_attention(tape.constant(x1), b1("mp.wq"), b1("mp.wk"), b1("mp.wv"));
  CHECK(mp_forward(b1, "mp", first, tape.constant(x1)).value() == a1.out.value());
  CHECK_THROWS_AS(mp_forward(bind, "mp", layout, tape.constant(Tensor({8, 24}))),
                  std::invalid_argument);
}

TEST_CASE("temporal pooling examples") {
  std::mt19937_64 rng(4);
  ParamSet params;
  init_tp(params, "p", 3, PoolMethod::attn, rng);
  params.add("p.pool_u", testing::random_tensor({3}, rng));
  params.add("p.pool_v", testing::random_tensor({3}, rng));
  const Tensor col = Tensor::matrix(3, 1, {1.5, -2.0, 0.25});
  const Tensor flat = col.reshaped({3});
  for (PoolMethod m : {PoolMethod::avg, PoolMethod::max, PoolMethod::sum, PoolMethod::attn}) {
    CHECK(pool_value(m, col, params) == flat);
  }
  CHECK(rank_pool_coefficients(1) == std::vector<double>{0.0});
  CHECK(pool_value(PoolMethod::rank, col, params) == Tensor({3}, 0.0));
  // tri on one block: s = 1, so the output is O (u . O).
  double g = 0.0;
  for (std::size_t i = 0; i < 3; ++i) g += params.at("p.pool_u")[i] * col[i];
  CHECK(max_abs_diff(pool_value(PoolMethod::tri, col, params), scale(flat, g)) < 1e-15);

  // Constant in time.
  Tensor constant({3, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t t = 0; t < 5; ++t) constant[i * 5 + t] = flat[i];
  }
  CHECK(max_abs_diff(pool_value(PoolMethod::avg, constant, params), flat) < 1e-15);
  CHECK(max_abs_diff(pool_value(PoolMethod::sum, constant, params), scale(flat, 5.0)) < 1e-14);
  for (std::size_t tau = 1; tau <= 12; ++tau) {
    double s = 0.0;
    for (double r : rank_pool_coefficients(tau)) s += r;
    CHECK(std::abs(s) < 1e-12);
  }
  CHECK(max_abs_diff(pool_value(PoolMethod::rank, constant, params), Tensor({3}, 0.0)) < 1e-13);
  const auto rho2 = rank_pool_coefficients(2);
  CHECK(rho2[0] == doctest::Approx(-0.5));
  CHECK(rho2[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(parse_pool_method("median"), std::invalid_argument);
  CHECK(parse_pool_method(to_string(PoolMethod::tri)) == PoolMethod::tri);
}

TEST_CASE("rank pooling recovers the direction of linear-in-time features") {
  std::mt19937_64 rng(5);
  ParamSet params;
  for (std::size_t tau = 2; tau <= 20; ++tau) {
    const Tensor u = testing::random_tensor({6}, rng);
    Tensor o({6, tau});
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t t = 0; t < tau; ++t) o[i * tau + t] = static_cast<double>(t + 1) * u[i];
    }
    CHECK(cosine(pool_value(PoolMethod::rank, o, params), u) > 0.99);
  }
}

TEST_CASE("rank pooling agrees with a pairwise ranking solution") {
  std::mt19937_64 rng(6);
  ParamSet params;
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t tau = 3 + trial % 4, d = 5;
    const Tensor u = testing::random_tensor({d}, rng);
    Tensor o({d, tau});
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t t = 0; t < tau; ++t) o[i * tau + t] = static_cast<double>(t + 1) * u[i] + noise(rng);
    }
    // Time-varying means, then min (lambda/2)|w|^2 + sum_{t<s} hinge(1 - w.(V_s - V_t)) by
    // projected subgradient steps onto the ball of radius 1/sqrt(lambda).
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
    CHECK(cosine(pool_value(PoolMethod::rank, o, params), w) > 0.95);
  }
}

TEST_CASE("block order sensitivity of the pooling operators") {
  std::mt19937_64 rng(7);
  ParamSet params;
  const Tensor o = testing::random_tensor({4, 6}, rng);
  const auto perm = testing::random_permutation(6, rng);
  Tensor shuffled(o.shape());
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t t = 0; t < 6; ++t) shuffled[i * 6 + perm[t]] = o[i * 6 + t];
  }
  for (PoolMethod m : {PoolMethod::avg, PoolMethod::max, PoolMethod::sum}) {
    CHECK(max_abs_diff(pool_value(m, o, params), pool_value(m, shuffled, params)) < 1e-14);
  }
  // Two blocks a, b: rank gives (b - a) / 2, and swapping them negates it.
  const Tensor ab = Tensor::matrix(2, 2, {1.0, 3.0, -2.0, 0.5});
  const Tensor ba = Tensor::matrix(2, 2, {3.0, 1.0, 0.5, -2.0});
  const Tensor forward = pool_value(PoolMethod::rank, ab, params);
  CHECK(max_abs_diff(forward, Tensor::vector({1.0, 1.25})) < 1e-15);
  CHECK(max_abs_diff(pool_value(PoolMethod::rank, ba, params), scale(forward, -1.0)) < 1e-15);

  // Reversal: odd-symmetric sequences negate, even-symmetric sequences are unchanged.
  for (std::size_t tau = 2; tau <= 7; ++tau) {
    const Tensor base = testing::random_tensor({3, tau}, rng);
    Tensor odd({3, tau}), even({3, tau}), odd_rev({3, tau});
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t t = 0; t < tau; ++t) {
        const double c = static_cast<double>(t) - static_cast<double>(tau - 1) / 2.0;
        odd[i * tau + t] = c * base[i * tau];
        even[i * tau + t] = base[i * tau + t] + base[i * tau + tau - 1 - t];
      }
      for (std::size_t t = 0; t < tau; ++t) odd_rev[i * tau + t] = odd[i * tau + tau - 1 - t];
    }
    CHECK(max_abs_diff(pool_value(PoolMethod::rank, odd_rev, params),
                       scale(pool_value(PoolMethod::rank, odd, params), -1.0)) < 1e-12);
    Tensor even_rev(even.shape());
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t t = 0; t < tau; ++t) even_rev[i * tau + t] = even[i * tau + tau - 1 - t];
    }
    CHECK(max_abs_diff(pool_value(PoolMethod::rank, even_rev, params),
                       pool_value(PoolMethod::rank, even, params)) < 1e-12);
  }
}

TEST_CASE("TP attention commutes with block permutations") {
  std::mt19937_64 rng(8);
  ParamSet params;
  init_tp(params, "p", 5, PoolMethod::avg, rng);
  const Tensor x = testing::random_tensor({5, 4}, rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Tensor px(x.shape());
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t t = 0; t < 4; ++t) px[i * 4 + perm[t]] = x[i * 4 + t];
  }
  ad::Tape tape;
  Binding bind(tape, params, false);
  const Tensor y = tp_attention(bind, "p", tape.constant(x)).value();
  const Tensor py = tp_attention(bind, "p", tape.constant(px)).value();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t t = 0; t < 4; ++t) CHECK(std::abs(py[i * 4 + perm[t]] - y[i * 4 + t]) < 1e-12);
  }
}

TEST_CASE("branch shape algebra") {
  std::mt19937_64 rng(9);
  const HeadSpec spec = toy_head(Variant::two_branch, PoolMethod::rank, 5, 3, 4, 2);
  ParamSet params;
  init_head(params, spec, rng);
  CHECK(params.at("mp_tp.mp.wq").shape() == Shape{8, 8});
  CHECK(params.at("mp_tp.tp.wq").shape() == Shape{60, 60});
  CHECK(params.at("tp_mp.tp.wq").shape() == Shape{100, 100});
  CHECK(params.at("tp_mp.mp.wq").shape() == Shape{4, 4});
  CHECK(params.at("cls.w").shape() == Shape{120, 3});
  const Tensor m = testing::random_tensor({4, 25, 2}, rng);
  ad::Tape tape;
  Binding bind(tape, params, false);
  AttentionTrace trace;
  ad::Var mv = tape.constant(m);
  CHECK(branch_mp_tp(bind, spec, mv, &trace).shape() == Shape{60});
  CHECK(branch_tp_mp(bind, spec, mv, &trace).shape() == Shape{60});
  CHECK(head_features(bind, spec, mv).shape() == Shape{120});
  CHECK(head_forward(bind, spec, mv).shape() == Shape{3});
  CHECK(trace.at("channel_block").shape() == Shape{8, 8});
  CHECK(trace.at("order_channel_joint").shape() == Shape{60, 60});
  CHECK(trace.at("channel_edge").shape() == Shape{100, 100});
  CHECK(trace.at("channel_only").shape() == Shape{4, 4});
  CHECK_THROWS_AS(head_forward(bind, spec, tape.constant(Tensor({4, 25, 3}))), std::invalid_argument);

  // Restack peels the block factor out of the rows: (order, channel, block) -> (order, channel, joint).
  const Tensor o = testing::random_tensor({3 * 4 * 2, 5}, rng);
  const Tensor re = restack_mp_output(tape.constant(o), 3, 4, 2, 5).value();
  CHECK(re.shape() == Shape{60, 2});
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t j = 0; j < 5; ++j) {
          CHECK(re[((k * 4 + c) * 5 + j) * 2 + t] == o[((k * 4 + c) * 2 + t) * 5 + j]);
        }
      }
    }
  }
}

TEST_CASE("zero input through the branches") {
  std::mt19937_64 rng(10);
  for (PoolMethod pool : {PoolMethod::avg, PoolMethod::max, PoolMethod::sum, PoolMethod::attn,
                          PoolMethod::tri, PoolMethod::rank}) {
    const HeadSpec spec = toy_head(Variant::two_branch, pool, 4, 2, 2, 3);
    ParamSet params;
    init_head(params, spec, rng);
    ad::Tape tape;
    Binding bind(tape, params, false);
    ad::Var zero = tape.constant(Tensor({2, 10, 3}, 0.0));
    const Tensor a = branch_mp_tp(bind, spec, zero).value(), b = branch_tp_mp(bind, spec, zero).value();
    CHECK(a.all_finite());
    CHECK(b.all_finite());
    if (pool != PoolMethod::attn && pool != PoolMethod::tri) {
      CHECK(a == Tensor({16}, 0.0));
      CHECK(b == Tensor({16}, 0.0));
    }
  }
}

TEST_CASE("variants emit class logits from one shared assembly") {
  std::mt19937_64 rng(11);
  const Tensor m = testing::random_tensor({4, 25, 2}, rng);
  const Tensor copy = m;
  for (Variant v : {Variant::baseline, Variant::tp_only, Variant::mp_only, Variant::mp_tp,
                    Variant::tp_mp, Variant::two_branch}) {
    const HeadSpec spec = toy_head(v, PoolMethod::avg, 5, 3, 4, 2);
    ParamSet params;
    init_head(params, spec, rng);
    ad::Tape tape;
    Binding bind(tape, params, false);
    ad::Var mv = tape.leaf_ref(m, false);
    const Tensor logits = head_forward(bind, spec, mv).value();
    CHECK(logits.shape() == Shape{3});
    CHECK(logits.all_finite());
    CHECK(&mv.value() == &m);
    CHECK(parse_variant(to_string(v)) == v);
    if (v == Variant::tp_only) {
      CHECK(params.at("tp_only.fc.w").shape() == Shape{4 * 25, 3 * 4 * 5});
      CHECK(params.at("cls.w").shape() == Shape{60, 3});
    }
    if (v == Variant::baseline) CHECK(params.at("cls.w").shape() == Shape{12, 3});
  }
  CHECK(m == copy);
  CHECK_THROWS_AS(parse_variant("three_branch"), std::invalid_argument);
}

TEST_CASE("swapping the branch halves with a permuted classifier keeps the logits") {
  std::mt19937_64 rng(12);
  const HeadSpec spec = toy_head(Variant::two_branch, PoolMethod::tri, 4, 2, 2, 2);
  ParamSet params;
  init_head(params, spec, rng);
  ad::Tape tape;
  Binding bind(tape, params, false);
  ad::Var mv = tape.constant(testing::random_tensor({2, 10, 2}, rng));
  const Tensor logits = head_forward(bind, spec, mv).value();
  const Tensor a = branch_mp_tp(bind, spec, mv).value(), b = branch_tp_mp(bind, spec, mv).value();
  const Tensor parts[2] = {b, a};
  const Tensor swapped = concat(parts, 0);
  const Tensor& w = params.at("cls.w");
  const std::size_t half = spec.branch_width(), K = 3;
  Tensor wp(w.shape());
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      wp[i * K + k] = w[(half + i) * K + k];
      wp[(half + i) * K + k] = w[i * K + k];
    }
  }
  Tensor expect = matmul(swapped.reshaped({1, 2 * half}), wp).reshaped({K});
  expect = add(expect, params.at("cls.b"));
  CHECK(max_abs_diff(expect, logits) < 1e-12);
}

TEST_CASE("mmformer gradients match finite differences") {
  std::mt19937_64 rng(13);
  ad::GradCheckOptions opts;
  opts.max_coords_per_input = 12;
  SUBCASE("mp_forward") {
    const MultiOrderLayout layout = MultiOrderLayout::full(4, 2);
    ParamSet params;
    init_mp(params, "mp", 3, layout, rng);
    const Tensor w = testing::random_tensor({6, 4}, rng);
    CHECK(testing::param_grad_check(params, {testing::random_tensor({3, 10}, rng)},
                                    [&](Binding& b, std::span<const ad::Var> v) {
                                      return testing::readout(mp_forward(b, "mp", layout, v[0]), w);
                                    },
                                    opts) < 1e-6);
  }
  SUBCASE("tp_attention and all pooling methods") {
    for (PoolMethod pool : {PoolMethod::avg, PoolMethod::max, PoolMethod::sum, PoolMethod::attn,
                            PoolMethod::tri, PoolMethod::rank}) {
      ParamSet params;
      init_tp(params, "tp", 5, pool, rng);
      const Tensor w = testing::random_tensor({5}, rng);
      const double err = testing::param_grad_check(
          params, {testing::random_tensor({5, 3}, rng)},
          [&](Binding& b, std::span<const ad::Var> v) {
            return testing::readout(temporal_pool(b, "tp", pool, tp_attention(b, "tp", v[0])), w);
          },
          opts);
      CHECK_MESSAGE(err < 1e-6, to_string(pool));
    }
  }
  SUBCASE("two-branch forward") {
    const HeadSpec spec = toy_head(Variant::two_branch, PoolMethod::rank, 4, 2, 2, 2);
    ParamSet params;
    init_head(params, spec, rng);
    const Tensor w = testing::random_tensor({3}, rng);
    CHECK(testing::param_grad_check(params, {testing::random_tensor({2, 10, 2}, rng)},
                                    [&](Binding& b, std::span<const ad::Var> v) {
                                      return ad::cross_entropy(head_forward(b, spec, v[0]), 1);
                                    },
                                    opts) < 1e-6);
  }
}
