#include "mmformer/mmformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmformer/hot.hpp"
#include "mmformer/ops.hpp"
#include "mmformer/partitions.hpp"

namespace mmf {

namespace {

using kernels::Trans;

constexpr std::pair<std::string_view, PoolMethod> kPools[] = {
    {"avg", PoolMethod::avg},   {"max", PoolMethod::max}, {"sum", PoolMethod::sum},
    {"attn", PoolMethod::attn}, {"tri", PoolMethod::tri}, {"rank", PoolMethod::rank}};

constexpr std::pair<std::string_view, Variant> kVariants[] = {
    {"baseline", Variant::baseline}, {"tp_only", Variant::tp_only},
    {"mp_only", Variant::mp_only},   {"mp_tp", Variant::mp_tp},
    {"tp_mp", Variant::tp_mp},       {"two_branch", Variant::two_branch}};

Tensor gaussian(const Shape& shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  Tensor t(shape);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

// Flat row of the index tuple `edge` in a (J^m, width) tensor.
std::size_t tuple_row(const HyperEdge& edge, std::size_t joints) {
  std::size_t row = 0;
  for (std::size_t v : edge) row = row * joints + v;
  return row;
}

ad::Var as_row(ad::Var v) { return ad::reshape(v, {1, v.size()}); }

ad::Var classify(Binding& bind, ad::Var features) {
  ad::Var logits = affine(bind, "cls", as_row(features));
  return ad::reshape(logits, {logits.size()});
}

}  // namespace

PoolMethod parse_pool_method(std::string_view name) {
  for (const auto& [key, value] : kPools) {
    if (key == name) return value;
  }
  throw std::invalid_argument("unknown pooling method '" + std::string(name) +
                              "' (expected avg, max, sum, attn, tri or rank)");
}

Variant parse_variant(std::string_view name) {
  for (const auto& [key, value] : kVariants) {
    if (key == name) return value;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected baseline, tp_only, mp_only, mp_tp, tp_mp or "
                              "two_branch)");
}

std::string to_string(PoolMethod method) {
  for (const auto& [key, value] : kPools) {
    if (value == method) return std::string(key);
  }
  return "?";
}

std::string to_string(Variant variant) {
  for (const auto& [key, value] : kVariants) {
    if (value == variant) return std::string(key);
  }
  return "?";
}

MultiOrderLayout MultiOrderLayout::make(std::size_t joints, std::vector<std::size_t> orders) {
  if (orders.empty()) throw std::invalid_argument("layout needs at least one order");
  for (std::size_t k = 0; k < orders.size(); ++k) {
    if (orders[k] < 1 || orders[k] > joints || (k > 0 && orders[k] <= orders[k - 1])) {
      throw std::invalid_argument("orders must be strictly increasing within 1..J = " +
                                  std::to_string(joints));
    }
  }
  MultiOrderLayout layout;
  layout.joints = joints;
  layout.orders = std::move(orders);
  for (std::size_t m : layout.orders) {
    layout.offsets.push_back(layout.total);
    layout.edges.push_back(enumerate_hyperedges(joints, m));
    layout.total += layout.edges.back().edges.size();
  }
  return layout;
}

MultiOrderLayout MultiOrderLayout::full(std::size_t joints, std::size_t r) {
  std::vector<std::size_t> orders;
  for (std::size_t m = 1; m <= r; ++m) orders.push_back(m);
  return make(joints, std::move(orders));
}

namespace {

struct AssemblyPlan {
  std::size_t d = 0, tau = 0;
};

AssemblyPlan check_assembly(const std::vector<std::vector<Shape>>& shapes,
                            const MultiOrderLayout& layout) {
  if (shapes.size() != layout.r()) {
    throw std::invalid_argument("assemble_multi_order: expected " + std::to_string(layout.r()) +
                                " orders, got " + std::to_string(shapes.size()));
  }
  AssemblyPlan plan;
  plan.tau = shapes[0].size();
  if (plan.tau == 0) throw std::invalid_argument("assemble_multi_order: no blocks");
  plan.d = shapes[0][0].size() == 2 ? shapes[0][0][1] : 0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (shapes[k].size() != plan.tau) {
      throw std::invalid_argument("assemble_multi_order: every order needs the same block count");
    }
    const std::size_t rows = int_pow(layout.joints, layout.orders[k]);
    for (const Shape& s : shapes[k]) {
      if (s != Shape{rows, plan.d}) {
        throw std::invalid_argument("assemble_multi_order: order " +
                                    std::to_string(layout.orders[k]) + " block has shape " +
                                    shape_str(s) + ", expected " +
                                    shape_str({rows, plan.d}));
      }
    }
  }
  return plan;
}

void gather(const double* phi, std::size_t d, std::size_t tau, std::size_t t, std::size_t n,
            std::size_t offset, const HyperEdgeIndex& index, double* out) {
  for (std::size_t e = 0; e < index.edges.size(); ++e) {
    const double* row = phi + tuple_row(index.edges[e], index.joints) * d;
    for (std::size_t c = 0; c < d; ++c) out[(c * n + offset + e) * tau + t] = row[c];
  }
}

}  // namespace

Tensor assemble_multi_order(const std::vector<std::vector<Tensor>>& phi,
                            const MultiOrderLayout& layout) {
  std::vector<std::vector<Shape>> shapes;
  for (const auto& order : phi) {
    shapes.emplace_back();
    for (const Tensor& t : order) shapes.back().push_back(t.shape());
  }
  const AssemblyPlan plan = check_assembly(shapes, layout);
  Tensor out({plan.d, layout.total, plan.tau});
  for (std::size_t k = 0; k < layout.r(); ++k) {
    for (std::size_t t = 0; t < plan.tau; ++t) {
      gather(phi[k][t].raw(), plan.d, plan.tau, t, layout.total, layout.offsets[k],
             layout.edges[k], out.raw());
    }
  }
  return out;
}

ad::Var assemble_multi_order(const std::vector<std::vector<ad::Var>>& phi,
                             const MultiOrderLayout& layout) {
  std::vector<std::vector<Shape>> shapes;
  std::vector<ad::Var> inputs;
  for (const auto& order : phi) {
    shapes.emplace_back();
    for (const ad::Var& v : order) {
      shapes.back().push_back(v.shape());
      inputs.push_back(v);
    }
  }
  const AssemblyPlan plan = check_assembly(shapes, layout);
  Tensor out({plan.d, layout.total, plan.tau});
  for (std::size_t k = 0; k < layout.r(); ++k) {
    for (std::size_t t = 0; t < plan.tau; ++t) {
      gather(phi[k][t].value().raw(), plan.d, plan.tau, t, layout.total, layout.offsets[k],
             layout.edges[k], out.raw());
    }
  }
  std::vector<std::vector<std::size_t>> rows(layout.r());
  for (std::size_t k = 0; k < layout.r(); ++k) {
    for (const HyperEdge& e : layout.edges[k].edges) rows[k].push_back(tuple_row(e, layout.joints));
  }
  ad::Tape& tape = *inputs[0].tape();
  return tape.record(std::move(out), inputs,
                     [inputs, plan, rows = std::move(rows), offsets = layout.offsets,
                      n = layout.total](ad::Tape& tp, ad::NodeId self) {
    const Tensor& g = tp.grad_of(self);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t t = 0; t < plan.tau; ++t) {
        const ad::Var& in = inputs[k * plan.tau + t];
        if (!tp.requires_grad(in.id())) continue;
        Tensor& gi = tp.grad_buffer(in.id());
        for (std::size_t e = 0; e < rows[k].size(); ++e) {
          double* row = gi.raw() + rows[k][e] * plan.d;
          for (std::size_t c = 0; c < plan.d; ++c) {
            row[c] += g[(c * n + offsets[k] + e) * plan.tau + t];
          }
        }
      }
    }
  });
}

AttentionResult coupled_mode_attention(ad::Var m, ad::Var wq, ad::Var wk, ad::Var wv) {
  if (m.value().rank() != 2) throw std::invalid_argument("coupled_mode_attention: M must be a matrix");
  const std::size_t rows = m.dim(0), width = m.dim(1);
  for (const ad::Var* w : {&wq, &wk, &wv}) {
    if (w->shape() != Shape{rows, rows}) {
      throw std::invalid_argument("coupled_mode_attention: weights must be " +
                                  shape_str({rows, rows}) + " for M of shape " +
                                  shape_str(m.shape()) + ", got " + shape_str(w->shape()));
    }
  }
  ad::Var q = ad::matmul(wq, m), k = ad::matmul(wk, m), v = ad::matmul(wv, m);
  ad::Var logits = ad::scale(ad::matmul(q, k, Trans::no, Trans::yes),
                             1.0 / std::sqrt(static_cast<double>(width)));
  ad::Var a = ad::softmax_rows(logits);
  return {ad::matmul(a, v), a};
}

void init_coupled_attention(ParamSet& params, const std::string& prefix, std::size_t tokens,
                            std::mt19937_64& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(tokens));
  params.add(prefix + ".wq", gaussian({tokens, tokens}, sd, rng));
  params.add(prefix + ".wk", gaussian({tokens, tokens}, sd, rng));
  Tensor wv = gaussian({tokens, tokens}, 0.01, rng);
  for (std::size_t i = 0; i < tokens; ++i) wv[i * tokens + i] += 1.0;
  params.add(prefix + ".wv", std::move(wv));
}

namespace {

AttentionResult bound_attention(Binding& bind, const std::string& prefix, ad::Var x) {
  return coupled_mode_attention(x, bind(prefix + ".wq"), bind(prefix + ".wk"),
                                bind(prefix + ".wv"));
}

}  // namespace

Tensor incidence_pooling_init(const HyperEdgeIndex& index) {
  const std::size_t J = index.joints, E = index.edges.size();
  const double w = 1.0 / static_cast<double>(binomial(J - 1, index.order - 1));
  Tensor h({E, J}, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t v : index.edges[e]) h[e * J + v] = w;
  }
  return h;
}

void init_mp(ParamSet& params, const std::string& prefix, std::size_t d2,
             const MultiOrderLayout& layout, std::mt19937_64& rng) {
  init_coupled_attention(params, prefix, d2, rng);
  for (std::size_t k = 0; k < layout.r(); ++k) {
    params.add(prefix + ".h" + std::to_string(layout.orders[k]),
               incidence_pooling_init(layout.edges[k]));
  }
}

ad::Var mp_forward(Binding& bind, const std::string& prefix, const MultiOrderLayout& layout,
                   ad::Var x, AttentionTrace* trace, const std::string& token) {
  if (x.value().rank() != 2 || x.dim(1) != layout.total) {
    throw std::invalid_argument("mp_forward: input " + shape_str(x.shape()) + " needs " +
                                std::to_string(layout.total) + " edge columns");
  }
  AttentionResult att = bound_attention(bind, prefix, x);
  if (trace != nullptr) (*trace)[token] = att.weights.value();
  std::vector<ad::Var> parts;
  for (std::size_t k = 0; k < layout.r(); ++k) {
    ad::Var span = ad::slice(att.out, 1, layout.offsets[k], layout.edges[k].edges.size());
    parts.push_back(ad::matmul(span, bind(prefix + ".h" + std::to_string(layout.orders[k]))));
  }
  return ad::concat(parts, 0);
}

void init_tp(ParamSet& params, const std::string& prefix, std::size_t d3, PoolMethod method,
             std::mt19937_64& rng) {
  init_coupled_attention(params, prefix, d3, rng);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d3));
  if (method == PoolMethod::attn) params.add(prefix + ".pool_w", gaussian({d3}, sd, rng));
  if (method == PoolMethod::tri) {
    params.add(prefix + ".pool_u", gaussian({d3}, sd, rng));
    params.add(prefix + ".pool_v", gaussian({d3}, sd, rng));
  }
}

ad::Var tp_attention(Binding& bind, const std::string& prefix, ad::Var x, AttentionTrace* trace,
                     const std::string& token) {
  AttentionResult att = bound_attention(bind, prefix, x);
  if (trace != nullptr) (*trace)[token] = att.weights.value();
  return att.out;
}

std::vector<double> rank_pool_coefficients(std::size_t tau) {
  std::vector<double> harmonic(tau + 1, 0.0);
  for (std::size_t k = 1; k <= tau; ++k) harmonic[k] = harmonic[k - 1] + 1.0 / static_cast<double>(k);
  std::vector<double> rho(tau);
  const double n = static_cast<double>(tau);
  for (std::size_t t = 1; t <= tau; ++t) {
    rho[t - 1] = 2.0 * (n - static_cast<double>(t) + 1.0) -
                 (n + 1.0) * (harmonic[tau] - harmonic[t - 1]);
  }
  return rho;
}

ad::Var temporal_pool(Binding& bind, const std::string& prefix, PoolMethod method, ad::Var o) {
  if (o.value().rank() != 2 || o.dim(1) < 1) {
    throw std::invalid_argument("temporal_pool: expects (width, tau) with tau >= 1");
  }
  const std::size_t width = o.dim(0), tau = o.dim(1);
  auto weighted = [&](ad::Var coef) {  // coef: (1, tau)
    return ad::reshape(ad::matmul(o, coef, Trans::no, Trans::yes), {width});
  };
  switch (method) {
    case PoolMethod::avg:
      return ad::reduce(o, 1, ReduceOp::mean);
    case PoolMethod::max:
      return ad::reduce(o, 1, ReduceOp::max);
    case PoolMethod::sum:
      return ad::reduce(o, 1, ReduceOp::sum);
    case PoolMethod::attn: {
      ad::Var w = as_row(bind(prefix + ".pool_w"));
      return weighted(ad::softmax_rows(ad::matmul(w, ad::normalize_columns(o))));
    }
    case PoolMethod::tri: {
      ad::Var s = ad::softmax_rows(ad::matmul(as_row(bind(prefix + ".pool_v")), o));
      ad::Var g = ad::matmul(as_row(bind(prefix + ".pool_u")), o);
      return weighted(ad::mul(s, g));
    }
    case PoolMethod::rank: {
      const std::vector<double> rho = rank_pool_coefficients(tau);
      return weighted(bind.tape().constant(Tensor({1, tau}, rho)));
    }
  }
  throw std::invalid_argument("temporal_pool: unknown method");
}

ad::Var restack_mp_output(ad::Var o, std::size_t r, std::size_t d_prime, std::size_t tau,
                          std::size_t joints) {
  if (o.shape() != Shape{r * d_prime * tau, joints}) {
    throw std::invalid_argument("restack_mp_output: got " + shape_str(o.shape()) + ", expected " +
                                shape_str({r * d_prime * tau, joints}));
  }
  ad::Var t = ad::permute(ad::reshape(o, {r, d_prime, tau, joints}), {0, 1, 3, 2});
  return ad::reshape(t, {r * d_prime * joints, tau});
}

std::size_t HeadSpec::classifier_width() const {
  switch (variant) {
    case Variant::baseline:
      return layout.r() * d_prime;
    case Variant::two_branch:
      return 2 * branch_width();
    default:
      return branch_width();
  }
}

void init_head(ParamSet& params, const HeadSpec& spec, std::mt19937_64& rng) {
  if (spec.layout.joints == 0 || spec.tau < 1 || spec.d_prime < 1 || spec.num_classes < 2) {
    throw std::invalid_argument("head needs a layout, tau >= 1, d' >= 1 and >= 2 classes");
  }
  const std::size_t dp = spec.d_prime, n = spec.layout.total, w = spec.branch_width();
  const bool mp_tp = spec.variant == Variant::mp_tp || spec.variant == Variant::two_branch;
  const bool tp_mp = spec.variant == Variant::tp_mp || spec.variant == Variant::two_branch;
  if (mp_tp) {
    init_mp(params, "mp_tp.mp", dp * spec.tau, spec.layout, rng);
    init_tp(params, "mp_tp.tp", w, spec.pool, rng);
  }
  if (tp_mp) {
    init_tp(params, "tp_mp.tp", dp * n, spec.pool, rng);
    init_mp(params, "tp_mp.mp", dp, spec.layout, rng);
  }
  if (spec.variant == Variant::tp_only) {
    init_tp(params, "tp_only.tp", dp * n, spec.pool, rng);
    init_affine(params, "tp_only.fc", dp * n, w, rng);
  }
  if (spec.variant == Variant::mp_only) init_mp(params, "mp_only.mp", dp * spec.tau, spec.layout, rng);
  init_affine(params, "cls", spec.classifier_width(), spec.num_classes, rng);
}

namespace {

void check_m(const HeadSpec& spec, ad::Var m) {
  if (m.shape() != Shape{spec.d_prime, spec.layout.total, spec.tau}) {
    throw std::invalid_argument("multi-order tensor has shape " + shape_str(m.shape()) +
                                ", expected " +
                                shape_str({spec.d_prime, spec.layout.total, spec.tau}));
  }
}

// (d', N, tau) -> (d' tau, N), rows (channel, block).
ad::Var channel_block_tokens(const HeadSpec& spec, ad::Var m) {
  return ad::reshape(ad::permute(m, {0, 2, 1}), {spec.d_prime * spec.tau, spec.layout.total});
}

// (d', N, tau) -> (d' N, tau), rows (channel, edge).
ad::Var channel_edge_tokens(const HeadSpec& spec, ad::Var m) {
  return ad::reshape(m, {spec.d_prime * spec.layout.total, spec.tau});
}

ad::Var mp_restacked(Binding& bind, const HeadSpec& spec, const std::string& prefix, ad::Var m,
                     AttentionTrace* trace) {
  ad::Var o = mp_forward(bind, prefix, spec.layout, channel_block_tokens(spec, m), trace,
                         "channel_block");
  return restack_mp_output(o, spec.layout.r(), spec.d_prime, spec.tau, spec.layout.joints);
}

ad::Var tp_pooled(Binding& bind, const HeadSpec& spec, const std::string& prefix, ad::Var m,
                  AttentionTrace* trace) {
  ad::Var o = tp_attention(bind, prefix, channel_edge_tokens(spec, m), trace, "channel_edge");
  return temporal_pool(bind, prefix, spec.pool, o);
}

}  // namespace

ad::Var branch_mp_tp(Binding& bind, const HeadSpec& spec, ad::Var m, AttentionTrace* trace) {
  check_m(spec, m);
  ad::Var tokens = mp_restacked(bind, spec, "mp_tp.mp", m, trace);
  ad::Var o = tp_attention(bind, "mp_tp.tp", tokens, trace, "order_channel_joint");
  return temporal_pool(bind, "mp_tp.tp", spec.pool, o);
}

ad::Var branch_tp_mp(Binding& bind, const HeadSpec& spec, ad::Var m, AttentionTrace* trace) {
  check_m(spec, m);
  ad::Var pooled = tp_pooled(bind, spec, "tp_mp.tp", m, trace);
  ad::Var tokens = ad::reshape(pooled, {spec.d_prime, spec.layout.total});
  ad::Var o = mp_forward(bind, "tp_mp.mp", spec.layout, tokens, trace, "channel_only");
  return ad::reshape(o, {o.size()});
}

ad::Var head_features(Binding& bind, const HeadSpec& spec, ad::Var m, AttentionTrace* trace) {
  check_m(spec, m);
  switch (spec.variant) {
    case Variant::baseline: {
      std::vector<ad::Var> parts;
      for (std::size_t k = 0; k < spec.layout.r(); ++k) {
        ad::Var span = ad::slice(m, 1, spec.layout.offsets[k], spec.layout.edges[k].edges.size());
        ad::Var flat = ad::reshape(span, {spec.d_prime, span.size() / spec.d_prime});
        parts.push_back(ad::reduce(flat, 1, ReduceOp::mean));
      }
      return ad::concat(parts, 0);
    }
    case Variant::tp_only: {
      ad::Var pooled = tp_pooled(bind, spec, "tp_only.tp", m, trace);
      ad::Var fc = affine(bind, "tp_only.fc", as_row(pooled));
      return ad::reshape(fc, {fc.size()});
    }
    case Variant::mp_only:
      return ad::reduce(mp_restacked(bind, spec, "mp_only.mp", m, trace), 1, ReduceOp::mean);
    case Variant::mp_tp:
      return branch_mp_tp(bind, spec, m, trace);
    case Variant::tp_mp:
      return branch_tp_mp(bind, spec, m, trace);
    case Variant::two_branch: {
      ad::Var parts[2] = {branch_mp_tp(bind, spec, m, trace), branch_tp_mp(bind, spec, m, trace)};
      return ad::concat(parts, 0);
    }
  }
  throw std::invalid_argument("head_features: unknown variant");
}

ad::Var head_forward(Binding& bind, const HeadSpec& spec, ad::Var m, AttentionTrace* trace) {
  return classify(bind, head_features(bind, spec, m, trace));
}

}  // namespace mmf
