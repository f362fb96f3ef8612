#include "mmformer/hot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "mmformer/kernels.hpp"
#include "mmformer/ops.hpp"

namespace mmf {

namespace {

struct Layout {
  const PartitionIndex* index;
  std::size_t groups, dq, dv;
};

Layout check_layout(const Tensor& q, const Tensor& k, const Tensor& v,
                    const ClassAttentionShape& shape) {
  const PartitionIndex& index = PartitionIndex::get(shape.joints, shape.m, shape.n);
  const std::size_t groups = index.count() * shape.heads;
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(0) != index.out_size() ||
      k.dim(0) != index.in_size() || v.dim(0) != index.in_size() || q.dim(1) != k.dim(1) ||
      q.dim(1) % groups != 0 || v.dim(1) % groups != 0) {
    throw std::invalid_argument("class attention: shapes " + shape_str(q.shape()) + ", " +
                                shape_str(k.shape()) + ", " + shape_str(v.shape()) +
                                " do not fit J=" + std::to_string(shape.joints) + " (m,n)=(" +
                                std::to_string(shape.m) + "," + std::to_string(shape.n) +
                                ") with " + std::to_string(groups) + " class-head groups");
  }
  if (!shape.active.empty() && shape.active.size() != index.count()) {
    throw std::invalid_argument("class attention: active mask must have one entry per class");
  }
  return {&index, groups, q.dim(1) / groups, v.dim(1) / groups};
}

bool is_active(const ClassAttentionShape& shape, std::size_t cls) {
  return shape.active.empty() || shape.active[cls];
}

double dot_n(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) s += a[c] * b[c];
  return s;
}

// Exact pairs above this count are refused; the kernel path handles large J.
constexpr std::size_t kExactPairLimit = 50'000'000;

}  // namespace

ad::Var performer_features(ad::Var x, ad::Var omega) {
  const Tensor& xv = x.value();
  const Tensor& w = omega.value();
  if (xv.rank() != 2 || w.rank() != 2 || w.dim(1) == 0 || xv.dim(1) % w.dim(1) != 0) {
    throw std::invalid_argument("performer_features: x " + shape_str(xv.shape()) +
                                " is not a whole number of omega " + shape_str(w.shape()) +
                                " groups");
  }
  const std::size_t dk = w.dim(0), dh = w.dim(1), rows = xv.dim(0), groups = xv.dim(1) / dh;
  const double norm = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor out({rows, groups * dk});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double* xs = xv.raw() + (r * groups + g) * dh;
      const double half_sq = 0.5 * dot_n(xs, xs, dh);
      double* dst = out.raw() + (r * groups + g) * dk;
      for (std::size_t a = 0; a < dk; ++a) {
        dst[a] = norm * std::exp(dot_n(w.raw() + a * dh, xs, dh) - half_sq);
      }
    }
  }
  return x.tape()->record(std::move(out), {x, omega}, [x, omega, dk, dh, rows, groups](
                                                          ad::Tape& t, ad::NodeId self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& psi = t.value(self);
    const Tensor& xv = x.value();
    const Tensor& w = omega.value();
    const bool want_x = t.requires_grad(x.id());
    const bool want_w = t.requires_grad(omega.id());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t gr = 0; gr < groups; ++gr) {
        const std::size_t xo = (r * groups + gr) * dh, po = (r * groups + gr) * dk;
        const double* xs = xv.raw() + xo;
        for (std::size_t a = 0; a < dk; ++a) {
          // d psi_a / dx = psi_a (omega_a - x)
          const double s = g[po + a] * psi[po + a];
          if (s == 0.0) continue;
          if (want_x) {
            double* gx = t.grad_buffer(x.id()).raw() + xo;
            for (std::size_t c = 0; c < dh; ++c) gx[c] += s * (w[a * dh + c] - xs[c]);
          }
          if (want_w) {
            double* gw = t.grad_buffer(omega.id()).raw() + a * dh;
            for (std::size_t c = 0; c < dh; ++c) gw[c] += s * xs[c];
          }
        }
      }
    }
  });
}

ad::Var class_attention_exact(ad::Var q, ad::Var k, ad::Var v, const ClassAttentionShape& shape) {
  const Layout lay = check_layout(q.value(), k.value(), v.value(), shape);
  const PartitionIndex& index = *lay.index;
  const std::size_t heads = shape.heads, dq = lay.dq, dv = lay.dv;
  const std::size_t qw = q.dim(1), vw = v.dim(1);

  std::size_t pairs = 0;
  for (std::size_t c = 0; c < index.count(); ++c) {
    if (!is_active(shape, c)) continue;
    const auto& sig = index.input(c);
    for (std::uint32_t key : index.out_keys(c)) {
      pairs += sig.group_offsets[key + 1] - sig.group_offsets[key];
    }
  }
  if (pairs * heads > kExactPairLimit) {
    throw std::runtime_error("class attention: exact mode needs " + std::to_string(pairs * heads) +
                             " coefficients; use performer mode at this J");
  }

  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  auto alpha = std::make_shared<std::vector<double>>();
  alpha->reserve(pairs * heads);
  Tensor out({index.out_size(), dv}, 0.0);
  std::vector<double> logits;
  for (std::size_t c = 0; c < index.count(); ++c) {
    if (!is_active(shape, c)) continue;
    const auto& sig = index.input(c);
    const auto rows = index.out_rows(c);
    const auto keys = index.out_keys(c);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t g = c * heads + h;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t j = rows[r];
        const std::uint32_t begin = sig.group_offsets[keys[r]], end = sig.group_offsets[keys[r] + 1];
        if (begin == end) continue;
        const double* qj = qv.raw() + j * qw + g * dq;
        logits.resize(end - begin);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::uint32_t a = begin; a < end; ++a) {
          const std::size_t i = sig.group_items[a];
          logits[a - begin] = dot_n(qj, kv.raw() + i * qw + g * dq, dq);
          mx = std::max(mx, logits[a - begin]);
        }
        double total = 0.0;
        for (double& l : logits) {
          l = std::exp(l - mx);
          total += l;
        }
        double* oj = out.raw() + j * dv;
        for (std::uint32_t a = begin; a < end; ++a) {
          const double w = logits[a - begin] / total;
          alpha->push_back(w);
          const double* vi = vv.raw() + static_cast<std::size_t>(sig.group_items[a]) * vw + g * dv;
          for (std::size_t e = 0; e < dv; ++e) oj[e] += w * vi[e];
        }
      }
    }
  }

  return q.tape()->record(std::move(out), {q, k, v}, [q, k, v, shape, alpha, &index, heads, dq,
                                                       dv, qw, vw](ad::Tape& t, ad::NodeId self) {
    const Tensor& gout = t.grad_of(self);
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    const bool want_q = t.requires_grad(q.id());
    const bool want_k = t.requires_grad(k.id());
    const bool want_v = t.requires_grad(v.id());
    double* gq = want_q ? t.grad_buffer(q.id()).raw() : nullptr;
    double* gk = want_k ? t.grad_buffer(k.id()).raw() : nullptr;
    double* gv = want_v ? t.grad_buffer(v.id()).raw() : nullptr;
    std::vector<double> dalpha;
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < index.count(); ++c) {
      if (!is_active(shape, c)) continue;
      const auto& sig = index.input(c);
      const auto rows = index.out_rows(c);
      const auto keys = index.out_keys(c);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t g = c * heads + h;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const std::size_t j = rows[r];
          const std::uint32_t begin = sig.group_offsets[keys[r]];
          const std::uint32_t end = sig.group_offsets[keys[r] + 1];
          if (begin == end) continue;
          const double* a = alpha->data() + cursor;
          cursor += end - begin;
          const double* go = gout.raw() + j * dv;
          dalpha.resize(end - begin);
          double weighted = 0.0;
          for (std::uint32_t p = begin; p < end; ++p) {
            const std::size_t i = sig.group_items[p];
            const double w = a[p - begin];
            dalpha[p - begin] = dot_n(go, vv.raw() + i * vw + g * dv, dv);
            weighted += w * dalpha[p - begin];
            if (want_v) {
              double* dst = gv + i * vw + g * dv;
              for (std::size_t e = 0; e < dv; ++e) dst[e] += w * go[e];
            }
          }
          if (!want_q && !want_k) continue;
          const double* qj = qv.raw() + j * qw + g * dq;
          for (std::uint32_t p = begin; p < end; ++p) {
            const std::size_t i = sig.group_items[p];
            const double dl = a[p - begin] * (dalpha[p - begin] - weighted);
            if (dl == 0.0) continue;
            if (want_q) {
              const double* ki = kv.raw() + i * qw + g * dq;
              double* dst = gq + j * qw + g * dq;
              for (std::size_t e = 0; e < dq; ++e) dst[e] += dl * ki[e];
            }
            if (want_k) {
              double* dst = gk + i * qw + g * dq;
              for (std::size_t e = 0; e < dq; ++e) dst[e] += dl * qj[e];
            }
          }
        }
      }
    }
  });
}

namespace {

// Per key sums S[key] = sum_i phi_k(i) v(i)^T (d_K x d_v) and z[key] = sum_i phi_k(i).
void key_summaries(const PartitionIndex::InputSignature& sig, const Tensor& pk, const Tensor& v,
                   std::size_t g, std::size_t dk, std::size_t dv, std::vector<double>& s,
                   std::vector<double>& z) {
  s.assign(sig.key_count * dk * dv, 0.0);
  z.assign(sig.key_count * dk, 0.0);
  const std::size_t kw = pk.dim(1), vw = v.dim(1);
  for (std::size_t i = 0; i < sig.in_key.size(); ++i) {
    const std::int32_t key = sig.in_key[i];
    if (key < 0) continue;
    const double* phi = pk.raw() + i * kw + g * dk;
    const double* vi = v.raw() + i * vw + g * dv;
    double* sk = s.data() + static_cast<std::size_t>(key) * dk * dv;
    double* zk = z.data() + static_cast<std::size_t>(key) * dk;
    for (std::size_t a = 0; a < dk; ++a) {
      zk[a] += phi[a];
      for (std::size_t e = 0; e < dv; ++e) sk[a * dv + e] += phi[a] * vi[e];
    }
  }
}

}  // namespace

ad::Var class_attention_linear(ad::Var phi_q, ad::Var phi_k, ad::Var v,
                               const ClassAttentionShape& shape) {
  const Layout lay = check_layout(phi_q.value(), phi_k.value(), v.value(), shape);
  const PartitionIndex& index = *lay.index;
  const std::size_t heads = shape.heads, dk = lay.dq, dv = lay.dv, qw = phi_q.dim(1);
  const Tensor& pq = phi_q.value();
  Tensor out({index.out_size(), dv}, 0.0);
  std::vector<double> s, z, num(dv);
  for (std::size_t c = 0; c < index.count(); ++c) {
    if (!is_active(shape, c)) continue;
    const auto rows = index.out_rows(c);
    const auto keys = index.out_keys(c);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t g = c * heads + h;
      key_summaries(index.input(c), phi_k.value(), v.value(), g, dk, dv, s, z);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* phi = pq.raw() + static_cast<std::size_t>(rows[r]) * qw + g * dk;
        const double* sk = s.data() + static_cast<std::size_t>(keys[r]) * dk * dv;
        const double den = dot_n(phi, z.data() + static_cast<std::size_t>(keys[r]) * dk, dk);
        std::fill(num.begin(), num.end(), 0.0);
        for (std::size_t a = 0; a < dk; ++a) {
          for (std::size_t e = 0; e < dv; ++e) num[e] += phi[a] * sk[a * dv + e];
        }
        double* oj = out.raw() + static_cast<std::size_t>(rows[r]) * dv;
        for (std::size_t e = 0; e < dv; ++e) oj[e] += num[e] / den;
      }
    }
  }

  return phi_q.tape()->record(std::move(out), {phi_q, phi_k, v}, [phi_q, phi_k, v, shape, &index,
                                                                   heads, dk, dv, qw](
                                                                      ad::Tape& t,
                                                                      ad::NodeId self) {
    const Tensor& gout = t.grad_of(self);
    const Tensor& pq = phi_q.value();
    const Tensor& pk = phi_k.value();
    const Tensor& vv = v.value();
    const std::size_t vw = vv.dim(1);
    const bool want_q = t.requires_grad(phi_q.id());
    const bool want_k = t.requires_grad(phi_k.id());
    const bool want_v = t.requires_grad(v.id());
    std::vector<double> s, z, ds, dz, num(dv);
    for (std::size_t c = 0; c < index.count(); ++c) {
      if (!is_active(shape, c)) continue;
      const auto& sig = index.input(c);
      const auto rows = index.out_rows(c);
      const auto keys = index.out_keys(c);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t g = c * heads + h;
        key_summaries(sig, pk, vv, g, dk, dv, s, z);
        ds.assign(s.size(), 0.0);
        dz.assign(z.size(), 0.0);
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const std::size_t j = rows[r], key = keys[r];
          const double* phi = pq.raw() + j * qw + g * dk;
          const double* sk = s.data() + key * dk * dv;
          const double* zk = z.data() + key * dk;
          const double den = dot_n(phi, zk, dk);
          std::fill(num.begin(), num.end(), 0.0);
          for (std::size_t a = 0; a < dk; ++a) {
            for (std::size_t e = 0; e < dv; ++e) num[e] += phi[a] * sk[a * dv + e];
          }
          const double* go = gout.raw() + j * dv;
          // out = num / den
          const double dden = -dot_n(go, num.data(), dv) / (den * den);
          double* dsk = ds.data() + key * dk * dv;
          double* dzk = dz.data() + key * dk;
          double* gq = want_q ? t.grad_buffer(phi_q.id()).raw() + j * qw + g * dk : nullptr;
          for (std::size_t a = 0; a < dk; ++a) {
            if (gq != nullptr) gq[a] += dot_n(sk + a * dv, go, dv) / den + zk[a] * dden;
            for (std::size_t e = 0; e < dv; ++e) dsk[a * dv + e] += phi[a] * go[e] / den;
            dzk[a] += phi[a] * dden;
          }
        }
        if (!want_k && !want_v) continue;
        for (std::size_t i = 0; i < sig.in_key.size(); ++i) {
          const std::int32_t key = sig.in_key[i];
          if (key < 0) continue;
          const double* dsk = ds.data() + static_cast<std::size_t>(key) * dk * dv;
          const double* dzk = dz.data() + static_cast<std::size_t>(key) * dk;
          const double* phi = pk.raw() + i * qw + g * dk;
          const double* vi = vv.raw() + i * vw + g * dv;
          if (want_k) {
            double* gk = t.grad_buffer(phi_k.id()).raw() + i * qw + g * dk;
            for (std::size_t a = 0; a < dk; ++a) gk[a] += dot_n(dsk + a * dv, vi, dv) + dzk[a];
          }
          if (want_v) {
            double* gv = t.grad_buffer(v.id()).raw() + i * vw + g * dv;
            for (std::size_t a = 0; a < dk; ++a) {
              for (std::size_t e = 0; e < dv; ++e) gv[e] += dsk[a * dv + e] * phi[a];
            }
          }
        }
      }
    }
  });
}

Tensor attention_coefficients(const Tensor& q, const Tensor& k, const ClassAttentionShape& shape,
                              std::size_t cls, std::size_t head) {
  const PartitionIndex& index = PartitionIndex::get(shape.joints, shape.m, shape.n);
  const std::size_t groups = index.count() * shape.heads;
  if (cls >= index.count() || head >= shape.heads || q.dim(1) % groups != 0) {
    throw std::invalid_argument("attention_coefficients: class/head out of range");
  }
  const std::size_t dq = q.dim(1) / groups, g = cls * shape.heads + head, qw = q.dim(1);
  Tensor alpha({index.in_size(), index.out_size()}, 0.0);
  const auto& sig = index.input(cls);
  const auto rows = index.out_rows(cls);
  const auto keys = index.out_keys(cls);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::uint32_t begin = sig.group_offsets[keys[r]], end = sig.group_offsets[keys[r] + 1];
    if (begin == end) continue;
    std::vector<double> w(end - begin);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::uint32_t a = begin; a < end; ++a) {
      w[a - begin] = dot_n(q.raw() + rows[r] * qw + g * dq,
                           k.raw() + static_cast<std::size_t>(sig.group_items[a]) * qw + g * dq, dq);
      mx = std::max(mx, w[a - begin]);
    }
    double total = 0.0;
    for (double& x : w) total += (x = std::exp(x - mx));
    for (std::uint32_t a = begin; a < end; ++a) {
      alpha[static_cast<std::size_t>(sig.group_items[a]) * index.out_size() + rows[r]] =
          w[a - begin] / total;
    }
  }
  return alpha;
}

bool HotLayerSpec::use_exact(std::size_t joints) const {
  switch (mode) {
    case AttentionMode::exact:
      return true;
    case AttentionMode::performer:
      return false;
    case AttentionMode::automatic:
      break;
  }
  return m == 1 || joints <= 8;
}

void init_hot_layer(ParamSet& params, const std::string& prefix, const HotLayerSpec& spec,
                    std::mt19937_64& rng) {
  const std::size_t groups = spec.classes() * spec.heads;
  init_equivariant_linear(params, prefix + ".q",
                          {spec.m, spec.n, spec.d, groups * spec.d_head, spec.agg, true}, rng);
  init_equivariant_linear(params, prefix + ".k",
                          {spec.m, spec.m, spec.d, groups * spec.d_head, spec.agg, true}, rng);
  std::normal_distribution<double> vdist(0.0, 1.0 / std::sqrt(static_cast<double>(spec.d)));
  std::normal_distribution<double> odist(
      0.0, 1.0 / std::sqrt(static_cast<double>(spec.d_head * groups)));
  Tensor wv({groups, spec.d, spec.d_head});
  for (double& x : wv.data()) x = vdist(rng);
  Tensor wo({groups, spec.d_head, spec.d});
  for (double& x : wo.data()) x = odist(rng);
  params.add(prefix + ".wv", std::move(wv));
  params.add(prefix + ".wo", std::move(wo));
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor omega({spec.d_k, spec.d_head});
  for (double& x : omega.data()) x = unit(rng);
  params.add(prefix + ".omega", std::move(omega), false);
  init_equivariant_linear(params, prefix + ".ff1", {spec.n, spec.n, spec.d, spec.d_ff, spec.agg, true},
                          rng);
  init_equivariant_linear(params, prefix + ".ff2", {spec.n, spec.n, spec.d_ff, spec.d, spec.agg, true},
                          rng);
}

ad::Var hot_attention(Binding& bind, const std::string& prefix, const HotLayerSpec& spec,
                      ad::Var x, std::size_t joints) {
  const std::size_t groups = spec.classes() * spec.heads;
  ad::Var q = apply_equivariant_linear(
      bind, prefix + ".q", {spec.m, spec.n, spec.d, groups * spec.d_head, spec.agg, true}, x,
      joints);
  ad::Var k = apply_equivariant_linear(
      bind, prefix + ".k", {spec.m, spec.m, spec.d, groups * spec.d_head, spec.agg, true}, x,
      joints);
  // W^V W^O per class and head, laid out as (d, groups * d) so one product gives every value.
  ad::Var wvo = ad::batched_matmul(bind(prefix + ".wv"), bind(prefix + ".wo"));
  wvo = ad::reshape(ad::permute(wvo, {1, 0, 2}), {spec.d, groups * spec.d});
  ad::Var v = ad::matmul(x, wvo);
  ClassAttentionShape shape{joints, spec.m, spec.n, spec.heads, spec.active_classes};
  if (spec.use_exact(joints)) return class_attention_exact(q, k, v, shape);
  ad::Var omega = bind(prefix + ".omega");
  return class_attention_linear(performer_features(q, omega), performer_features(k, omega), v,
                                shape);
}

ad::Var hot_layer(Binding& bind, const std::string& prefix, const HotLayerSpec& spec, ad::Var x,
                  std::size_t joints) {
  ad::Var a = hot_attention(bind, prefix, spec, x, joints);
  ad::Var h = ad::relu(apply_equivariant_linear(
      bind, prefix + ".ff1", {spec.n, spec.n, spec.d, spec.d_ff, spec.agg, true}, a, joints));
  ad::Var f = apply_equivariant_linear(bind, prefix + ".ff2",
                                       {spec.n, spec.n, spec.d_ff, spec.d, spec.agg, true}, h,
                                       joints);
  return ad::add(a, f);
}

Tensor dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0, 1)");
  Tensor mask(shape, 0.0);
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (double& x : mask.data()) x = keep(rng) ? s : 0.0;
  return mask;
}

void init_affine(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  Tensor w({in, out});
  for (double& x : w.data()) x = dist(rng);
  params.add(prefix + ".w", std::move(w));
  params.add(prefix + ".b", Tensor({out}, 0.0));
}

ad::Var affine(Binding& bind, const std::string& prefix, ad::Var x) {
  return ad::add_bias(ad::matmul(x, bind(prefix + ".w")), bind(prefix + ".b"));
}

void init_mlp_unit(ParamSet& params, const std::string& prefix, const MlpUnitSpec& spec,
                   std::mt19937_64& rng) {
  init_affine(params, prefix + ".l1", spec.in, 2 * spec.in, rng);
  init_affine(params, prefix + ".l2", 2 * spec.in, 3 * spec.in, rng);
  init_affine(params, prefix + ".l3", 3 * spec.in, spec.d, rng);
}

ad::Var mlp_unit(Binding& bind, const std::string& prefix, const MlpUnitSpec& spec, ad::Var x,
                 const DropoutSource& dropout) {
  if (x.value().rank() != 2 || x.dim(1) != spec.in) {
    throw std::invalid_argument("mlp_unit: expected (rows, " + std::to_string(spec.in) +
                                ") input, got " + shape_str(x.shape()));
  }
  ad::Var h = ad::relu(affine(bind, prefix + ".l1", x));
  h = ad::relu(affine(bind, prefix + ".l2", h));
  if (dropout.rng != nullptr && dropout.rate > 0.0) {
    h = ad::dropout(h, dropout_mask(h.shape(), dropout.rate, *dropout.rng));
  }
  return affine(bind, prefix + ".l3", h);
}

HotLayerSpec HotBranchSpec::layer(std::size_t index) const {
  HotLayerSpec s;
  s.m = index == 0 ? 1 : m;
  s.n = m;
  s.d = d;
  s.heads = heads;
  s.d_head = d_head;
  s.d_ff = d_ff;
  s.d_k = d_k;
  s.mode = mode;
  return s;
}

void init_hot_branch(ParamSet& params, const std::string& prefix, const HotBranchSpec& spec,
                     std::mt19937_64& rng) {
  if (spec.depth < 1) throw std::invalid_argument("hot branch depth must be at least 1");
  for (std::size_t l = 0; l < spec.depth; ++l) {
    init_hot_layer(params, prefix + ".layer" + std::to_string(l), spec.layer(l), rng);
  }
  if (spec.d_out != spec.d) init_affine(params, prefix + ".proj", spec.d, spec.d_out, rng);
}

ad::Var hot_branch_block(Binding& bind, const std::string& prefix, const HotBranchSpec& spec,
                         ad::Var block, std::size_t joints) {
  ad::Var x = block;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    x = hot_layer(bind, prefix + ".layer" + std::to_string(l), spec.layer(l), x, joints);
  }
  if (spec.d_out != spec.d) x = affine(bind, prefix + ".proj", x);
  return x;
}

std::vector<ad::Var> hot_branch(Binding& bind, const std::string& prefix,
                                const HotBranchSpec& spec, ad::Var blocks, std::size_t joints) {
  if (blocks.value().rank() != 2 || blocks.dim(0) % joints != 0) {
    throw std::invalid_argument("hot_branch: blocks must be (tau * J, d)");
  }
  const std::size_t tau = blocks.dim(0) / joints;
  std::vector<ad::Var> out;
  out.reserve(tau);
  for (std::size_t t = 0; t < tau; ++t) {
    ad::Var block = tau == 1 ? blocks : ad::slice(blocks, 0, t * joints, joints);
    out.push_back(hot_branch_block(bind, prefix, spec, block, joints));
  }
  return out;
}

}  // namespace mmf
