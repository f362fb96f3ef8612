#include "mmformer/equivariant.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "mmformer/kernels.hpp"

namespace mmf {

using kernels::Trans;

namespace {

void require_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape() != want) {
    throw std::invalid_argument(std::string("equivariant_linear: ") + what + " has shape " +
                                shape_str(t.shape()) + ", expected " + shape_str(want));
  }
}

}  // namespace

ad::Var equivariant_linear(ad::Var x, ad::Var coeffs, ad::Var bias, std::size_t joints,
                           std::size_t m, std::size_t n, Aggregation agg) {
  const PartitionIndex& index = PartitionIndex::get(joints, m, n);
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("equivariant_linear: x must be (J^m, d_in)");
  const std::size_t d_in = xv.dim(1);
  const std::size_t d_out = coeffs.value().rank() == 3 ? coeffs.dim(2) : 0;
  require_shape(xv, {index.in_size(), d_in}, "x");
  require_shape(coeffs.value(), {index.count(), d_in, d_out}, "coeffs");
  const bool has_bias = bias.valid();
  if (has_bias) require_shape(bias.value(), {index.bias_count(), d_out}, "bias");

  // Contract each input signature once; partitions sharing it reuse the result.
  auto reduced = std::make_shared<std::vector<Tensor>>();
  reduced->reserve(index.signature_count());
  for (std::size_t s = 0; s < index.signature_count(); ++s) {
    const auto& sig = index.signature(s);
    Tensor r({sig.key_count, d_in}, 0.0);
    const double w = agg == Aggregation::mean ? 1.0 / static_cast<double>(sig.multiplicity) : 1.0;
    for (std::size_t key = 0; key < sig.key_count; ++key) {
      double* dst = r.raw() + key * d_in;
      for (std::uint32_t a = sig.group_offsets[key]; a < sig.group_offsets[key + 1]; ++a) {
        const double* src = xv.raw() + static_cast<std::size_t>(sig.group_items[a]) * d_in;
        for (std::size_t c = 0; c < d_in; ++c) dst[c] += src[c];
      }
      if (w != 1.0) {
        for (std::size_t c = 0; c < d_in; ++c) dst[c] *= w;
      }
    }
    reduced->push_back(std::move(r));
  }

  Tensor out({index.out_size(), d_out}, 0.0);
  const std::size_t block = d_in * d_out;
  for (std::size_t g = 0; g < index.out_group_count(); ++g) {
    const auto members = index.out_group_members(g);
    Tensor z({(*reduced)[index.signature_of(members[0])].dim(0), d_out}, 0.0);
    for (std::size_t p : members) {
      const Tensor& r = (*reduced)[index.signature_of(p)];
      kernels::gemm(Trans::no, Trans::no, r.dim(0), d_out, d_in, 1.0, r.data(),
                    coeffs.value().data().subspan(p * block, block), 1.0, z.data());
    }
    const auto rows = index.group_rows(g);
    const auto out_keys = index.group_keys(g);
    for (std::size_t q = 0; q < rows.size(); ++q) {
      double* dst = out.raw() + static_cast<std::size_t>(rows[q]) * d_out;
      const double* src = z.raw() + static_cast<std::size_t>(out_keys[q]) * d_out;
      for (std::size_t c = 0; c < d_out; ++c) dst[c] += src[c];
    }
  }
  if (has_bias) {
    const Tensor& b = bias.value();
    for (std::size_t rho = 0; rho < index.bias_count(); ++rho) {
      const double* src = b.raw() + rho * d_out;
      for (std::uint32_t row : index.bias_rows(rho)) {
        double* dst = out.raw() + static_cast<std::size_t>(row) * d_out;
        for (std::size_t c = 0; c < d_out; ++c) dst[c] += src[c];
      }
    }
  }

  std::vector<ad::Var> inputs{x, coeffs};
  if (has_bias) inputs.push_back(bias);
  ad::Tape& tape = *x.tape();
  return tape.record(
      std::move(out), inputs,
      [x, coeffs, bias, has_bias, reduced, &index, d_in, d_out, agg](ad::Tape& t,
                                                                      ad::NodeId self) {
        const Tensor& g = t.grad_of(self);
        const bool want_x = t.requires_grad(x.id());
        const bool want_w = t.requires_grad(coeffs.id());
        const std::size_t block = d_in * d_out;
        std::vector<Tensor> d_reduced;
        if (want_x) {
          for (const Tensor& r : *reduced) d_reduced.emplace_back(r.shape(), 0.0);
        }
        for (std::size_t grp = 0; grp < index.out_group_count(); ++grp) {
          const auto members = index.out_group_members(grp);
          Tensor dz({(*reduced)[index.signature_of(members[0])].dim(0), d_out}, 0.0);
          const auto rows = index.group_rows(grp);
          const auto out_keys = index.group_keys(grp);
          for (std::size_t q = 0; q < rows.size(); ++q) {
            double* dst = dz.raw() + static_cast<std::size_t>(out_keys[q]) * d_out;
            const double* src = g.raw() + static_cast<std::size_t>(rows[q]) * d_out;
            for (std::size_t c = 0; c < d_out; ++c) dst[c] += src[c];
          }
          for (std::size_t p : members) {
            const std::size_t s = index.signature_of(p);
            const Tensor& r = (*reduced)[s];
            const std::size_t keys = r.dim(0);
            if (want_w) {
              kernels::gemm(Trans::yes, Trans::no, d_in, d_out, keys, 1.0, r.data(), dz.data(),
                            1.0, t.grad_buffer(coeffs.id()).data().subspan(p * block, block));
            }
            if (want_x) {
              kernels::gemm(Trans::no, Trans::yes, keys, d_in, d_out, 1.0, dz.data(),
                            coeffs.value().data().subspan(p * block, block), 1.0,
                            d_reduced[s].data());
            }
          }
        }
        if (want_x) {
          Tensor& gx = t.grad_buffer(x.id());
          for (std::size_t s = 0; s < index.signature_count(); ++s) {
            const auto& sig = index.signature(s);
            const double w =
                agg == Aggregation::mean ? 1.0 / static_cast<double>(sig.multiplicity) : 1.0;
            for (std::size_t key = 0; key < sig.key_count; ++key) {
              const double* src = d_reduced[s].raw() + key * d_in;
              for (std::uint32_t a = sig.group_offsets[key]; a < sig.group_offsets[key + 1]; ++a) {
                double* dst = gx.raw() + static_cast<std::size_t>(sig.group_items[a]) * d_in;
                for (std::size_t c = 0; c < d_in; ++c) dst[c] += w * src[c];
              }
            }
          }
        }
        if (has_bias && t.requires_grad(bias.id())) {
          Tensor& gb = t.grad_buffer(bias.id());
          for (std::size_t rho = 0; rho < index.bias_count(); ++rho) {
            double* dst = gb.raw() + rho * d_out;
            for (std::uint32_t row : index.bias_rows(rho)) {
              const double* src = g.raw() + static_cast<std::size_t>(row) * d_out;
              for (std::size_t c = 0; c < d_out; ++c) dst[c] += src[c];
            }
          }
        }
      });
}

void init_equivariant_linear(ParamSet& params, const std::string& prefix,
                             const EquivariantLinearSpec& spec, std::mt19937_64& rng) {
  const std::vector<Partition> basis = enumerate_partitions(spec.m + spec.n);
  // Basis elements reaching a generic output tuple (all output positions in distinct blocks).
  std::size_t generic = 0;
  for (const Partition& p : basis) {
    std::vector<bool> seen(spec.m + spec.n, false);
    bool distinct = true;
    for (std::size_t q = spec.m; q < spec.m + spec.n; ++q) {
      distinct = distinct && !seen[p[q]];
      seen[p[q]] = true;
    }
    if (distinct) ++generic;
  }
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec.d_in * generic));
  std::normal_distribution<double> normal(0.0, sd);
  Tensor coeffs({basis.size(), spec.d_in, spec.d_out});
  for (double& v : coeffs.data()) v = normal(rng);
  params.add(prefix + ".coeffs", std::move(coeffs));
  if (spec.with_bias) params.add(prefix + ".bias", Tensor({bell_number(spec.n), spec.d_out}, 0.0));
}

ad::Var apply_equivariant_linear(Binding& bind, const std::string& prefix,
                                 const EquivariantLinearSpec& spec, ad::Var x,
                                 std::size_t joints) {
  ad::Var bias = spec.with_bias ? bind(prefix + ".bias") : ad::Var();
  return equivariant_linear(x, bind(prefix + ".coeffs"), bias, joints, spec.m, spec.n, spec.agg);
}

}  // namespace mmf
