#include "mmformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmf::ad {

namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> points) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(points.size());
  for (const Tensor& p : points) vars.push_back(tape.leaf_ref(p, false));
  return f(tape, vars).value()[0];
}

}  // namespace

double grad_check(const ScalarFn& f, std::span<const Tensor> points,
                  const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : points) vars.push_back(tape.leaf_ref(p, true));
    Var loss = f(tape, vars);
    tape.backward(loss);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  std::mt19937_64 rng(options.seed);
  std::vector<Tensor> work(points.begin(), points.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < work.size(); ++p) {
    std::vector<std::size_t> coords(work[p].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
    }
    for (std::size_t c : coords) {
      const double saved = work[p][c];
      work[p][c] = saved + options.eps;
      const double up = evaluate(f, work);
      work[p][c] = saved - options.eps;
      const double down = evaluate(f, work);
      work[p][c] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double err = std::abs(analytic[p][c] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double eps) {
  ScalarFn wrapped = [&f](Tape& tape, std::span<const Var> vars) { return f(tape, vars[0]); };
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(wrapped, std::span<const Tensor>(&point, 1), options);
}

}  // namespace mmf::ad
