#include "rddm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rddm/errors.hpp"

namespace rddm {

namespace {

double scalar_value(const Tensor& t) {
  if (t.numel() != 1) throw ContractError("finite_diff_check needs a scalar-valued function");
  return t.item();
}

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic));
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check step must be positive");
  Tensor leaf = x.detach_copy(true);
  std::vector<Tensor> params{leaf};
  return finite_diff_check([&] { return f(leaf); }, params, step);
}

double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor>& params, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_check step must be positive");
  for (auto& p : params) {
    if (!p.is_leaf()) throw ContractError("finite_diff_check parameters must be leaves");
    p.zero_grad();
  }
  Tensor out = f();
  scalar_value(out);
  out.backward();

  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.numel(), 0.0);
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        values[i] = saved + step;
        plus = scalar_value(f());
        values[i] = saved - step;
        minus = scalar_value(f());
      }
      values[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (plus - minus) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace rddm
