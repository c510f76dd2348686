#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace wvad {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::vector<Tensor> params, std::vector<std::string> names,
                           const GradCheckOptions& options) {
  if (!names.empty() && names.size() != params.size()) throw ArgumentError("grad_check: one name per parameter");
  if (names.empty())
    for (std::size_t i = 0; i < params.size(); ++i) names.push_back("param" + std::to_string(i));

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    Var out = f(tape, leaves);
    if (out.value().size() != 1) throw DimensionError("grad_check: function must return a scalar");
    if (!std::isfinite(out.value().item())) throw NumericError("grad_check: non-finite value at the base point");
    if (out.requires_grad()) tape.backward(out);
    for (const Var& l : leaves) {
      const Tensor& g = l.grad();
      analytic.push_back(g.empty() ? Tensor(l.shape(), 0.0) : g);
    }
  }

  GradCheckReport report;
  report.passed = true;
  const double h = options.step;
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamCheck pc;
    pc.name = names[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = params[p][i];
      params[p][i] = orig + h;
      const double fp = evaluate(f, params);
      params[p][i] = orig - h;
      const double fm = evaluate(f, params);
      params[p][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.passed = false;
        report.failure = "non-finite value when perturbing " + pc.name + "[" + std::to_string(i) + "]";
        report.params.push_back(pc);
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (i == 0 || err > pc.max_error) {
        pc.max_error = err;
        pc.worst_index = i;
        pc.analytic = a;
        pc.numeric = numeric;
      }
    }
    report.max_error = std::max(report.max_error, pc.max_error);
    if (pc.max_error > options.tolerance) report.passed = false;
    report.params.push_back(pc);
  }
  return report;
}

}  // namespace wvad
