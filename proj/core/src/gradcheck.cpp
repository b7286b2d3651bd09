#include "msfmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace msf {

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double step, double tol) {
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Var<double>::leaf(t));
  const Var<double> out = f(leaves);
  if (out.value().size() != 1) {
    throw DimensionError("grad_check: function must be scalar-valued, got " + shape_to_string(out.shape()));
  }
  const auto grads = backward(out);

  auto evaluate = [&](std::size_t which, const Tensor<double>& replaced) {
    NoGradGuard guard;
    std::vector<Var<double>> args;
    args.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      args.push_back(Var<double>::constant(i == which ? replaced : inputs[i]));
    }
    return f(args).value()[0];
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = grads.wrt(leaves[i]);
    Tensor<double> probe = inputs[i];
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const double orig = probe[k];
      probe[k] = orig + step;
      const double fp = evaluate(i, probe);
      probe[k] = orig - step;
      const double fm = evaluate(i, probe);
      probe[k] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double ad = analytic[k];
      const double err = std::abs(ad - numeric) / std::max({1.0, std::abs(ad), std::abs(numeric)});
      ++report.components;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = i;
        report.worst_index = k;
        report.worst_analytic = ad;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x,
                           double step, double tol) {
  return grad_check([&](const std::vector<Var<double>>& args) { return f(args[0]); },
                    std::vector<Tensor<double>>{x}, step, tol);
}

std::string describe(const GradCheckReport& report) {
  std::ostringstream os;
  os << (report.passed ? "pass" : "FAIL") << " max_rel_error=" << report.max_rel_error
     << " components=" << report.components << " worst=(input " << report.worst_input << ", element "
     << report.worst_index << ", ad " << report.worst_analytic << ", fd " << report.worst_numeric << ")";
  return os.str();
}

}  // namespace msf
