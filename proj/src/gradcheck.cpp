#include <algorithm>
#include <cmath>

#include "hyolo/tensor.hpp"

namespace hyolo {

double gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 std::vector<Tensor>& inputs, double step) {
    if (step <= 0) throw LogicError("gradcheck: step must be positive");
    for (auto& t : inputs) {
        if (!t.requires_grad()) throw MissingGradient("gradcheck input without requires_grad");
        t.zero_grad();
    }

    Tensor y = f(inputs);
    if (y.size() != 1) throw ShapeMismatch("gradcheck: f must return a single-element tensor");
    y.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs)
        analytic.emplace_back(t.grad().begin(), t.grad().end());

    double worst = 0.0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto data = inputs[ti].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + step;
            const double fp = f(inputs).item();
            data[i] = saved - step;
            const double fm = f(inputs).item();
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[ti][i];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw NonFiniteValue("gradcheck: non-finite derivative");
            const double rel = std::abs(a - numeric) /
                               std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace hyolo
