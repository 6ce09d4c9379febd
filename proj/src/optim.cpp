#include "hyolo/tensor.hpp"

namespace hyolo {

void SgdOptimizer::step(std::vector<Tensor>& params) {
    for (auto& p : params) {
        auto g = p.grad(); // throws MissingGradient when not populated
        const void* key = p.node();
        std::vector<double>* v = nullptr;
        for (auto& [k, vel] : velocity_)
            if (k == key) { v = &vel; break; }
        if (!v) {
            velocity_.emplace_back(key, std::vector<double>(g.size(), 0.0));
            v = &velocity_.back().second;
        }
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            (*v)[i] = momentum_ * (*v)[i] + g[i];
            data[i] -= lr_ * (*v)[i];
        }
    }
}

} // namespace hyolo
