#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace pairvit::gradcheck {

namespace {

real value_of(const std::function<Tensor()>& make_loss) {
    NoGradGuard no_grad;
    return make_loss().item();
}

Result compare_coord(real analytic, real numeric, real tol, const std::string& where) {
    Result r;
    const real denom = std::max({real(1), std::fabs(analytic), std::fabs(numeric)});
    r.max_rel_err = std::fabs(analytic - numeric) / denom;
    r.pass = r.max_rel_err <= tol;
    r.worst = where;
    return r;
}

}  // namespace

Result check(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& inputs,
             real eps, real tol) {
    for (auto in : inputs) in.zero_grad();
    Tensor loss = make_loss();
    backward(loss);

    Result result;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        Tensor input = inputs[t];
        const std::vector<real> analytic = input.grad();
        auto& values = input.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const real saved = values[i];
            values[i] = saved + eps;
            const real up = value_of(make_loss);
            values[i] = saved - eps;
            const real down = value_of(make_loss);
            values[i] = saved;
            const real numeric = (up - down) / (2 * eps);
            result.merge(compare_coord(analytic[i], numeric, tol,
                                       "input " + std::to_string(t) + " coord " +
                                           std::to_string(i)));
        }
    }
    return result;
}

Result check_coords(const std::function<Tensor()>& make_loss, Tensor input,
                    const std::vector<std::size_t>& coords, real eps, real tol,
                    const std::string& label) {
    input.zero_grad();
    Tensor loss = make_loss();
    backward(loss);
    const std::vector<real> analytic = input.grad();

    Result result;
    auto& values = input.data();
    for (std::size_t i : coords) {
        const real saved = values.at(i);
        values[i] = saved + eps;
        const real up = value_of(make_loss);
        values[i] = saved - eps;
        const real down = value_of(make_loss);
        values[i] = saved;
        const real numeric = (up - down) / (2 * eps);
        result.merge(
            compare_coord(analytic[i], numeric, tol, label + " coord " + std::to_string(i)));
    }
    return result;
}

}  // namespace pairvit::gradcheck
