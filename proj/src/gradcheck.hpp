#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace pairvit::gradcheck {

struct Result {
    real max_rel_err = 0;
    bool pass = true;
    std::string worst;  // location of the largest deviation

    void merge(const Result& other) {
        if (other.max_rel_err > max_rel_err) {
            max_rel_err = other.max_rel_err;
            worst = other.worst;
        }
        pass = pass && other.pass;
    }
};

// Central finite differences against reverse-mode gradients. make_loss must
// rebuild a scalar from the current values of the given leaf tensors, which
// the checker perturbs in place. Relative error per coordinate is
// |a - n| / max(1, |a|, |n|).
Result check(const std::function<Tensor()>& make_loss, const std::vector<Tensor>& inputs,
             real eps = 1e-5, real tol = 1e-4);

// Same check restricted to chosen coordinates of one input; used for the
// end-to-end model checks where full sweeps are too slow.
Result check_coords(const std::function<Tensor()>& make_loss, Tensor input,
                    const std::vector<std::size_t>& coords, real eps = 1e-5, real tol = 1e-3,
                    const std::string& label = "");

}  // namespace pairvit::gradcheck
