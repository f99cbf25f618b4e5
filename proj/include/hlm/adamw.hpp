// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hlm/checkpoint.hpp"
#include "hlm/tensor.hpp"

namespace hlm {

// lr ramps linearly from 0 to lr0 over warmup steps (hitting lr0 exactly at
// step == warmup), then decays linearly to 0 at step == total. Steps are
// 1-based at update time.
inline double lr_at_step(int64_t step, int64_t total, int64_t warmup, double lr0) {
    if (step <= 0) return 0.0;
    if (warmup > 0 && step <= warmup) return lr0 * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= total) return 0.0;
    return lr0 * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S> tensor;
    bool decay;
};

template <typename S, typename P>
std::vector<ParamRef<S>> collect_params(P& params) {
    std::vector<ParamRef<S>> out;
    for_each_param(params, [&](const std::string& name, Tensor<S>& t, bool decay) {
        out.push_back({name, t, decay});
    });
    return out;
}

// Decoupled weight decay Adam. Decay applies only to entries flagged by the
// parameter visitor (weight matrices); layer norms, biases and relative
// position tables are exempt.
template <typename S>
class AdamW {
  public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    int64_t step_count() const { return t_; }

    void step(std::vector<ParamRef<S>>& params, double lr) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].tensor.value().size(), S(0));
                v_[i].assign(params[i].tensor.value().size(), S(0));
            }
        }
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<S>& p = params[i].tensor;
            if (!p.has_grad()) continue;
            const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
            const S lr_s = static_cast<S>(lr);
            const S decay = params[i].decay ? static_cast<S>(weight_decay_) : S(0);
            const S eps_s = static_cast<S>(eps_);
            const S ibc1 = static_cast<S>(1.0 / bc1), ibc2 = static_cast<S>(1.0 / bc2);
            S* w = p.value().data();
            const S* g = p.grad().data();
            S* m = m_[i].data();
            S* v = v_[i].data();
            size_t n = p.value().size();
            for (size_t j = 0; j < n; ++j) {
                m[j] = b1 * m[j] + (S(1) - b1) * g[j];
                v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
                S mhat = m[j] * ibc1;
                S vhat = v[j] * ibc2;
                w[j] -= lr_s * (mhat / (std::sqrt(vhat) + eps_s) + decay * w[j]);
            }
        }
    }

    // Optimizer state as checkpoint tensors ("adam.m.<name>", "adam.v.<name>").
    std::vector<std::pair<std::string, TensorBlob>> state_tensors(
        const std::vector<ParamRef<S>>& params) const {
        std::vector<std::pair<std::string, TensorBlob>> out;
        for (size_t i = 0; i < m_.size() && i < params.size(); ++i) {
            TensorBlob mb, vb;
            mb.shape = params[i].tensor.shape();
            vb.shape = params[i].tensor.shape();
            mb.data.assign(m_[i].begin(), m_[i].end());
            vb.data.assign(v_[i].begin(), v_[i].end());
            out.emplace_back("adam.m." + params[i].name, std::move(mb));
            out.emplace_back("adam.v." + params[i].name, std::move(vb));
        }
        return out;
    }

  private:
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

}  // namespace hlm
