#pragma once

#include <cstdint>
#include <vector>

#include "sflsim/model.hpp"
#include "sflsim/param_vector.hpp"

namespace sflsim {

// One minibatch: n images of a common shape, values in [0,1], plus integer
// labels (may be empty when the batch feeds a generator/discriminator).
struct Batch {
    int n = 0;
    Shape3 shape;
    std::vector<double> x; // n * shape.count(), sample-major
    std::vector<int> y;

    void check_against(const ModelSpec& spec) const;
};

// Per-layer activation cache reused across forward/backward calls. Buffers
// grow to the largest batch seen and are never shrunk.
struct Workspace {
    std::vector<std::vector<double>> outs;   // layer outputs, n * out.count()
    std::vector<std::vector<int>> pool_idx;  // argmax index per pooled cell
    int n = 0;
};

// Forward pass; fills ws and returns a reference to the final layer output
// (n x output.count()).
const std::vector<double>& forward_pass(const ModelSpec& spec, const ParamVector& params,
                                        const Batch& batch, Workspace& ws);

// Convenience forward returning a copy of the logits.
std::vector<double> forward(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Backward pass for an arbitrary upstream gradient at the output layer
// (same layout as the output buffer). Accumulates into grad (must be
// param-sized, caller controls zeroing); optionally produces the gradient
// with respect to the batch input.
void backward_pass(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                   const Workspace& ws, const std::vector<double>& dout, ParamVector& grad,
                   std::vector<double>* dinput = nullptr);

// Mean softmax cross-entropy over the batch. dlogits, when given, receives
// d(loss)/d(logits) including the 1/n factor.
double cross_entropy(const std::vector<double>& logits, int n, int num_classes,
                     const std::vector<int>& labels, std::vector<double>* dlogits = nullptr);

// Mean binary cross-entropy on raw scores (logit parameterization).
double bce_with_logits(const std::vector<double>& scores, const std::vector<double>& targets,
                       std::vector<double>* dscores = nullptr);

// Gradient of mean cross-entropy w.r.t. every parameter.
ParamVector backward(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Reusable-buffer gradient computation for training loops.
class Trainer {
  public:
    explicit Trainer(ModelSpec spec) : spec_(std::move(spec)) {}

    // Zeroes grad and fills it with the mean cross-entropy gradient;
    // returns the loss.
    double gradient(const ParamVector& params, const Batch& batch, ParamVector& grad);

    const ModelSpec& spec() const { return spec_; }

  private:
    ModelSpec spec_;
    Workspace ws_;
    std::vector<double> dlogits_;
};

// v <- momentum*v + g + weight_decay*w;  w <- w - lr*v
void sgd_step(ModelState& state, const ParamVector& grad, double lr, double momentum = 0.0,
              double weight_decay = 0.0);

// Bias-corrected Adam.
void adam_step(ModelState& state, const ParamVector& grad, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

} // namespace sflsim
