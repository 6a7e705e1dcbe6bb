#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/param_vector.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

struct Shape3 {
    int c = 0, h = 0, w = 0;
    int count() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
    std::string str() const;
};

enum class LayerKind { Dense, Conv, TConv, ReLU, LeakyReLU, Sigmoid, MaxPool, Reshape };

// One layer descriptor. Shapes are fully resolved at build time so the
// parameter count is a pure function of the spec.
struct LayerSpec {
    LayerKind kind;
    Shape3 in, out;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    double slope = 0.0; // LeakyReLU negative slope

    std::int64_t weight_count() const;
    std::int64_t bias_count() const;
    std::int64_t param_count() const { return weight_count() + bias_count(); }
};

struct ModelSpec {
    Shape3 input;
    std::vector<LayerSpec> layers;
    int num_classes = 0; // 0 when the output is not a class distribution

    Shape3 output() const { return layers.empty() ? input : layers.back().out; }
    std::int64_t param_count() const;
    // Offset of a layer's parameters inside the flat ParamVector.
    std::int64_t param_offset(std::size_t layer_index) const;
    void validate() const;
};

// Incremental spec construction; every add computes the next input shape.
class SpecBuilder {
  public:
    explicit SpecBuilder(Shape3 input) { spec_.input = input; }

    SpecBuilder& dense(int units);
    SpecBuilder& conv(int filters, int kernel, int stride = 1, int pad = 0);
    SpecBuilder& tconv(int filters, int kernel, int stride = 1, int pad = 0);
    SpecBuilder& relu();
    SpecBuilder& leaky_relu(double slope = 0.2);
    SpecBuilder& sigmoid();
    SpecBuilder& max_pool(int size = 2);
    SpecBuilder& reshape(int c, int h, int w);

    ModelSpec build(int num_classes = 0);

  private:
    Shape3 cur() const { return spec_.layers.empty() ? spec_.input : spec_.layers.back().out; }
    ModelSpec spec_;
};

// Optimizer accumulators live beside the parameters and share their length.
enum class OptKind { None, Sgd, Adam };

struct ModelState {
    ModelSpec spec;
    ParamVector params;
    OptKind opt_kind = OptKind::None;
    ParamVector opt_m; // SGD velocity / Adam first moment
    ParamVector opt_v; // Adam second moment
    std::int64_t opt_step = 0;

    void reset_optimizer(OptKind kind);
};

// Kaiming-uniform fan-in weights, zero biases, drawn from one seeded stream
// in layer order.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

ModelState make_model(const ModelSpec& spec, std::uint64_t seed);

// Reference architectures used by the experiment presets.
ModelSpec mnist_convnet();                  // 28x28x1, 10 classes
ModelSpec cifar_cnn(int num_classes = 10);  // 32x32x3
ModelSpec mnist_generator(int noise_dim = 64);
ModelSpec cifar_generator(int noise_dim = 100);

} // namespace sflsim
