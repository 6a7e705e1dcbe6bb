#include "sflsim/model.hpp"

#include <cmath>

#include "sflsim/errors.hpp"

namespace sflsim {

std::string Shape3::str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

std::int64_t LayerSpec::weight_count() const {
    switch (kind) {
    case LayerKind::Dense:
        return static_cast<std::int64_t>(out.count()) * in.count();
    case LayerKind::Conv:
        return static_cast<std::int64_t>(out.c) * in.c * kernel * kernel;
    case LayerKind::TConv:
        return static_cast<std::int64_t>(in.c) * out.c * kernel * kernel;
    default:
        return 0;
    }
}

std::int64_t LayerSpec::bias_count() const {
    switch (kind) {
    case LayerKind::Dense:
        return out.count();
    case LayerKind::Conv:
    case LayerKind::TConv:
        return out.c;
    default:
        return 0;
    }
}

std::int64_t ModelSpec::param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

std::int64_t ModelSpec::param_offset(std::size_t layer_index) const {
    std::int64_t off = 0;
    for (std::size_t i = 0; i < layer_index; ++i) off += layers[i].param_count();
    return off;
}

void ModelSpec::validate() const {
    Shape3 prev = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (!(l.in == prev))
            throw shape_error("layer " + std::to_string(i) + ": input shape " + l.in.str() +
                              " does not match previous output " + prev.str());
        if (l.in.count() <= 0 || l.out.count() <= 0)
            throw shape_error("layer " + std::to_string(i) + ": degenerate shape");
        prev = l.out;
    }
    if (num_classes > 0 && output().count() != num_classes)
        throw shape_error("output shape " + output().str() + " does not provide " +
                          std::to_string(num_classes) + " classes");
}

SpecBuilder& SpecBuilder::dense(int units) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in = cur();
    l.out = {units, 1, 1};
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::conv(int filters, int kernel, int stride, int pad) {
    const Shape3 in = cur();
    const int oh = (in.h + 2 * pad - kernel) / stride + 1;
    const int ow = (in.w + 2 * pad - kernel) / stride + 1;
    if (oh <= 0 || ow <= 0) throw shape_error("conv: kernel does not fit input " + in.str());
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.in = in;
    l.out = {filters, oh, ow};
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::tconv(int filters, int kernel, int stride, int pad) {
    const Shape3 in = cur();
    const int oh = (in.h - 1) * stride + kernel - 2 * pad;
    const int ow = (in.w - 1) * stride + kernel - 2 * pad;
    if (oh <= 0 || ow <= 0) throw shape_error("tconv: degenerate output for input " + in.str());
    LayerSpec l;
    l.kind = LayerKind::TConv;
    l.in = in;
    l.out = {filters, oh, ow};
    l.kernel = kernel;
    l.stride = stride;
    l.pad = pad;
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::relu() {
    LayerSpec l;
    l.kind = LayerKind::ReLU;
    l.in = l.out = cur();
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::leaky_relu(double slope) {
    LayerSpec l;
    l.kind = LayerKind::LeakyReLU;
    l.in = l.out = cur();
    l.slope = slope;
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::sigmoid() {
    LayerSpec l;
    l.kind = LayerKind::Sigmoid;
    l.in = l.out = cur();
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::max_pool(int size) {
    const Shape3 in = cur();
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.in = in;
    l.out = {in.c, in.h / size, in.w / size};
    if (l.out.h <= 0 || l.out.w <= 0) throw shape_error("max_pool: window larger than input");
    l.kernel = size;
    l.stride = size;
    spec_.layers.push_back(l);
    return *this;
}

SpecBuilder& SpecBuilder::reshape(int c, int h, int w) {
    const Shape3 in = cur();
    if (in.count() != c * h * w)
        throw shape_error("reshape: element count changes from " + in.str());
    LayerSpec l;
    l.kind = LayerKind::Reshape;
    l.in = in;
    l.out = {c, h, w};
    spec_.layers.push_back(l);
    return *this;
}

ModelSpec SpecBuilder::build(int num_classes) {
    spec_.num_classes = num_classes;
    spec_.validate();
    return spec_;
}

void ModelState::reset_optimizer(OptKind kind) {
    opt_kind = kind;
    opt_step = 0;
    opt_m.assign(params.size(), 0.0);
    if (kind == OptKind::Adam)
        opt_v.assign(params.size(), 0.0);
    else
        opt_v.clear();
}

namespace {

int fan_in(const LayerSpec& l) {
    switch (l.kind) {
    case LayerKind::Dense:
        return l.in.count();
    case LayerKind::Conv:
    case LayerKind::TConv:
        return l.in.c * l.kernel * l.kernel;
    default:
        return 0;
    }
}

} // namespace

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector p(static_cast<std::size_t>(spec.param_count()), 0.0);
    Rng rng(seed);
    std::size_t off = 0;
    for (const auto& l : spec.layers) {
        const auto nw = static_cast<std::size_t>(l.weight_count());
        const auto nb = static_cast<std::size_t>(l.bias_count());
        if (nw > 0) {
            const double bound = std::sqrt(6.0 / fan_in(l));
            for (std::size_t i = 0; i < nw; ++i) p[off + i] = rng.uniform(-bound, bound);
        }
        off += nw + nb; // biases stay zero
    }
    return p;
}

ModelState make_model(const ModelSpec& spec, std::uint64_t seed) {
    ModelState s;
    s.spec = spec;
    s.params = init_params(spec, seed);
    s.reset_optimizer(OptKind::None);
    return s;
}

ModelSpec mnist_convnet() {
    return SpecBuilder({1, 28, 28})
        .conv(8, 3)
        .relu()
        .max_pool(2)
        .conv(16, 3)
        .relu()
        .max_pool(2)
        .dense(128)
        .relu()
        .dense(10)
        .build(10);
}

ModelSpec cifar_cnn(int num_classes) {
    return SpecBuilder({3, 32, 32})
        .conv(16, 3)
        .relu()
        .max_pool(2)
        .conv(32, 3)
        .relu()
        .max_pool(2)
        .conv(64, 3)
        .relu()
        .max_pool(2)
        .dense(128)
        .relu()
        .dense(num_classes)
        .build(num_classes);
}

ModelSpec mnist_generator(int noise_dim) {
    return SpecBuilder({noise_dim, 1, 1})
        .dense(32 * 7 * 7)
        .relu()
        .reshape(32, 7, 7)
        .tconv(16, 4, 2, 1) // ->16x14x14
        .relu()
        .tconv(8, 4, 2, 1) // ->8x28x28
        .relu()
        .tconv(1, 3, 1, 1) // ->1x28x28
        .sigmoid()
        .build();
}

ModelSpec cifar_generator(int noise_dim) {
    return SpecBuilder({noise_dim, 1, 1})
        .dense(64 * 4 * 4)
        .relu()
        .reshape(64, 4, 4)
        .tconv(48, 4, 2, 1) // ->48x8x8
        .relu()
        .tconv(32, 4, 2, 1) // ->32x16x16
        .relu()
        .tconv(24, 4, 2, 1) // ->24x32x32
        .relu()
        .tconv(16, 3, 1, 1)
        .relu()
        .tconv(3, 3, 1, 1)
        .sigmoid()
        .build();
}

} // namespace sflsim
