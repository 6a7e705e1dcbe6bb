#include "sflsim/param_vector.hpp"

#include <cmath>

namespace sflsim::pv {

void check_same_length(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size())
        throw shape_error("parameter vector length mismatch: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
}

ParamVector zeros(std::size_t n) { return ParamVector(n, 0.0); }
ParamVector zeros_like(const ParamVector& v) { return ParamVector(v.size(), 0.0); }

void add_inplace(ParamVector& a, const ParamVector& b) {
    check_same_length(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void sub_inplace(ParamVector& a, const ParamVector& b) {
    check_same_length(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
}

void scale_inplace(ParamVector& a, double s) {
    for (double& x : a) x *= s;
}

void axpy(ParamVector& y, double a, const ParamVector& x) {
    check_same_length(y, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
    ParamVector r = a;
    add_inplace(r, b);
    return r;
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
    ParamVector r = a;
    sub_inplace(r, b);
    return r;
}

ParamVector scaled(const ParamVector& a, double s) {
    ParamVector r = a;
    scale_inplace(r, s);
    return r;
}

double dot(const ParamVector& a, const ParamVector& b) {
    check_same_length(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

bool all_finite(const ParamVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace sflsim::pv
