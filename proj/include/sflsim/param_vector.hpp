#pragma once

#include <cstddef>
#include <vector>

#include "sflsim/errors.hpp"

namespace sflsim {

// Flat carrier for all model parameters and parameter-shaped quantities
// (weights, deltas, control variates, gradients). Length is fixed by the
// owning ModelSpec.
using ParamVector = std::vector<double>;

namespace pv {

void check_same_length(const ParamVector& a, const ParamVector& b);

ParamVector zeros(std::size_t n);
ParamVector zeros_like(const ParamVector& v);

void add_inplace(ParamVector& a, const ParamVector& b);
void sub_inplace(ParamVector& a, const ParamVector& b);
void scale_inplace(ParamVector& a, double s);

// y += a * x
void axpy(ParamVector& y, double a, const ParamVector& x);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scaled(const ParamVector& a, double s);

double dot(const ParamVector& a, const ParamVector& b);
double l2_norm(const ParamVector& v);
bool all_finite(const ParamVector& v);

} // namespace pv
} // namespace sflsim
