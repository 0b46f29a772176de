#pragma once

// Serial direct-loop convolution kernels. They recompute every sample per
// output channel and carry no shared state with the column-based kernels,
// which makes them the independent oracle for tests and the baseline for
// the benchmark target.

#include "fisheyehdk/dconv.hpp"

namespace fhdk::reference {

FeatureMap conv2d(const FeatureMap& f, const ConvParams& p);
FeatureMap deform_conv2d(const FeatureMap& f, const KernelField& field, const ConvParams& p,
                         bool restrict_center = false);

}  // namespace fhdk::reference
