#pragma once

namespace badvamp::parallel {

// Worker count used by the OpenMP kernel paths and the experiment harness.
// 0 means "use the OpenMP default". Thread count never changes results:
// the parallel kernels perform the same per-column arithmetic as the serial
// references and reduce in a fixed order.
void set_threads(int n);
int threads();

// True when the parallel kernel paths should be taken.
bool enabled();

}  // namespace badvamp::parallel
