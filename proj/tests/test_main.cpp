#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include "core/ops.hpp"

TEST_CASE("smoke: conv2d 3x3 ones valid") {
  hgr::Tape<float> tape;
  hgr::Tensor<float> x(hgr::Shape4{1, 3, 3, 1}, 1.0f);
  hgr::Variable<float> k("k", hgr::Tensor<float>(hgr::Shape4{3, 3, 1, 1}, 1.0f));
  auto xr = tape.input(std::move(x), true);
  auto y = hgr::conv2d(tape, xr, k, static_cast<hgr::Variable<float>*>(nullptr), {1, 1, hgr::Pad::valid});
  CHECK(tape.value(y).size() == 1);
  CHECK(tape.value(y)[0] == doctest::Approx(9.0));
  auto loss = hgr::sum(tape, y);
  tape.backward(loss);
  CHECK(tape.grad(xr)[0] == doctest::Approx(1.0));
  CHECK(k.grad[0] == doctest::Approx(1.0));
}
