#pragma once

#include "demandlens/demand_systems.hpp"

namespace fixtures {

namespace dl = demandlens;

inline const dl::Matrix kExample1{{2.0, 1.0}, {1.0, 2.0}};
inline const dl::Matrix kExample2{{20.0, -10.0}, {-1.0, 2.0}};

// Q(u) = u^3 on the line, no analytic Jacobian so the FD path is exercised.
inline dl::DemandSystem cube_1d() {
  return dl::make_custom(1, [](const dl::Vector& u) { return dl::Vector{u[0] * u[0] * u[0]}; }, "cube_1d");
}

inline dl::DemandSystem square_1d() {
  return dl::make_custom(1, [](const dl::Vector& u) { return dl::Vector{u[0] * u[0]}; }, "square_1d");
}

// Q(u1, u2) = (u1, 0): constant along the second axis.
inline dl::DemandSystem flat_second() {
  return dl::make_linear(dl::Matrix{{1.0, 0.0}, {0.0, 0.0}});
}

inline dl::DemandSystem swap_map() { return dl::make_linear(dl::Matrix{{0.0, 1.0}, {1.0, 0.0}}); }

inline dl::DemandSystem negate_first() { return dl::make_linear(dl::Matrix{{-1.0, 0.0}, {0.0, 1.0}}); }

inline dl::DemandSystem identity(std::size_t k) { return dl::make_linear(dl::Matrix::identity(k)); }

}  // namespace fixtures
