#pragma once

#include "esotune/plant.hpp"
#include "esotune/sim.hpp"

namespace fixtures {

// DC-motor manipulator operating point used for the bandwidth sweep.
inline esotune::PlantSpec m1d_sweep_plant() {
  esotune::M1dParams p;
  p.b3 = 0.25;
  p.b4 = 0.25;
  p.b5 = 2.0;
  p.b6 = 1.0;
  p.b7 = 0.0;
  return esotune::PlantSpec::m1d(p, 0.0059);
}

inline esotune::SimConfig m1d_sweep_config() {
  esotune::SimConfig cfg;
  cfg.x0 = {1.0, 0.0};
  cfg.zhat0 = {1.0, 0.0, 0.0};
  return cfg;
}

// Academic plant used for the gain-selection comparison.
inline esotune::PlantSpec ns_tuning_plant() {
  esotune::NsParams p;
  p.a1 = 1.0;
  p.a2 = 0.5;
  p.a3 = 1.0;
  p.a4 = 1.0;
  p.a5 = 0.15;
  p.a6 = 1.0;
  return esotune::PlantSpec::ns(p, 0.007);
}

inline esotune::SimConfig ns_tuning_config() {
  esotune::SimConfig cfg;
  cfg.x0 = {-0.9, -0.5};
  cfg.observer_init = esotune::ObserverInit::from_output;
  return cfg;
}

inline constexpr esotune::State2 kNsTestState{0.2, 0.1};

}  // namespace fixtures
