#pragma once

// Physical parameter sets for the 10-DOF vehicle on a modally reduced rail,
// plus the human-readable parameter file format.
//
// The file format is `key = value` lines, one per parameter, with units in
// trailing comments. Shipped fastener layouts are uniform: positions are
// generated from `fastener_spacing` as spacing/2, 3*spacing/2, ... inside the
// rail span.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vtlab/common.hpp"

namespace vtlab {

// Vertical-plane rigid bodies: car body, two bogies, four wheelsets.
struct RigidBodyParams {
  double car_mass = 0.0;        // kg
  double car_inertia = 0.0;     // kg m^2, pitch
  double bogie_mass = 0.0;      // kg
  double bogie_inertia = 0.0;   // kg m^2, pitch
  double wheelset_mass = 0.0;   // kg

  void validate() const {
    require(car_mass > 0 && car_inertia > 0 && bogie_mass > 0 &&
                bogie_inertia > 0 && wheelset_mass > 0,
            "rigid body masses and inertias must be strictly positive");
  }
};

struct SuspensionParams {
  double primary_stiffness = 0.0;    // N/m, per wheelset
  double primary_damping = 0.0;      // N s/m
  double secondary_stiffness = 0.0;  // N/m, per bogie
  double secondary_damping = 0.0;    // N s/m
  double fastener_stiffness = 0.0;   // N/m, per fastener
  double fastener_damping = 0.0;     // N s/m
  double semi_wheelbase = 0.0;       // m, bogie center to wheelset
  double semi_bogie_spacing = 0.0;   // m, car center to bogie center

  void validate() const {
    require(primary_stiffness >= 0 && primary_damping >= 0 &&
                secondary_stiffness >= 0 && secondary_damping >= 0 &&
                fastener_stiffness >= 0 && fastener_damping >= 0,
            "stiffness/damping values must be nonnegative");
    require(semi_wheelbase > 0 && semi_bogie_spacing > 0,
            "suspension lengths must be strictly positive");
  }
};

// Simply supported Euler beam rail plus the wheel-rail contact law.
struct BeamParams {
  double elastic_modulus = 0.0;   // Pa
  double second_moment = 0.0;     // m^4
  double mass_per_length = 0.0;   // kg/m
  double rail_length = 0.0;       // m
  int mode_count = 0;             // retained sine modes
  std::vector<double> fastener_positions;  // m, strictly increasing in [0, l]
  double speed = 0.0;             // m/s
  double contact_constant = 0.0;  // m / N^(1/contact_exponent)
  double contact_exponent = 1.5;  // nonlinear Hertzian default; 1.0 = linear

  void validate() const {
    require(elastic_modulus > 0 && second_moment > 0 && mass_per_length > 0 &&
                rail_length > 0 && speed > 0 && contact_constant > 0,
            "beam physical constants must be strictly positive");
    require(mode_count >= 1, "mode_count must be >= 1");
    require(contact_exponent > 0, "contact exponent must be positive");
    require(!fastener_positions.empty(), "at least one fastener required");
    double prev = -1.0;
    for (double x : fastener_positions) {
      require(x >= 0.0 && x <= rail_length, "fastener position outside rail");
      require(x > prev, "fastener positions must be strictly increasing");
      prev = x;
    }
  }
};

inline std::vector<double> uniform_fasteners(double rail_length, double spacing) {
  require(spacing > 0 && spacing < rail_length, "bad fastener spacing");
  std::vector<double> xs;
  for (double x = 0.5 * spacing; x < rail_length; x += spacing) xs.push_back(x);
  return xs;
}

struct VehicleParams {
  RigidBodyParams rigid;
  SuspensionParams susp;
  BeamParams beam;
  double gravity = 9.8;  // m/s^2

  void validate() const {
    rigid.validate();
    susp.validate();
    beam.validate();
    require(gravity >= 0, "gravity must be nonnegative");
  }
};

// The 13 varied entries of the parameter vector, in container order.
inline const std::array<std::string, 13>& varied_param_names() {
  static const std::array<std::string, 13> names = {
      "car_mass",           "car_inertia",        "bogie_mass",
      "bogie_inertia",      "wheelset_mass",      "primary_stiffness",
      "primary_damping",    "secondary_stiffness", "secondary_damping",
      "fastener_stiffness", "fastener_damping",   "speed",
      "contact_constant"};
  return names;
}

inline std::array<double, 13> extract_param_vector(const VehicleParams& p) {
  return {p.rigid.car_mass,         p.rigid.car_inertia,
          p.rigid.bogie_mass,       p.rigid.bogie_inertia,
          p.rigid.wheelset_mass,    p.susp.primary_stiffness,
          p.susp.primary_damping,   p.susp.secondary_stiffness,
          p.susp.secondary_damping, p.susp.fastener_stiffness,
          p.susp.fastener_damping,  p.beam.speed,
          p.beam.contact_constant};
}

inline VehicleParams apply_param_vector(VehicleParams base,
                                        const double* v /*13 entries*/) {
  base.rigid.car_mass = v[0];
  base.rigid.car_inertia = v[1];
  base.rigid.bogie_mass = v[2];
  base.rigid.bogie_inertia = v[3];
  base.rigid.wheelset_mass = v[4];
  base.susp.primary_stiffness = v[5];
  base.susp.primary_damping = v[6];
  base.susp.secondary_stiffness = v[7];
  base.susp.secondary_damping = v[8];
  base.susp.fastener_stiffness = v[9];
  base.susp.fastener_damping = v[10];
  base.beam.speed = v[11];
  base.beam.contact_constant = v[12];
  return base;
}

// ---------------------------------------------------------------------------
// Parameter file IO.

namespace detail {

inline std::map<std::string, double> parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open parameter file: " + path);
  std::map<std::string, double> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;  // blank or comment-only line
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    require(!key.empty() && !val.empty(),
            "malformed line " + std::to_string(lineno) + " in " + path);
    try {
      kv[key] = std::stod(val);
    } catch (const std::exception&) {
      throw ValidationError("non-numeric value for '" + key + "' in " + path);
    }
  }
  return kv;
}

}  // namespace detail

inline VehicleParams load_vehicle_params(const std::string& path) {
  auto kv = detail::parse_key_value_file(path);
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    require(it != kv.end(), "missing parameter '" + key + "' in " + path);
    return it->second;
  };
  VehicleParams p;
  p.rigid.car_mass = get("car_mass");
  p.rigid.car_inertia = get("car_inertia");
  p.rigid.bogie_mass = get("bogie_mass");
  p.rigid.bogie_inertia = get("bogie_inertia");
  p.rigid.wheelset_mass = get("wheelset_mass");
  p.susp.primary_stiffness = get("primary_stiffness");
  p.susp.primary_damping = get("primary_damping");
  p.susp.secondary_stiffness = get("secondary_stiffness");
  p.susp.secondary_damping = get("secondary_damping");
  p.susp.fastener_stiffness = get("fastener_stiffness");
  p.susp.fastener_damping = get("fastener_damping");
  p.susp.semi_wheelbase = get("semi_wheelbase");
  p.susp.semi_bogie_spacing = get("semi_bogie_spacing");
  p.beam.elastic_modulus = get("elastic_modulus");
  p.beam.second_moment = get("second_moment");
  p.beam.mass_per_length = get("mass_per_length");
  p.beam.rail_length = get("rail_length");
  p.beam.mode_count = static_cast<int>(get("mode_count"));
  p.beam.fastener_positions =
      uniform_fasteners(p.beam.rail_length, get("fastener_spacing"));
  p.beam.speed = get("speed");
  p.beam.contact_constant = get("contact_constant");
  if (kv.count("contact_exponent")) p.beam.contact_exponent = kv["contact_exponent"];
  if (kv.count("gravity")) p.gravity = kv["gravity"];
  p.validate();
  return p;
}

}  // namespace vtlab
