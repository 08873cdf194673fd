#pragma once

#include "ogd/geomstate.hpp"
#include "ogd/toyoracle.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ogd {

inline constexpr double kBohrPerAngstrom = 1.0 / 0.529177210903;

/// Environment variable overriding XtbConfig::executable_path.
inline constexpr const char* kXtbPathEnv = "OGD_XTB_PATH";

struct XtbConfig {
  std::filesystem::path executable_path = "xtb";
  std::filesystem::path workdir_root = std::filesystem::temp_directory_path();
  double timeout = 60.0;  // seconds
  std::vector<std::string> extra_args;
  bool keep_workdirs = false;

  void validate() const;
};

/// Executable after applying the OGD_XTB_PATH override and a PATH lookup for bare
/// names. Empty when nothing executable is found.
std::filesystem::path resolve_xtb_executable(const XtbConfig& cfg);

struct XyzFrame {
  AtomLabels labels;
  Positions positions;  // Angstrom
  std::string comment;
};

/// Standard XYZ block: count line, comment line, "<symbol> <x> <y> <z>" with ten
/// fixed-point decimals.
std::string write_xyz(const AtomLabels& labels, const Positions& positions_angstrom, std::string_view comment = "");

/// Parses one or more concatenated XYZ frames. Throws InvalidParameter on malformed input.
std::vector<XyzFrame> parse_xyz(std::string_view text);

/// Parses a Turbomole-style `gradient` file (last cycle wins). Numbers may use D or E
/// exponents. Returns converged=false with a zero gradient on any malformed content or
/// when the atom count differs from `n_atoms`.
OracleEval parse_gradient_file(std::string_view text, int n_atoms);

/// Runs `<exe> coords.xyz --grad [extra_args...]` in a fresh directory under
/// workdir_root. Positions are in Bohr; the XYZ file is written in Angstrom. Throws
/// InvalidParameter when the executable is missing; every runtime failure (non-zero
/// exit, timeout, unparseable output, SCF non-convergence) is reported as
/// converged=false with a zero gradient.
OracleEval invoke(const XtbConfig& cfg, const AtomLabels& labels, const Positions& positions_bohr);

/// Oracle adapter over invoke(); states are interpreted in Bohr.
class XtbOracle final : public Oracle {
 public:
  XtbOracle(XtbConfig cfg, AtomLabels labels);

  OracleEval evaluate(const Positions& positions) const override;
  std::string describe() const override;

 private:
  XtbConfig cfg_;
  AtomLabels labels_;
};

}  // namespace ogd
