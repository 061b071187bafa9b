#pragma once

// Predicted-versus-actual scatter plots as standalone SVG.

#include <filesystem>
#include <string>

#include "gzk/harness/eval.hpp"

namespace gzk::harness {

enum class Angle { pitch, yaw };

Angle angle_from_string(const std::string& s);

/// Square plot in degrees, actual on x and predicted on y, sharing one range
/// that covers both series plus a 5% margin on each side. The root element
/// carries the range as data-min / data-max; markers are circles of class
/// "sample".
std::string pred_vs_actual_svg(const EvalReport& report, Angle angle);

/// Throws std::invalid_argument for an empty report.
void plot_pred_vs_actual(const EvalReport& report, Angle angle, const std::filesystem::path& out);

}  // namespace gzk::harness
