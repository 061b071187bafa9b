#include "gzk/harness/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace gzk::harness {

namespace {

constexpr double kSize = 480.0;   // plot area edge, px
constexpr double kLeft = 70.0;    // room for y tick labels
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;  // room for x tick labels
constexpr double kRight = 20.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

Angle angle_from_string(const std::string& s) {
  if (s == "pitch") return Angle::pitch;
  if (s == "yaw") return Angle::yaw;
  throw std::invalid_argument("unknown angle '" + s + "' (expected pitch or yaw)");
}

std::string pred_vs_actual_svg(const EvalReport& report, Angle angle) {
  if (report.per_sample.empty()) throw std::invalid_argument("plot: report has no samples");
  const double deg = 180.0 / std::numbers::pi;
  const char* name = angle == Angle::pitch ? "pitch" : "yaw";
  std::vector<std::pair<double, double>> pts;
  double lo = 0, hi = 0;
  for (const auto& e : report.per_sample) {
    const double x = (angle == Angle::pitch ? e.truth.pitch : e.truth.yaw) * deg;
    const double y = (angle == Angle::pitch ? e.prediction.pitch : e.prediction.yaw) * deg;
    if (pts.empty()) lo = hi = x;
    lo = std::min({lo, x, y});
    hi = std::max({hi, x, y});
    pts.emplace_back(x, y);
  }
  double span = hi - lo;
  if (span <= 0.0) span = 2.0;  // one distinct value: a 2-degree window around it
  const double mid = 0.5 * (lo + hi);
  lo = mid - 0.5 * span * 1.1;
  hi = mid + 0.5 * span * 1.1;
  auto px = [&](double v) { return kLeft + (v - lo) / (hi - lo) * kSize; };
  auto py = [&](double v) { return kTop + kSize - (v - lo) / (hi - lo) * kSize; };

  const double mae = angle == Angle::pitch ? report.mae_pitch_deg : report.mae_yaw_deg;
  const double width = kLeft + kSize + kRight, height = kTop + kSize + kBottom;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" data-angle=\"" << name << "\" data-min=\"" << num(lo)
     << "\" data-max=\"" << num(hi) << "\" data-plot-left=\"" << kLeft << "\" data-plot-top=\"" << kTop
     << "\" data-plot-size=\"" << kSize << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
     << "<rect class=\"frame\" x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kSize << "\" height=\"" << kSize
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    os << "<text class=\"tick\" x=\"" << num(px(v)) << "\" y=\"" << kTop + kSize + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << fixed(v, 1) << "</text>\n"
       << "<text class=\"tick\" x=\"" << kLeft - 6 << "\" y=\"" << num(py(v) + 4)
       << "\" font-size=\"11\" text-anchor=\"end\">" << fixed(v, 1) << "</text>\n";
  }
  os << "<line class=\"identity\" x1=\"" << num(px(lo)) << "\" y1=\"" << num(py(lo)) << "\" x2=\"" << num(px(hi))
     << "\" y2=\"" << num(py(hi)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& [x, y] : pts)
    os << "<circle class=\"sample\" cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
       << "\" r=\"2.5\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
  os << "<text class=\"xlabel\" x=\"" << kLeft + kSize / 2 << "\" y=\"" << height - 16
     << "\" font-size=\"13\" text-anchor=\"middle\">actual " << name << " (deg)</text>\n"
     << "<text class=\"ylabel\" transform=\"translate(18 " << kTop + kSize / 2
     << ") rotate(-90)\" font-size=\"13\" text-anchor=\"middle\">predicted " << name << " (deg)</text>\n"
     << "<text class=\"mae\" x=\"" << kLeft + 8 << "\" y=\"" << kTop - 12 << "\" font-size=\"13\">MAE " << name
     << " = " << fixed(mae, 3) << " deg (n = " << report.n_samples << ")</text>\n"
     << "</svg>\n";
  return os.str();
}

void plot_pred_vs_actual(const EvalReport& report, Angle angle, const std::filesystem::path& out) {
  const std::string svg = pred_vs_actual_svg(report, angle);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << svg;
}

}  // namespace gzk::harness
