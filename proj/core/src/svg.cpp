#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "scmkit/error.hpp"
#include "scmkit/report.hpp"

namespace scmkit {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 40.0;

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

class Canvas {
 public:
  Canvas(const std::vector<int>& times, double lo, double hi) : t0_(times.front()), t1_(times.back()) {
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    lo_ = lo - pad;
    hi_ = hi + pad;
  }

  double x(double year) const {
    const double span = t1_ > t0_ ? t1_ - t0_ : 1.0;
    return kLeft + (year - t0_) / span * (kWidth - kLeft - kRight);
  }
  double y(double value) const { return kTop + (hi_ - value) / (hi_ - lo_) * (kHeight - kTop - kBottom); }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double t0_, t1_, lo_, hi_;
};

std::string header(std::string_view title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\">\n";
  s += "<rect width=\"800\" height=\"480\" fill=\"white\"/>\n";
  s += "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
       xml_escape(title) + "</text>\n";
  return s;
}

std::string axes(const Canvas& c, const std::vector<int>& times, int treatment_time) {
  std::string s;
  const double base = kHeight - kBottom;
  s += "<line class=\"axis\" x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(base) + "\" x2=\"" + fmt2(kWidth - kRight) +
       "\" y2=\"" + fmt2(base) + "\" stroke=\"black\"/>\n";
  s += "<line class=\"axis\" x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(kTop) + "\" x2=\"" + fmt2(kLeft) + "\" y2=\"" +
       fmt2(base) + "\" stroke=\"black\"/>\n";
  for (int year : {times.front(), treatment_time, times.back()})
    s += "<text x=\"" + fmt2(c.x(year)) + "\" y=\"" + fmt2(base + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + std::to_string(year) + "</text>\n";
  s += "<line class=\"treatment-rule\" x1=\"" + fmt2(c.x(treatment_time)) + "\" y1=\"" + fmt2(kTop) + "\" x2=\"" +
       fmt2(c.x(treatment_time)) + "\" y2=\"" + fmt2(base) + "\" stroke=\"#444\" stroke-dasharray=\"4 4\"/>\n";
  return s;
}

std::string polyline(const Canvas& c, const std::vector<int>& times, const std::vector<double>& values,
                     std::string_view cls, std::string_view style) {
  std::string pts;
  for (std::size_t t = 0; t < times.size(); ++t) {
    if (!std::isfinite(values[t])) continue;
    if (!pts.empty()) pts += ' ';
    pts += fmt2(c.x(times[t])) + "," + fmt2(c.y(values[t]));
  }
  return "<polyline class=\"" + std::string(cls) + "\" fill=\"none\" " + std::string(style) + " points=\"" + pts +
         "\"/>\n";
}

void extend(double& lo, double& hi, const std::vector<double>& xs) {
  for (double x : xs)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
}

}  // namespace

std::string gaps_svg(const Report& r) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  extend(lo, hi, r.gaps.actual);
  extend(lo, hi, r.gaps.synthetic);
  const Canvas c(r.gaps.times, lo, hi);
  std::string s = header(r.spec.treated_unit + ": actual vs synthetic " + r.spec.outcome);
  s += axes(c, r.gaps.times, r.gaps.treatment_time);
  s += polyline(c, r.gaps.times, r.gaps.actual, "actual", "stroke=\"black\" stroke-width=\"2\"");
  s += polyline(c, r.gaps.times, r.gaps.synthetic, "synthetic",
                "stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6 4\"");
  s += "</svg>\n";
  return s;
}

std::string placebo_svg(const Report& r) {
  if (!r.placebo) throw Error(ErrorCode::InvalidArgument, "report has no placebo results");
  double lo = 0.0, hi = 0.0;
  for (const auto& u : r.placebo->units)
    if (u.retained) extend(lo, hi, u.gap);
  const Canvas c(r.gaps.times, lo, hi);
  std::string s = header(r.spec.treated_unit + ": placebo gaps in " + r.spec.outcome);
  s += axes(c, r.gaps.times, r.gaps.treatment_time);
  s += "<line class=\"zero-line\" x1=\"" + fmt2(kLeft) + "\" y1=\"" + fmt2(c.y(0.0)) + "\" x2=\"" +
       fmt2(kWidth - kRight) + "\" y2=\"" + fmt2(c.y(0.0)) + "\" stroke=\"#888\"/>\n";
  for (const auto& u : r.placebo->units)
    if (u.retained && !u.treated)
      s += polyline(c, r.gaps.times, u.gap, "placebo", "stroke=\"#b0b0b0\" stroke-width=\"1\"");
  for (const auto& u : r.placebo->units)
    if (u.treated) s += polyline(c, r.gaps.times, u.gap, "treated", "stroke=\"black\" stroke-width=\"3\"");
  s += "</svg>\n";
  return s;
}

}  // namespace scmkit
