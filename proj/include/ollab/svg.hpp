#pragma once

// Minimal SVG document builder. Output is plain text so plots can be
// structurally checked in tests and diffed between runs.

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ollab/io.hpp"

namespace ollab {

class SvgDoc {
 public:
  SvgDoc(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#444",
            double stroke_width = 1.0) {
    body_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
          << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
          << fmt(stroke_width) << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width = 1.5, const std::string& id = "") {
    body_ << "<polyline";
    if (!id.empty()) body_ << " id=\"" << id << "\"";
    body_ << " fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(stroke_width)
          << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ << ' ';
      body_ << fmt(pts[i].first) << ',' << fmt(pts[i].second);
    }
    body_ << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& cls = "") {
    body_ << "<rect";
    if (!cls.empty()) body_ << " class=\"" << cls << "\"";
    body_ << " x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
          << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 10.0,
            const std::string& anchor = "start", const std::string& fill = "#000") {
    body_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << fmt(size)
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill
          << "\">" << escape(s) << "</text>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << fmt(cx) << "\" cy=\"" << fmt(cy) << "\" r=\"" << fmt(r)
          << "\" fill=\"" << fill << "\"/>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width_) << "\" height=\""
        << fmt(height_) << "\" viewBox=\"0 0 " << fmt(width_) << ' ' << fmt(height_) << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << fmt(width_) << "\" height=\"" << fmt(height_)
        << "\" fill=\"#ffffff\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

  void save(const std::string& path) const { write_text_file(path, str()); }

 private:
  static std::string fmt(double v) {
    // short fixed decimals are plenty for plot coordinates
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '&')
        out += "&amp;";
      else if (c == '<')
        out += "&lt;";
      else if (c == '>')
        out += "&gt;";
      else
        out += c;
    }
    return out;
  }

  double width_, height_;
  std::ostringstream body_;
};

// Affine map from a data interval to a pixel interval.
struct LinScale {
  double d0 = 0.0, d1 = 1.0, p0 = 0.0, p1 = 1.0;
  double operator()(double v) const {
    double t = d1 == d0 ? 0.5 : (v - d0) / (d1 - d0);
    return p0 + t * (p1 - p0);
  }
};

}  // namespace ollab
