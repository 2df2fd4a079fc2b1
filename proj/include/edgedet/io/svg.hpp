#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "edgedet/io/image.hpp"
#include "edgedet/metrics.hpp"

namespace edgedet::io {

inline std::string base64(const std::vector<std::uint8_t>& in) {
  static const char* kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    const std::uint32_t n = (static_cast<std::uint32_t>(in[i]) << 16) |
                            (i + 1 < in.size() ? static_cast<std::uint32_t>(in[i + 1]) << 8 : 0u) |
                            (i + 2 < in.size() ? static_cast<std::uint32_t>(in[i + 2]) : 0u);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < in.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < in.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
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

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Precision-recall step curve for one class, 480x400 plot area with unit axes.
inline std::string pr_curve_svg(const PRCurve& c, const std::string& class_name, double ap50) {
  const double x0 = 60, y0 = 20, w = 400, h = 340;
  auto px = [&](double r) { return detail::num(x0 + r * w); };
  auto py = [&](double p) { return detail::num(y0 + (1 - p) * h); };
  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"400\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"480\" height=\"400\" fill=\"white\"/>\n";
  s += "<rect x=\"60\" y=\"20\" width=\"400\" height=\"340\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; ++i) {
    const double t = i / 10.0;
    s += "<text x=\"" + px(t) + "\" y=\"376\" text-anchor=\"middle\">" + detail::num(t).substr(0, 3) + "</text>\n";
    s += "<text x=\"54\" y=\"" + detail::num(y0 + (1 - t) * h + 4) + "\" text-anchor=\"end\">" +
         detail::num(t).substr(0, 3) + "</text>\n";
  }
  s += "<text x=\"260\" y=\"395\" text-anchor=\"middle\">Recall</text>\n";
  s += "<text x=\"16\" y=\"190\" text-anchor=\"middle\" transform=\"rotate(-90 16 190)\">Precision</text>\n";
  std::string pts = px(0) + "," + py(c.points.empty() ? 0 : c.precision(0));
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    pts += " " + px(c.recall(i)) + "," + py(c.precision(i));
  }
  s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  s += "<text x=\"450\" y=\"40\" text-anchor=\"end\">" + xml_escape(class_name) + " AP@0.5 " +
       detail::num(ap50) + "</text>\n</svg>\n";
  return s;
}

// The image embedded as PNG with one labelled rectangle per detection.
inline std::string annotated_svg(const Image& img, const std::vector<Detection>& dets,
                                 const std::vector<std::string>& names) {
  static const char* kColors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4"};
  const std::string w = std::to_string(img.width), h = std::to_string(img.height);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + w + "\" height=\"" + h +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<image width=\"" + w + "\" height=\"" + h + "\" href=\"data:image/png;base64," +
       base64(encode_png(img)) + "\"/>\n";
  for (const Detection& d : dets) {
    const char* color = kColors[static_cast<std::size_t>(d.class_id) % 6];
    const std::string label =
        (d.class_id >= 0 && static_cast<std::size_t>(d.class_id) < names.size())
            ? names[static_cast<std::size_t>(d.class_id)]
            : std::to_string(d.class_id);
    s += "<rect x=\"" + detail::num(d.box.x1) + "\" y=\"" + detail::num(d.box.y1) + "\" width=\"" +
         detail::num(d.box.x2 - d.box.x1) + "\" height=\"" + detail::num(d.box.y2 - d.box.y1) +
         "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + detail::num(d.box.x1 + 2) + "\" y=\"" + detail::num(d.box.y1 + 12) +
         "\" fill=\"" + color + "\">" + xml_escape(label) + " " + detail::num(d.confidence) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace edgedet::io
