#pragma once

// Artifact persistence: CSV tables, JSON/JSONL records, SVG plots.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ternkin/dynamics.hpp"
#include "ternkin/geometry.hpp"

namespace tk::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// Shortest round-trip representation; identical across runs of the same build.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (double c : v) a.push_back(c);
  return a;
}

inline Vec vec_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("expected a non-empty numeric array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument("expected a numeric array");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline json to_json(const Configuration& z) {
  json a = json::array();
  for (std::size_t i = 0; i < z.m(); ++i) a.push_back({{"x", to_json(z.x[i])}, {"v", to_json(z.v[i])}});
  return a;
}

/// Orders indices as in the event: i (centre) then j, k.
inline json event_record(const CollisionEvent& ev, const Configuration& before,
                         const Configuration& after) {
  json idx = json::array({ev.i, ev.j});
  json impact = json::array({to_json(ev.w1)});
  if (ev.kind == EventKind::Ternary) {
    idx.push_back(ev.k);
    impact.push_back(to_json(ev.w2));
  }
  json pre = json::array(), post = json::array();
  for (int p : idx) {
    pre.push_back(to_json(before.v[static_cast<std::size_t>(p)]));
    post.push_back(to_json(after.v[static_cast<std::size_t>(p)]));
  }
  return {{"t", ev.t},   {"kind", to_string(ev.kind)}, {"indices", idx},     {"impact", impact},
          {"pre", pre},  {"post", post},               {"class", to_string(ev.cls)}};
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    row_strings(header);
  }
  void row(const std::vector<double>& values) {
    std::vector<std::string> s;
    s.reserve(values.size());
    for (double v : values) s.push_back(fmt(v));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
  std::vector<double> values(std::size_t c) const {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.at(c));
    return v;
  }
};

/// Numeric CSV with a header line. Non-numeric cells read as NaN.
inline Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Table t;
  std::string line;
  const auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return cells;
  };
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    for (const auto& c : split(line)) {
      try {
        r.push_back(std::stod(c));
      } catch (...) {
        r.push_back(std::nan(""));
      }
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// FNV-1a over the canonical (key-sorted, compact) serialization.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// SVG line plots

struct Series {
  std::string label;
  std::vector<double> x, y, err;
};

struct PlotSpec {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  std::vector<std::string> notes{};  ///< annotation lines drawn top-left
};

namespace detail {

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      default: o += c;
    }
  }
  return o;
}

}  // namespace detail

/// Returns false (and writes nothing) when no series has a plottable point.
inline bool write_svg_plot(const fs::path& path, const PlotSpec& spec, const std::vector<Series>& series) {
  const auto tx = [&](double v) { return spec.logx ? std::log10(v) : v; };
  const auto ty = [&](double v) { return spec.logy ? std::log10(v) : v; };
  const auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.logx || x > 0) && (!spec.logy || y > 0);
  };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  std::size_t points = 0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      ++points;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (points == 0) return false;
  if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
  if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  const auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream o(path);
  if (!o) throw std::runtime_error("cannot write " + path.string());
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
    << detail::escape(spec.title) << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double gx = L + (W - L - R) * k / 4.0, gy = H - B - (H - T - B) * k / 4.0;
    const double lx = spec.logx ? std::pow(10.0, fx) : fx, ly = spec.logy ? std::pow(10.0, fy) : fy;
    char bx[32], by[32];
    std::snprintf(bx, sizeof bx, "%.3g", lx);
    std::snprintf(by, sizeof by, "%.3g", ly);
    o << "<text x=\"" << gx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << bx << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << by << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << detail::escape(spec.xlabel) << (spec.logx ? " (log)" : "") << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\">" << detail::escape(spec.ylabel) << (spec.logy ? " (log)" : "")
    << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* col = colors[si % 6];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      if (i < s.err.size() && s.err[i] > 0 && usable(s.x[i], s.y[i] - s.err[i])) {
        o << "<line x1=\"" << px(s.x[i]) << "\" x2=\"" << px(s.x[i]) << "\" y1=\"" << py(s.y[i] - s.err[i])
          << "\" y2=\"" << py(s.y[i] + s.err[i]) << "\" stroke=\"" << col << "\"/>\n";
      }
      if (s.x.size() <= 40)
        o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << col
          << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"" << pts.str() << "\"/>\n";
    o << "<text x=\"" << W - R - 8 << "\" y=\"" << T + 16 + 16 * si << "\" text-anchor=\"end\" fill=\""
      << col << "\">" << detail::escape(s.label) << "</text>\n";
  }
  for (std::size_t n = 0; n < spec.notes.size(); ++n)
    o << "<text x=\"" << L + 8 << "\" y=\"" << T + 16 + 16 * n << "\">" << detail::escape(spec.notes[n])
      << "</text>\n";
  o << "</svg>\n";
  return true;
}

}  // namespace tk::io
