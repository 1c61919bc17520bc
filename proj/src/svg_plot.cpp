#include "qgeq/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "qgeq/common.hpp"
#include "qgeq/io.hpp"

namespace qgeq {

namespace {

const char* kCycle[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
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

// 1-2-5 ticks covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step - 1e-9) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(double pad) {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-300) {
      const double w = std::max(std::abs(lo) * 0.05, 1e-3);
      lo -= w;
      hi += w;
    }
    const double w = (hi - lo) * pad;
    lo -= w;
    hi += w;
  }
};

struct Frame {
  double x0, y0, w, h;  // plot area in pixels
  Range xr, yr;
  double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

void header(std::ostringstream& o, int width, int height, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  o << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\"" << fmt(f.w) << "\" height=\""
    << fmt(f.h) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : nice_ticks(f.xr.lo, f.xr.hi)) {
    const double x = f.px(t);
    o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(f.y0 + f.h) << "\" x2=\"" << fmt(x) << "\" y2=\""
      << fmt(f.y0 + f.h + 5) << "\" stroke=\"black\"/>";
    o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(f.y0 + f.h + 18) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t : nice_ticks(f.yr.lo, f.yr.hi)) {
    const double y = f.py(t);
    o << "<line x1=\"" << fmt(f.x0 - 5) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(f.x0) << "\" y2=\"" << fmt(y)
      << "\" stroke=\"black\"/>";
    o << "<text x=\"" << fmt(f.x0 - 8) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt(f.x0 + f.w / 2) << "\" y=\"" << fmt(f.y0 + f.h + 40)
    << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
  const double ly = f.y0 + f.h / 2;
  o << "<text x=\"18\" y=\"" << fmt(ly) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << fmt(ly)
    << ")\">" << escape(ylabel) << "</text>\n";
}

}  // namespace

std::string LineChart::render(int width, int height) const {
  Frame f{75.0, 56.0, width - 75.0 - 20.0, height - 56.0 - 60.0, {}, {}};
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        f.xr.add(s.x[i]);
        f.yr.add(s.y[i]);
      }
    }
  }
  f.xr.finish(0.0);
  f.yr.finish(0.05);

  std::ostringstream o;
  header(o, width, height, title);
  axes(o, f, xlabel, ylabel);
  if (zero_line && f.yr.lo < 0.0 && f.yr.hi > 0.0) {
    o << "<line x1=\"" << fmt(f.x0) << "\" y1=\"" << fmt(f.py(0.0)) << "\" x2=\"" << fmt(f.x0 + f.w) << "\" y2=\""
      << fmt(f.py(0.0)) << "\" stroke=\"#888\" stroke-dasharray=\"2,3\"/>\n";
  }
  for (const auto& s : series) {
    // non-finite points break the line
    std::vector<std::string> runs(1);
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        if (!runs.back().empty()) runs.emplace_back();
        continue;
      }
      runs.back() += fmt(f.px(s.x[i])) + "," + fmt(f.py(s.y[i])) + " ";
    }
    for (const auto& r : runs) {
      if (r.empty()) continue;
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << r << "\"/>\n";
    }
  }
  // legend in one row between the title and the plot
  double lx = f.x0;
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    const double ly = f.y0 - 8;
    o << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(lx + 24) << "\" y2=\""
      << fmt(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"1.6\""
      << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>";
    o << "<text x=\"" << fmt(lx + 30) << "\" y=\"" << fmt(ly) << "\">" << escape(s.label) << "</text>\n";
    lx += 50 + 7.0 * static_cast<double>(s.label.size());
  }
  o << "</svg>\n";
  return o.str();
}

std::string RegionMap::render(int width, int height) const {
  if (xs.empty() || ys.empty() || categories.size() != xs.size() * ys.size()) {
    throw Error("RegionMap: categories must have xs.size() * ys.size() entries");
  }
  Frame f{75.0, 40.0, width - 75.0 - 150.0, height - 40.0 - 60.0, {}, {}};
  // cells extend half a spacing beyond the outer nodes
  auto edges = [](const std::vector<double>& v) {
    std::vector<double> e(v.size() + 1);
    for (std::size_t i = 1; i < v.size(); ++i) e[i] = 0.5 * (v[i - 1] + v[i]);
    const double h0 = v.size() > 1 ? v[1] - v[0] : 1.0;
    const double h1 = v.size() > 1 ? v[v.size() - 1] - v[v.size() - 2] : 1.0;
    e.front() = v.front() - 0.5 * h0;
    e.back() = v.back() + 0.5 * h1;
    return e;
  };
  const auto ex = edges(xs), ey = edges(ys);
  f.xr.add(ex.front());
  f.xr.add(ex.back());
  f.yr.add(ey.front());
  f.yr.add(ey.back());
  f.xr.finish(0.0);
  f.yr.finish(0.0);

  auto color_of = [&](const std::string& c) -> std::string {
    for (const auto& [name, col] : palette) {
      if (name == c) return col;
    }
    return "#dddddd";
  };

  std::ostringstream o;
  header(o, width, height, title);
  for (std::size_t iy = 0; iy < ys.size(); ++iy) {
    // one rect per run of equal labels; rows overlap by half a pixel to hide seams
    for (std::size_t ix = 0; ix < xs.size();) {
      const std::string& c = categories[iy * xs.size() + ix];
      std::size_t end = ix + 1;
      while (end < xs.size() && categories[iy * xs.size() + end] == c) ++end;
      const double x = f.px(ex[ix]), y = f.py(ey[iy + 1]);
      const double hy = f.py(ey[iy]) - y + (iy > 0 ? 0.5 : 0.0);
      o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(f.px(ex[end]) - x)
        << "\" height=\"" << fmt(hy) << "\" fill=\"" << color_of(c) << "\"/>\n";
      ix = end;
    }
  }
  axes(o, f, xlabel, ylabel);
  for (const auto& [mx, my] : marks) {
    o << "<circle cx=\"" << fmt(f.px(mx)) << "\" cy=\"" << fmt(f.py(my))
      << "\" r=\"5\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  double ly = f.y0 + 14;
  const double lx = f.x0 + f.w + 15;
  for (const auto& [name, col] : palette) {
    o << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 10) << "\" width=\"14\" height=\"12\" fill=\"" << col
      << "\" stroke=\"black\" stroke-width=\"0.5\"/>";
    o << "<text x=\"" << fmt(lx + 20) << "\" y=\"" << fmt(ly) << "\">" << escape(name) << "</text>\n";
    ly += 18;
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << svg;
  if (!out) throw Error("write failed: " + path.string());
}

std::string plot_surface(const EntropySurface& surface, const std::vector<EquivalenceLabel>& labels,
                         const std::vector<std::pair<double, double>>& marks) {
  if (labels.size() != surface.size()) throw Error("plot_surface: label count mismatch");
  RegionMap map;
  map.title = "Equivalence of ensembles";
  map.xlabel = "circulation Gamma";
  map.ylabel = "energy E";
  map.xs = surface.circulations();
  map.ys = surface.energies();
  map.categories.resize(surface.size());
  for (std::size_t iy = 0; iy < surface.rows(); ++iy) {
    for (std::size_t ix = 0; ix < surface.cols(); ++ix) {
      map.categories[iy * surface.cols() + ix] = to_string(labels[surface.index(iy, ix)].kind);
    }
  }
  map.palette = {{"full", "#66a61e"},
                 {"partial", "#e6ab02"},
                 {"nonequivalent", "#d95f02"},
                 {"unresolved", "#7570b3"},
                 {"inadmissible", "#d9d9d9"}};
  map.marks = marks;
  return map.render();
}

std::string plot_section(const EntropySurface& surface, SectionAxis axis, double value) {
  if (surface.size() == 0) throw Error("plot_section: empty surface");
  const auto& line = axis == SectionAxis::fixed_energy ? surface.energies() : surface.circulations();
  const auto nearest = static_cast<std::size_t>(
      std::min_element(line.begin(), line.end(),
                       [&](double a, double b) { return std::abs(a - value) < std::abs(b - value); }) -
      line.begin());
  const std::vector<double> hull = concave_hull(surface);
  Series s{"S", {}, {}, "#1f77b4", false};
  Series h{"concave hull S**", {}, {}, "#d62728", true};
  const std::size_t count = axis == SectionAxis::fixed_energy ? surface.cols() : surface.rows();
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t k = axis == SectionAxis::fixed_energy ? surface.index(nearest, t) : surface.index(t, nearest);
    const double x = axis == SectionAxis::fixed_energy ? surface[k].Gamma : surface[k].E;
    const bool u = surface.usable(k);
    s.x.push_back(x);
    s.y.push_back(u ? surface[k].S : std::nan(""));
    h.x.push_back(x);
    h.y.push_back(u ? hull[k] : std::nan(""));
  }
  LineChart chart;
  if (axis == SectionAxis::fixed_energy) {
    chart.title = "Entropy at E = " + tick_label(line[nearest]);
    chart.xlabel = "circulation Gamma";
  } else {
    chart.title = "Entropy at Gamma = " + tick_label(line[nearest]);
    chart.xlabel = "energy E";
  }
  chart.ylabel = "S";
  chart.series = {s, h};
  return chart.render();
}

std::string plot_velocity(const std::vector<std::pair<std::string, std::filesystem::path>>& profiles) {
  LineChart chart;
  chart.title = "Mean zonal velocity";
  chart.xlabel = "x2";
  chart.ylabel = "v1";
  chart.zero_line = true;
  std::size_t n = 0;
  for (const auto& [label, path] : profiles) {
    const CsvTable t = read_csv(path);
    const std::size_t cx = t.column("x2"), cv = t.column("v1");
    Series s;
    s.label = label;
    s.color = kCycle[n++ % std::size(kCycle)];
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      s.x.push_back(t.number(r, cx));
      s.y.push_back(t.number(r, cv));
    }
    chart.series.push_back(std::move(s));
  }
  return chart.render();
}

}  // namespace qgeq
