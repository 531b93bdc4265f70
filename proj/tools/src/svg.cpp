#include "easbo_cli/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "easbo/errors.hpp"

namespace easbo::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

class Canvas {
public:
    explicit Canvas(const PlotText& text) {
        // "--" is not allowed inside XML comments.
        std::string meta = text.metadata;
        for (std::size_t p; (p = meta.find("--")) != std::string::npos;) meta.replace(p, 2, "- -");
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        if (!meta.empty()) out_ << "<!-- " << meta << " -->\n";
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        text_at(kWidth / 2, 22, text.title, "middle", 14);
        text_at(kWidth / 2, kHeight - 10, text.x_label, "middle");
        out_ << "<text transform=\"translate(16," << num(kTop + (kHeight - kTop - kBottom) / 2)
             << ") rotate(-90)\" text-anchor=\"middle\">" << escape(text.y_label) << "</text>\n";
    }

    std::ostringstream& raw() { return out_; }

    void text_at(double x, double y, const std::string& s, const char* anchor = "start", int size = 12) {
        out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\" font-size=\""
             << size << "\">" << escape(s) << "</text>\n";
    }

    void line(double x0, double y0, double x1, double y1, const std::string& color, double width = 1) {
        out_ << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y1)
             << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"/>\n";
    }

    void save(const std::filesystem::path& path) {
        out_ << "</svg>\n";
        std::ofstream f(path, std::ios::binary);
        f << out_.str();
        if (!f) throw Error("cannot write " + path.string());
    }

private:
    std::ostringstream out_;
};

struct Axis {
    double lo, hi;
    bool log = false;
    double map(double v, double px0, double px1) const {
        const double a = log ? std::log10(v) : v;
        const double t = hi > lo ? (a - lo) / (hi - lo) : 0.5;
        return px0 + t * (px1 - px0);
    }
};

Axis make_axis(double lo, double hi, bool log) {
    Axis a{lo, hi, log};
    if (log) {
        a.lo = std::log10(lo);
        a.hi = std::log10(hi);
    }
    const double pad = a.hi > a.lo ? 0.05 * (a.hi - a.lo) : 0.5;
    a.lo -= pad;
    a.hi += pad;
    return a;
}

void draw_axes(Canvas& c, const Axis& x, const Axis& y) {
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    c.line(x0, y0, x1, y0, "black");
    c.line(x0, y0, x0, y1, "black");
    for (int i = 0; i <= 4; ++i) {
        const double fx = x.lo + (x.hi - x.lo) * i / 4.0;
        const double px = x0 + (x1 - x0) * i / 4.0;
        c.line(px, y0, px, y0 + 4, "black");
        c.text_at(px, y0 + 18, tick_label(x.log ? std::pow(10.0, fx) : fx), "middle");
        const double fy = y.lo + (y.hi - y.lo) * i / 4.0;
        const double py = y0 + (y1 - y0) * i / 4.0;
        c.line(x0 - 4, py, x0, py, "black");
        c.text_at(x0 - 6, py + 4, tick_label(y.log ? std::pow(10.0, fy) : fy), "end");
    }
}

// Piecewise-linear approximation of the viridis map.
std::string colormap(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(i);
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                  static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                  static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
    return buf;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw PreconditionError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void write_scatter_svg(const std::vector<ScatterSeries>& series, const PlotText& text, bool log_y,
                       const std::filesystem::path& path) {
    for (const auto& s : series)
        for (double v : s.y)
            if (!(v > 0)) log_y = false;
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_y && !(s.y[i] > 0)) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = log_y ? 1 : 0, ymax = log_y ? 10 : 1;
    Canvas c(text);
    const Axis ax = make_axis(xmin, xmax, false), ay = make_axis(ymin, ymax, log_y);
    draw_axes(c, ax, ay);
    double legend_y = kTop + 10;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_y && !(s.y[i] > 0)) continue;
            c.raw() << "<circle cx=\"" << num(ax.map(s.x[i], kLeft, kWidth - kRight)) << "\" cy=\""
                    << num(ay.map(s.y[i], kHeight - kBottom, kTop)) << "\" r=\"3.5\" fill=\"" << s.color
                    << "\" fill-opacity=\"0.8\"/>\n";
        }
        c.raw() << "<circle cx=\"" << num(kWidth - kRight - 110) << "\" cy=\"" << num(legend_y - 4)
                << "\" r=\"4\" fill=\"" << s.color << "\"/>\n";
        c.text_at(kWidth - kRight - 100, legend_y, s.label);
        legend_y += 16;
    }
    c.save(path);
}

void write_boxplot_svg(const std::vector<BoxGroup>& groups, const PlotText& text, const std::filesystem::path& path) {
    double ymin = INFINITY, ymax = -INFINITY;
    for (const auto& g : groups) {
        for (double v : g.values) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
    Canvas c(text);
    const Axis ay = make_axis(ymin, ymax, false);
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom;
    c.line(x0, y0, x1, y0, "black");
    c.line(x0, y0, x0, kTop, "black");
    for (int i = 0; i <= 4; ++i) {
        const double fy = ay.lo + (ay.hi - ay.lo) * i / 4.0;
        const double py = y0 + (kTop - y0) * i / 4.0;
        c.line(x0 - 4, py, x0, py, "black");
        c.text_at(x0 - 6, py + 4, tick_label(fy), "end");
    }
    const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(groups.size(), 1));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double cx = x0 + slot * (static_cast<double>(g) + 0.5);
        c.text_at(cx, y0 + 18, groups[g].label, "middle");
        if (groups[g].values.empty()) continue;
        const auto& v = groups[g].values;
        const double q1 = quantile(v, 0.25), med = quantile(v, 0.5), q3 = quantile(v, 0.75);
        const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
        auto py = [&](double val) { return ay.map(val, y0, kTop); };
        const double half = std::min(40.0, slot / 4);
        c.line(cx, py(lo), cx, py(q1), "black");
        c.line(cx, py(q3), cx, py(hi), "black");
        c.line(cx - half / 2, py(lo), cx + half / 2, py(lo), "black");
        c.line(cx - half / 2, py(hi), cx + half / 2, py(hi), "black");
        c.raw() << "<rect x=\"" << num(cx - half) << "\" y=\"" << num(py(q3)) << "\" width=\"" << num(2 * half)
                << "\" height=\"" << num(std::max(py(q1) - py(q3), 0.5)) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        c.line(cx - half, py(med), cx + half, py(med), "#d62728", 2);
    }
    c.save(path);
}

void write_surface_svg(const SimplicialMesh& mesh, const std::vector<double>& values, const std::vector<Marker>& markers,
                       const PlotText& text, const std::filesystem::path& path) {
    if (values.size() != mesh.num_vertices()) throw PreconditionError("surface field size does not match the mesh");
    const Vec3 extent = mesh.bounding_box_max() - mesh.bounding_box_min();
    int axis = 0;
    extent.maxCoeff(&axis);
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const Vec3 center = mesh.centroid();
    std::vector<std::array<double, 2>> uv(mesh.num_vertices());
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const Vec3 d = mesh.vertex(i) - center;
        uv[i] = {std::atan2(d[a2], d[a1]), d[axis]};
    }
    const double vmin = *std::min_element(values.begin(), values.end());
    const double vmax = *std::max_element(values.begin(), values.end());
    const double vlo = mesh.bounding_box_min()[axis] - center[axis], vhi = mesh.bounding_box_max()[axis] - center[axis];

    Canvas c(text);
    const double x0 = kLeft, x1 = kWidth - kRight - 50, y0 = kHeight - kBottom, y1 = kTop;
    auto px = [&](double u) { return x0 + (u + std::numbers::pi) / (2 * std::numbers::pi) * (x1 - x0); };
    auto py = [&](double v) { return y0 + (v - vlo) / std::max(vhi - vlo, 1e-12) * (y1 - y0); };
    for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
        const auto s = mesh.simplex(e);
        double umin = INFINITY, umax = -INFINITY, mean = 0;
        for (int k = 0; k < 3; ++k) {
            umin = std::min(umin, uv[s[k]][0]);
            umax = std::max(umax, uv[s[k]][0]);
            mean += values[s[k]] / 3.0;
        }
        if (umax - umin > std::numbers::pi) continue;
        const std::string color = colormap(vmax > vmin ? (mean - vmin) / (vmax - vmin) : 0.5);
        c.raw() << "<polygon points=\"";
        for (int k = 0; k < 3; ++k) c.raw() << num(px(uv[s[k]][0])) << ',' << num(py(uv[s[k]][1])) << ' ';
        c.raw() << "\" fill=\"" << color << "\" stroke=\"" << color << "\" stroke-width=\"0.3\"/>\n";
    }
    const double bar_top = kTop + 45;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto& m = markers[i];
        if (m.node.index >= mesh.num_vertices()) continue;
        const auto& p = uv[m.node.index];
        const double ly = kTop + 14.0 * static_cast<double>(i);
        c.raw() << "<circle cx=\"" << num(px(p[0])) << "\" cy=\"" << num(py(p[1])) << "\" r=\"5\" fill=\"none\" stroke=\""
                << m.color << "\" stroke-width=\"2\"/>\n";
        c.raw() << "<circle cx=\"" << num(x1 + 12) << "\" cy=\"" << num(ly - 4) << "\" r=\"4\" fill=\"#888888\" stroke=\""
                << m.color << "\" stroke-width=\"2\"/>\n";
        c.text_at(x1 + 20, ly, m.label, "start", 10);
    }
    for (int i = 0; i < 20; ++i) {
        const double h = (y0 - bar_top) / 20.0;
        c.raw() << "<rect x=\"" << num(x1 + 10) << "\" y=\"" << num(y0 - h * (i + 1)) << "\" width=\"12\" height=\""
                << num(h + 0.5) << "\" fill=\"" << colormap(i / 19.0) << "\"/>\n";
    }
    c.text_at(x1 + 26, y0, tick_label(vmin), "start", 10);
    c.text_at(x1 + 26, bar_top + 8, tick_label(vmax), "start", 10);
    c.save(path);
}

}  // namespace easbo::cli
