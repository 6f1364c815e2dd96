#include "driftgce/svg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <sstream>

#include "driftgce/io.hpp"

namespace driftgce {

namespace {

using nlohmann::json;

constexpr const char* kPreColor = "#3b6ea8";
constexpr const char* kPostColor = "#d9822b";
constexpr const char* kClassColor[2] = {"#4c72b0", "#c44e52"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
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

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class Svg {
public:
    Svg(double width, double height, const std::string& title, const SvgOptions& options) {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
             << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width) << ' '
             << num(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        if (options.timestamp) {
            out_ << "<!-- generated: "
                 << (options.timestamp_text.empty() ? utc_now() : options.timestamp_text)
                 << " -->\n";
        }
        out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        text(width / 2, 18, title, "middle", 14);
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0, const std::string& extra = "") {
        out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
             << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
             << num(width) << '"' << extra << "/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& extra = "") {
        out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
             << "\" height=\"" << num(h) << "\" fill=\"" << fill << '"' << extra << "/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& fill,
                const std::string& extra = "") {
        out_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
             << "\" fill=\"" << fill << '"' << extra << "/>\n";
    }

    void text(double x, double y, const std::string& s, const std::string& anchor = "start",
              double size = 11, const std::string& extra = "") {
        out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
             << "\" font-size=\"" << num(size) << '"' << extra << '>' << escape(s)
             << "</text>\n";
    }

    void raw(const std::string& s) { out_ << s; }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    std::ostringstream out_;
};

std::string data(const std::string& name, double v) {
    return " data-" + name + "=\"" + format_double(v) + "\"";
}

std::string data(const std::string& name, const std::string& v) {
    return " data-" + name + "=\"" + escape(v) + "\"";
}

const json* find_group(const json& groups, const std::string& key) {
    for (const auto& g : groups) {
        if (g.at("key").get<std::string>() == key) return &g;
    }
    return nullptr;
}

std::string short_key(const std::string& key) {
    // "Class 1, Pair 2" -> "C1P2"
    std::string out;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (key.compare(i, 6, "Class ") == 0) {
            out += 'C';
            i += 5;
        } else if (key.compare(i, 5, "Pair ") == 0) {
            out += 'P';
            i += 4;
        } else if (std::isdigit(static_cast<unsigned char>(key[i]))) {
            out += key[i];
        }
    }
    return out;
}

std::string pair_label(const json& change) {
    return short_key(change.at("pre_key").get<std::string>()) + "→" +
           short_key(change.at("post_key").get<std::string>());
}

double nice_extent(double v) {
    if (!(v > 0.0)) return 1.0;
    const double p = std::pow(10.0, std::floor(std::log10(v)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (m * p >= v) return m * p;
    }
    return 10.0 * p;
}

// Horizontal bars around a zero line; values in [-extent, extent].
struct BarAxis {
    double x0, width, extent;
    double at(double v) const { return x0 + (v + extent) / (2.0 * extent) * width; }
};

void draw_legend(Svg& svg, double x, double y) {
    svg.rect(x, y - 9, 10, 10, kPreColor);
    svg.text(x + 14, y, "pre-drift");
    svg.rect(x + 80, y - 9, 10, 10, kPostColor);
    svg.text(x + 94, y, "post-drift");
}

}  // namespace

std::string render_panel_a(const json& report, const SvgOptions& options) {
    const auto& changes = report.at("explanation_layer").at("changes");
    const std::size_t dim = report.at("dim").get<std::size_t>();
    const auto& groups_pre = report.at("explanation_layer").at("groups_pre");
    const auto& groups_post = report.at("explanation_layer").at("groups_post");

    double extent = 0.0;
    for (const auto& c : changes) {
        for (const auto* side : {&groups_pre, &groups_post}) {
            const auto key = c.at(side == &groups_pre ? "pre_key" : "post_key").get<std::string>();
            if (const auto* g = find_group(*side, key)) {
                for (double v : g->at("cfav").get<Vector>()) extent = std::max(extent, std::abs(v));
            }
        }
    }
    extent = nice_extent(extent);

    const double row_h = 14.0;
    const double block_h = static_cast<double>(dim) * 2.0 * row_h + 16.0;
    const double top = 50.0;
    const double width = 560.0;
    const double height = top + std::max<double>(1, changes.size()) * block_h + 40.0;
    Svg svg(width, height, "(a) CFAV per feature, matched pairs", options);
    draw_legend(svg, 20, 38);
    const BarAxis axis{150.0, 360.0, extent};
    svg.line(axis.at(0), top - 4, axis.at(0), height - 30, "#444");
    svg.text(axis.at(-extent), height - 16, format_double(-extent), "middle");
    svg.text(axis.at(0), height - 16, "0", "middle");
    svg.text(axis.at(extent), height - 16, format_double(extent), "middle");

    if (changes.empty()) svg.text(width / 2, top + 20, "no matched pairs", "middle");
    double y = top;
    for (const auto& c : changes) {
        const auto pre_key = c.at("pre_key").get<std::string>();
        const auto post_key = c.at("post_key").get<std::string>();
        svg.text(10, y + 10, pre_key + " → " + post_key, "start", 11, " font-weight=\"bold\"");
        const json* g[2] = {find_group(groups_pre, pre_key), find_group(groups_post, post_key)};
        for (std::size_t f = 0; f < dim; ++f) {
            svg.text(20, y + 24 + static_cast<double>(f) * 2 * row_h, "x" + std::to_string(f + 1));
            for (int s = 0; s < 2; ++s) {
                if (g[s] == nullptr) continue;
                const double v = g[s]->at("cfav").at(f).get<double>();
                const double by = y + 14 + (static_cast<double>(f) * 2 + s) * row_h;
                const double a = axis.at(0), b = axis.at(v);
                svg.rect(std::min(a, b), by, std::abs(b - a), row_h - 3, s == 0 ? kPreColor : kPostColor,
                         data("group", s == 0 ? pre_key : post_key) +
                             data("window", s == 0 ? "pre" : "post") +
                             data("feature", "x" + std::to_string(f + 1)) + data("value", v));
            }
        }
        y += block_h;
    }
    return svg.finish();
}

std::string render_panel_b(const json& report, const SvgOptions& options) {
    const auto& ex = report.at("explanation_layer");
    const auto& groups_pre = ex.at("groups_pre");
    const auto& groups_post = ex.at("groups_post");
    const std::size_t dim = report.at("dim").get<std::size_t>();

    const double size = 420.0, margin = 50.0;
    Svg svg(size + 2 * margin + 140, size + 2 * margin, "(b) GCE centroids and local d_mae", options);
    auto px = [&](const json& g) {
        const auto c = g.at("centroid").get<Vector>();
        const double x = c.empty() ? 0.0 : c[0];
        const double y = dim > 1 ? c[1] : 0.5;
        return std::pair{margin + std::clamp(x, 0.0, 1.0) * size,
                         margin + (1.0 - std::clamp(y, 0.0, 1.0)) * size};
    };
    svg.rect(margin, margin, size, size, "none", " stroke=\"#888\"");
    svg.text(margin + size / 2, margin + size + 30, "x1", "middle");
    svg.text(margin - 30, margin + size / 2, dim > 1 ? "x2" : "", "middle");
    for (double t : {0.0, 0.5, 1.0}) {
        svg.text(margin + t * size, margin + size + 14, num(t), "middle", 9);
        svg.text(margin - 6, margin + (1 - t) * size + 3, num(t), "end", 9);
    }

    const auto& local = report.at("model_layer").at("local");
    for (const auto& p : ex.at("matching").at("pairs")) {
        const auto* a = find_group(groups_pre, p.at("pre_key").get<std::string>());
        const auto* b = find_group(groups_post, p.at("post_key").get<std::string>());
        if (!a || !b) continue;
        const auto [x1, y1] = px(*a);
        const auto [x2, y2] = px(*b);
        svg.line(x1, y1, x2, y2, "#777", 1.2, " stroke-dasharray=\"4 3\"");
        for (const auto& l : local) {
            if (l.at("pre_key") != p.at("pre_key") || l.at("dmae").is_null()) continue;
            const double v = l.at("dmae").get<double>();
            svg.text((x1 + x2) / 2 + 6, (y1 + y2) / 2 - 6, "d_mae=" + num(v), "start", 10,
                     data("pair", p.at("pre_key").get<std::string>()) + data("value", v));
        }
    }
    auto marker = [&](const json& g, bool pre) {
        const auto [x, y] = px(g);
        const int cls = g.at("class").get<int>();
        const auto key = g.at("key").get<std::string>();
        const std::string attrs = data("group", key) + data("window", pre ? "pre" : "post");
        if (pre) {
            svg.circle(x, y, 7, kClassColor[cls & 1], attrs + " fill-opacity=\"0.6\"");
        } else {
            svg.rect(x - 5, y - 5, 10, 10, kClassColor[cls & 1],
                     attrs + " stroke=\"black\" stroke-width=\"1\"");
        }
        if (pre) {
            svg.text(x - 9, y - 8, short_key(key), "end", 9);
        } else {
            svg.text(x + 9, y + 14, short_key(key), "start", 9);
        }
    };
    for (const auto& g : groups_pre) marker(g, true);
    for (const auto& g : groups_post) marker(g, false);
    for (const auto& key : ex.at("matching").at("disappeared")) {
        if (const auto* g = find_group(groups_pre, key.get<std::string>())) {
            const auto [x, y] = px(*g);
            svg.line(x - 9, y - 9, x + 9, y + 9, "black", 2, data("disappeared", key.get<std::string>()));
            svg.line(x - 9, y + 9, x + 9, y - 9, "black", 2);
        }
    }
    for (const auto& key : ex.at("matching").at("appeared")) {
        if (const auto* g = find_group(groups_post, key.get<std::string>())) {
            const auto [x, y] = px(*g);
            svg.circle(x, y, 11, "none",
                       " stroke=\"black\" stroke-width=\"2\"" + data("appeared", key.get<std::string>()));
        }
    }
    const double lx = margin + size + 20;
    svg.circle(lx + 5, margin + 10, 6, "#999");
    svg.text(lx + 16, margin + 14, "pre centroid");
    svg.rect(lx, margin + 26, 10, 10, "#999", " stroke=\"black\"");
    svg.text(lx + 16, margin + 35, "post centroid");
    svg.text(lx, margin + 56, "× disappeared");
    svg.text(lx, margin + 74, "○ appeared");
    for (int c = 0; c < 2; ++c) {
        svg.rect(lx, margin + 88 + c * 18, 10, 10, kClassColor[c]);
        svg.text(lx + 16, margin + 97 + c * 18, "class " + std::to_string(c));
    }
    const double g = report.at("model_layer").at("global_dmae").get<double>();
    svg.text(lx, margin + 140, "global d_mae=" + num(g), "start", 11, data("global-dmae", g));
    return svg.finish();
}

std::string render_panel_c(const json& report, const SvgOptions& options) {
    const auto& changes = report.at("explanation_layer").at("changes");
    const double row_h = 26.0, top = 60.0;
    const double height = top + std::max<double>(1, changes.size()) * row_h + 50.0;
    Svg svg(720, height, "(c) Summary of changes per matched pair", options);

    double max_eu = 0.0;
    for (const auto& c : changes) max_eu = std::max(max_eu, c.at("cfav_euclidean").get<double>());
    max_eu = nice_extent(max_eu);

    const double eu_x = 120, eu_w = 220;
    const BarAxis dir{380, 220, 180.0};
    svg.text(eu_x + eu_w / 2, top - 12, "CFAV Euclidean change", "middle");
    svg.text(dir.x0 + dir.width / 2, top - 12, "centroid direction (deg)", "middle");
    svg.text(660, top - 12, "CFAV cos", "middle");
    svg.line(eu_x, top - 4, eu_x, height - 40, "#444");
    svg.line(dir.at(0), top - 4, dir.at(0), height - 40, "#444");
    svg.text(eu_x, height - 26, "0", "middle");
    svg.text(eu_x + eu_w, height - 26, format_double(max_eu), "middle");
    svg.text(dir.at(-180), height - 26, "-180", "middle");
    svg.text(dir.at(0), height - 26, "0", "middle");
    svg.text(dir.at(180), height - 26, "180", "middle");

    if (changes.empty()) svg.text(360, top + 20, "no matched pairs", "middle");
    double y = top;
    for (const auto& c : changes) {
        const auto key = c.at("pre_key").get<std::string>();
        svg.text(10, y + 14, pair_label(c));
        const double eu = c.at("cfav_euclidean").get<double>();
        svg.rect(eu_x, y + 4, eu / max_eu * eu_w, row_h - 10, kPreColor,
                 data("pair", key) + data("metric", "cfav_euclidean") + data("value", eu));
        const double shift = c.at("centroid_shift_norm").get<double>();
        const double deg = c.at("centroid_direction_deg").get<double>();
        const double a = dir.at(0), b = dir.at(deg);
        svg.rect(std::min(a, b), y + 4, std::abs(b - a), row_h - 10, kPostColor,
                 data("pair", key) + data("metric", "centroid_direction_deg") + data("value", deg) +
                     data("shift", shift));
        const double cosv = c.at("cfav_cosine").get<double>();
        svg.text(660, y + 14, num(cosv), "middle", 11,
                 data("pair", key) + data("metric", "cfav_cosine") + data("value", cosv));
        y += row_h;
    }
    svg.text(10, height - 8, "headline: " + report.at("headline").get<std::string>(), "start", 11,
             data("headline", report.at("headline").get<std::string>()));
    return svg.finish();
}

std::optional<std::string> render_panel_d(const json& report, const SampleWindow& pre,
                                          const SampleWindow& post, const SvgOptions& options) {
    if (report.at("dim").get<std::size_t>() != 2 || pre.dim() != 2 || post.dim() != 2) {
        return std::nullopt;
    }
    const auto& ex = report.at("explanation_layer");
    const double size = 320.0, margin = 40.0, gap = 60.0;
    Svg svg(2 * size + 2 * margin + gap, size + 2 * margin + 20,
            "(d) Data and GCEs, pre-drift (left) and post-drift (right)", options);
    svg.raw(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"6\" "
        "markerHeight=\"6\" orient=\"auto-start-reverse\"><path d=\"M 0 0 L 10 5 L 0 10 z\" "
        "fill=\"black\"/></marker></defs>\n");
    auto draw = [&](const SampleWindow& w, const json& groups, double x0, const std::string& name) {
        auto X = [&](double v) { return x0 + std::clamp(v, 0.0, 1.0) * size; };
        auto Y = [&](double v) { return margin + 20 + (1.0 - std::clamp(v, 0.0, 1.0)) * size; };
        svg.rect(x0, margin + 20, size, size, "none", " stroke=\"#888\"");
        svg.text(x0 + size / 2, margin + 12, name, "middle");
        for (std::size_t i = 0; i < w.size(); ++i) {
            svg.circle(X(w.features(i, 0)), Y(w.features(i, 1)), 1.6, kClassColor[w.labels[i] & 1],
                       " fill-opacity=\"0.45\"");
        }
        for (const auto& g : groups) {
            const auto c = g.at("centroid").get<Vector>();
            const auto v = g.at("cfav").get<Vector>();
            const auto key = g.at("key").get<std::string>();
            svg.line(X(c[0]), Y(c[1]), X(c[0] + v[0]), Y(c[1] + v[1]), "black", 1.5,
                     " marker-end=\"url(#arrow)\"" + data("group", key));
            svg.circle(X(c[0]), Y(c[1]), 5, kClassColor[g.at("class").get<int>() & 1],
                       " stroke=\"black\" stroke-width=\"1.5\"");
            svg.text(X(c[0]) + 7, Y(c[1]) - 7, short_key(key), "start", 9);
        }
    };
    draw(pre, ex.at("groups_pre"), margin, "pre-drift");
    draw(post, ex.at("groups_post"), margin + size + gap, "post-drift");
    return svg.finish();
}

}  // namespace driftgce
