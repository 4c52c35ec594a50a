#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "probcast/common.hpp"
#include "probcast/errors.hpp"
#include "probcast/evaluation.hpp"

namespace probcast {

// Static fan chart: empirical 10/50/90 quantile bands of the per-window
// samples with the ground-truth trace overlaid, written as a standalone SVG.

struct FanChartData {
    std::vector<double> q10, q50, q90; // one entry per window
    std::vector<double> truth;         // size = windows or windows-1
};

inline FanChartData fan_chart_data(const Matrix& samples, Eigen::Index samples_per_window,
                                   const Matrix& truth, Eigen::Index feature) {
    if (feature < 0 || feature >= samples.cols())
        throw ParseError("feature index " + std::to_string(feature) + " out of range [0, " +
                         std::to_string(samples.cols()) + ")");
    if (truth.cols() != samples.cols())
        throw ParseError("sample and ground-truth files disagree on feature count");
    if (samples_per_window < 1 || samples.rows() % samples_per_window != 0)
        throw ParseError("sample rows are not a multiple of samples_per_window");
    const Eigen::Index blocks = samples.rows() / samples_per_window;
    if (truth.rows() != blocks && truth.rows() != blocks - 1)
        throw ParseError("ground-truth rows (" + std::to_string(truth.rows()) +
                         ") must equal the window count (" + std::to_string(blocks) +
                         ") or one fewer");

    FanChartData data;
    std::vector<double> col(static_cast<std::size_t>(samples_per_window));
    for (Eigen::Index b = 0; b < blocks; ++b) {
        for (Eigen::Index i = 0; i < samples_per_window; ++i)
            col[static_cast<std::size_t>(i)] = samples(b * samples_per_window + i, feature);
        std::sort(col.begin(), col.end());
        data.q10.push_back(empirical_quantile(col, 0.10));
        data.q50.push_back(empirical_quantile(col, 0.50));
        data.q90.push_back(empirical_quantile(col, 0.90));
    }
    for (Eigen::Index r = 0; r < truth.rows(); ++r)
        data.truth.push_back(truth(r, feature));
    return data;
}

namespace detail {

struct SvgScale {
    double x0, x1, y0, y1; // data ranges
    double width, height, margin;

    double sx(double x) const {
        return margin + (x - x0) / std::max(1e-300, x1 - x0) * (width - 2 * margin);
    }
    double sy(double y) const {
        return height - margin - (y - y0) / std::max(1e-300, y1 - y0) * (height - 2 * margin);
    }
};

inline std::string polyline(const std::vector<double>& ys, const SvgScale& s,
                            const char* stroke, double width_px) {
    std::ostringstream out;
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width_px
        << "\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i)
        out << s.sx(static_cast<double>(i)) << "," << s.sy(ys[i]) << " ";
    out << "\"/>\n";
    return out.str();
}

} // namespace detail

inline void write_fan_chart_svg(const std::string& path, const FanChartData& data,
                                const std::string& title) {
    if (data.q10.empty())
        throw ParseError("fan chart has no windows to draw");
    const double width = 900, height = 420, margin = 55;

    double lo = data.q10.front(), hi = data.q90.front();
    for (std::size_t i = 0; i < data.q10.size(); ++i) {
        lo = std::min({lo, data.q10[i]});
        hi = std::max({hi, data.q90[i]});
    }
    for (double t : data.truth) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    if (hi <= lo)
        hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);

    detail::SvgScale s{0.0, static_cast<double>(data.q10.size() - 1), lo - pad, hi + pad,
                       width, height, margin};
    if (data.q10.size() == 1)
        s.x1 = 1.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // quantile band q10..q90
    svg << "<polygon fill=\"#91b9e3\" fill-opacity=\"0.55\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < data.q90.size(); ++i)
        svg << s.sx(static_cast<double>(i)) << "," << s.sy(data.q90[i]) << " ";
    for (std::size_t i = data.q10.size(); i-- > 0;)
        svg << s.sx(static_cast<double>(i)) << "," << s.sy(data.q10[i]) << " ";
    svg << "\"/>\n";

    svg << detail::polyline(data.q50, s, "#1f5fa8", 1.6);
    if (!data.truth.empty())
        svg << detail::polyline(data.truth, s, "#c23b22", 1.6);

    // axes
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << height - margin + 18
        << "\" font-size=\"11\">window 0</text>\n";
    svg << "<text x=\"" << width - margin - 60 << "\" y=\"" << height - margin + 18
        << "\" font-size=\"11\">window " << data.q10.size() - 1 << "</text>\n";
    svg << "<text x=\"6\" y=\"" << s.sy(lo) << "\" font-size=\"11\">" << lo << "</text>\n";
    svg << "<text x=\"6\" y=\"" << s.sy(hi) + 10 << "\" font-size=\"11\">" << hi << "</text>\n";

    // legend + title
    svg << "<text x=\"" << margin << "\" y=\"22\" font-size=\"13\" font-weight=\"bold\">" << title
        << "</text>\n";
    svg << "<rect x=\"" << width - 260 << "\" y=\"12\" width=\"16\" height=\"10\" fill=\"#91b9e3\" "
        << "fill-opacity=\"0.55\"/><text x=\"" << width - 238
        << "\" y=\"21\" font-size=\"11\">10-90% band</text>\n";
    svg << "<line x1=\"" << width - 150 << "\" y1=\"17\" x2=\"" << width - 134
        << "\" y2=\"17\" stroke=\"#1f5fa8\" stroke-width=\"2\"/><text x=\"" << width - 128
        << "\" y=\"21\" font-size=\"11\">median</text>\n";
    svg << "<line x1=\"" << width - 72 << "\" y1=\"17\" x2=\"" << width - 56
        << "\" y2=\"17\" stroke=\"#c23b22\" stroke-width=\"2\"/><text x=\"" << width - 50
        << "\" y=\"21\" font-size=\"11\">truth</text>\n";
    svg << "</svg>\n";

    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << svg.str();
}

} // namespace probcast
