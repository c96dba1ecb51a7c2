#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sncl/harness/outputs.hpp"

namespace sncl::harness {

namespace svg {

inline std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

inline std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

/// Heatmap of a square matrix; NaN cells are left blank.
inline std::string heatmap(const Matrix& m, const std::string& title, const std::string& row_label,
                           const std::string& col_label) {
    const std::size_t n = m.size();
    const int cell = 56, left = 70, top = 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : m)
        for (double v : r)
            if (!std::isnan(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!(hi > lo)) hi = lo + 1.0;
    const int w = left + cell * static_cast<int>(n) + 20, h = top + cell * static_cast<int>(n) + 40;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<text x=\"" << left << "\" y=\"" << h - 8 << "\">" << escape(col_label) << "</text>\n";
    o << "<text x=\"12\" y=\"" << top + cell * static_cast<int>(n) / 2 << "\" transform=\"rotate(-90 12 "
      << top + cell * static_cast<int>(n) / 2 << ")\">" << escape(row_label) << "</text>\n";
    for (std::size_t j = 0; j < n; ++j) {
        o << "<text x=\"" << left - 18 << "\" y=\"" << top + cell * static_cast<int>(j) + cell / 2 + 4 << "\">" << j + 1 << "</text>\n";
        o << "<text x=\"" << left + cell * static_cast<int>(j) + cell / 2 - 4 << "\" y=\"" << top - 6 << "\">" << j + 1 << "</text>\n";
        for (std::size_t i = 0; i < m[j].size(); ++i) {
            const double v = m[j][i];
            if (std::isnan(v)) continue;
            const double t = (v - lo) / (hi - lo);
            const int shade = static_cast<int>(std::lround(235.0 - 180.0 * t));
            o << "<rect x=\"" << left + cell * static_cast<int>(i) << "\" y=\"" << top + cell * static_cast<int>(j)
              << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"white\"/>\n";
            o << "<text x=\"" << left + cell * static_cast<int>(i) + 6 << "\" y=\"" << top + cell * static_cast<int>(j) + cell / 2 + 4
              << "\">" << fixed(v, v > 10 ? 1 : 3) << "</text>\n";
        }
    }
    o << "</svg>\n";
    return o.str();
}

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

/// Line chart of several series on shared axes.
inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
    const int w = 640, h = 360, left = 60, right = 130, top = 40, bottom = 40;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + pw * (x - x0) / (x1 - x0); };
    auto py = [&](double y) { return top + ph * (1.0 - (y - y0) / (y1 - y0)); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#999\"/>\n";
    o << "<text x=\"" << left << "\" y=\"" << h - 8 << "\">" << escape(x_label) << " " << fixed(x0, 0) << " .. " << fixed(x1, 0) << "</text>\n";
    o << "<text x=\"4\" y=\"" << top - 6 << "\">" << escape(y_label) << "</text>\n";
    o << "<text x=\"4\" y=\"" << top + 12 << "\">" << fixed(y1, 3) << "</text>\n";
    o << "<text x=\"4\" y=\"" << top + ph << "\">" << fixed(y0, 3) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* c = colors[k % 8];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : series[k].points) o << fixed(px(x), 2) << "," << fixed(py(y), 2) << " ";
        o << "\"/>\n";
        o << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 16 * static_cast<int>(k + 1) << "\" fill=\"" << c << "\">"
          << escape(series[k].name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace svg

/// S x S matrix as CSV with a header row; NaN cells are empty.
inline std::string matrix_csv(const Matrix& m, const std::string& corner) {
    std::string out = corner;
    for (std::size_t i = 0; i < m.size(); ++i) out += "," + std::to_string(i + 1);
    out += "\n";
    for (std::size_t j = 0; j < m.size(); ++j) {
        out += std::to_string(j + 1);
        for (std::size_t i = 0; i < m.size(); ++i)
            out += "," + (i < m[j].size() && !std::isnan(m[j][i]) ? format_number(m[j][i]) : std::string());
        out += "\n";
    }
    return out;
}

/// Lower-triangular ledger matrix padded to S x S with NaN.
inline Matrix padded(const Matrix& a) {
    Matrix m(a.size(), std::vector<double>(a.size(), std::nan("")));
    for (std::size_t j = 0; j < a.size(); ++j)
        for (std::size_t i = 0; i < a[j].size(); ++i) m[j][i] = a[j][i];
    return m;
}

/// Emits data files and plots for a finished run directory into `out`:
/// metric_matrix.{csv,svg}, curves.svg, capacity.svg and, when every session
/// has its own subnetwork, transfer_matrix.{csv,svg}. Returns the files written.
inline std::vector<std::string> write_report(const std::filesystem::path& run_dir, const std::filesystem::path& out) {
    const RunLedger ledger = ledger_from_json(nlohmann::json::parse(read_text(run_dir / "ledger.json")));
    const Checkpoint ck = Checkpoint::load((run_dir / "checkpoint.sncl").string());
    const ExperimentConfig cfg = from_json(ck.meta.at("config"));
    std::filesystem::create_directories(out);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text(out / name, text);
        written.push_back(name);
    };

    emit("metric_matrix.csv", matrix_csv(padded(ledger.matrix()), "trained\\eval"));
    emit("metric_matrix.svg", svg::heatmap(padded(ledger.matrix()), ledger.metric() + " after each session",
                                          "session trained", "session evaluated"));

    std::map<int, svg::Series> loss, metric;
    int offset = 0, last_session = 0, last_epoch = 0;
    for (const auto& c : ledger.curves()) {
        if (c.session != last_session) {
            offset += last_session ? last_epoch + 1 : 0;
            last_session = c.session;
        }
        last_epoch = c.epoch;
        auto& s = loss[c.session];
        s.name = "session " + std::to_string(c.session);
        s.points.push_back({static_cast<double>(offset + c.epoch), c.loss});
        if (c.metric) {
            auto& m = metric[c.session];
            m.name = s.name;
            m.points.push_back({static_cast<double>(offset + c.epoch), *c.metric});
        }
    }
    std::vector<svg::Series> loss_series, metric_series;
    for (auto& [_, s] : loss) loss_series.push_back(s);
    for (auto& [_, s] : metric) metric_series.push_back(s);
    emit("curves.svg", svg::line_chart(loss_series, "training loss", "epoch (cumulative)", "loss"));
    if (!metric_series.empty())
        emit("metric_curves.svg", svg::line_chart(metric_series, ledger.metric() + " during training", "epoch (cumulative)", ledger.metric()));

    if (!ledger.capacity().empty()) {
        svg::Series cap{"capacity", {}}, cum{"cumulative", {}}, reuse{"reuse", {}};
        for (const auto& c : ledger.capacity()) {
            cap.points.push_back({static_cast<double>(c.session), c.capacity});
            cum.points.push_back({static_cast<double>(c.session), c.cumulative});
            reuse.points.push_back({static_cast<double>(c.session), c.reuse});
        }
        emit("capacity.csv", capacity_csv(ledger));
        emit("capacity.svg", svg::line_chart({cap, cum, reuse}, "capacity and weight reuse", "session", "fraction"));
    }

    if (cfg.scenario != Scenario::fscil) {
        const Matrix t = checkpoint_transfer_matrix(ck);
        emit("transfer_matrix.csv", matrix_csv(t, "row\\data"));
        emit("transfer_matrix.svg", svg::heatmap(t, "transfer matrix", "subnetwork row", "session data"));
    }
    return written;
}

}  // namespace sncl::harness
