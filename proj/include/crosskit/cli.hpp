// cli.hpp — configuration parsing, command bodies, and SVG plot emission for
// the crosskit tool. Everything here is a library function the binary in
// tools/ dispatches to, so every behavior is testable without spawning a
// process.
//
// Configuration is flat key=value text: the device constants plus run
// parameters, all optional except the device. Unknown keys are rejected with
// their line number (catching typos beats guessing). `echo_config` writes the
// canonical form; parsing that text reproduces the configuration exactly.
#pragma once

#include "crosskit/dynamics.hpp"
#include "crosskit/fitting.hpp"
#include "crosskit/model.hpp"
#include "crosskit/perturbation.hpp"
#include "crosskit/pipeline.hpp"
#include "crosskit/version.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crosskit::cli {

// --------------------------- error types -------------------------------------

// Malformed configuration or range text; the message carries the location.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required key is absent; the message lists what is missing.
struct MissingKey : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------- number formatting --------------------------------

namespace detail {

// Shortest decimal string that parses back to the same double; keeps echoed
// configurations readable and the round trip exact.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
        return {};
    }
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Full-consumption double parse: trailing junk is an error, not ignored.
inline double parse_double(const std::string& text) {
    std::string t = trim(text);
    if (!t.empty() && t[0] == '+') {
        t.erase(0, 1);
    }
    double value = 0.0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) {
        throw ParseError("not a number: '" + trim(text) + "'");
    }
    return value;
}

inline long long parse_integer(const std::string& text) {
    std::string t = trim(text);
    if (!t.empty() && t[0] == '+') {
        t.erase(0, 1);
    }
    long long value = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), value);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) {
        throw ParseError("not an integer: '" + trim(text) + "'");
    }
    return value;
}

inline bool parse_bool(const std::string& text) {
    std::string t = trim(text);
    if (t == "1" || t == "true") {
        return true;
    }
    if (t == "0" || t == "false") {
        return false;
    }
    throw ParseError("not a boolean (use 0/1/true/false): '" + t + "'");
}

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string part;
    for (char c : text) {
        if (c == sep) {
            parts.push_back(part);
            part.clear();
        } else {
            part += c;
        }
    }
    parts.push_back(part);
    return parts;
}

}  // namespace detail

// --------------------------- value ranges ------------------------------------

// A sweep axis in one of three spellings:
//   linear  start:step:stop          e.g. -300:20:500
//   log     log:lo:hi:count          e.g. log:0.5:40:17
//   list    v1,v2,...                e.g. -78 or 4,8,16
struct RangeSpec {
    enum class Kind { Linear, Log, List };
    Kind kind{Kind::List};
    double start{0.0}, step{0.0}, stop{0.0};  // Linear
    double log_lo{0.0}, log_hi{0.0};          // Log
    int log_count{0};
    std::vector<double> list;                 // List

    bool operator==(const RangeSpec&) const = default;

    std::vector<double> values() const {
        std::vector<double> out;
        switch (kind) {
            case Kind::Linear:
                for (double v = start; v <= stop + 1e-9 * std::max(1.0, std::abs(stop));
                     v += step) {
                    out.push_back(v);
                }
                break;
            case Kind::Log:
                for (int k = 0; k < log_count; ++k) {
                    out.push_back(log_lo * std::pow(log_hi / log_lo,
                                                    static_cast<double>(k) /
                                                        static_cast<double>(log_count - 1)));
                }
                break;
            case Kind::List:
                out = list;
                break;
        }
        return out;
    }

    std::string to_text() const {
        using detail::format_double;
        switch (kind) {
            case Kind::Linear:
                return format_double(start) + ':' + format_double(step) + ':' +
                       format_double(stop);
            case Kind::Log:
                return "log:" + format_double(log_lo) + ':' + format_double(log_hi) + ':' +
                       std::to_string(log_count);
            case Kind::List: {
                std::string out;
                for (size_t i = 0; i < list.size(); ++i) {
                    out += (i ? "," : "") + format_double(list[i]);
                }
                return out;
            }
        }
        return {};
    }
};

inline RangeSpec parse_range(const std::string& text) {
    const std::string t = detail::trim(text);
    if (t.empty()) {
        throw ParseError("empty range");
    }
    RangeSpec spec;
    if (t.rfind("log:", 0) == 0) {
        auto parts = detail::split(t.substr(4), ':');
        if (parts.size() != 3) {
            throw ParseError("log range needs log:lo:hi:count: '" + t + "'");
        }
        spec.kind = RangeSpec::Kind::Log;
        spec.log_lo = detail::parse_double(parts[0]);
        spec.log_hi = detail::parse_double(parts[1]);
        long long n = detail::parse_integer(parts[2]);
        if (!(spec.log_lo > 0.0) || !(spec.log_hi > spec.log_lo) || n < 2 || n > 100000) {
            throw ParseError("log range needs 0 < lo < hi and 2 <= count: '" + t + "'");
        }
        spec.log_count = static_cast<int>(n);
        return spec;
    }
    if (t.find(':') != std::string::npos) {
        auto parts = detail::split(t, ':');
        if (parts.size() != 3) {
            throw ParseError("linear range needs start:step:stop: '" + t + "'");
        }
        spec.kind = RangeSpec::Kind::Linear;
        spec.start = detail::parse_double(parts[0]);
        spec.step = detail::parse_double(parts[1]);
        spec.stop = detail::parse_double(parts[2]);
        if (!(spec.step > 0.0) || spec.stop < spec.start) {
            throw ParseError("linear range needs step > 0 and stop >= start: '" + t + "'");
        }
        if ((spec.stop - spec.start) / spec.step > 1e6) {
            throw ParseError("linear range generates more than 1e6 values: '" + t + "'");
        }
        return spec;
    }
    spec.kind = RangeSpec::Kind::List;
    for (const auto& part : detail::split(t, ',')) {
        spec.list.push_back(detail::parse_double(part));
    }
    return spec;
}

// --------------------------- run configuration -------------------------------

inline RangeSpec default_amplitudes() {
    RangeSpec spec;
    spec.kind = RangeSpec::Kind::Log;
    spec.log_lo = 0.5;
    spec.log_hi = 40.0;
    spec.log_count = 17;
    return spec;
}

// Everything a run needs, resolved: device constants inline plus run
// parameters. omega1_mhz is optional in files because detuning sweeps supply
// it per point; commands that need a fixed device require one of the two.
struct RunConfig {
    // device
    double omega1_mhz{0.0};
    bool has_omega1{false};
    double omega2_mhz{0.0};
    double anh1_mhz{0.0};
    double anh2_mhz{0.0};
    double j_mhz{0.0};
    int levels{4};
    // run
    std::uint64_t seed{1};
    int shots{0};
    double pole_guard_mhz{1.0};    // perturbation-theory denominator guard
    double pole_window_mhz{10.0};  // sweep exclusion half-width around poles
    std::string out{"out"};
    bool decoherence{false};
    double t1_us{50.0};
    double t2_us{2.8};
    bool lab_frame_check{false};
    RangeSpec deltas;
    bool has_deltas{false};
    RangeSpec amplitudes{default_amplitudes()};
    double tmax_ns{8000.0};
    double dt_ns{10.0};

    bool operator==(const RunConfig&) const = default;
};

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    size_t line_number = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? eol : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_number;
        const std::string at = "line " + std::to_string(line_number) + ": ";

        std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') {
            continue;
        }
        size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError(at + "expected key = value, got '" + stripped + "'");
        }
        std::string key = detail::trim(stripped.substr(0, eq));
        std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(at + "empty key");
        }
        if (!seen.insert(key).second) {
            throw ParseError(at + "duplicate key '" + key + "'");
        }
        try {
            if (key == "omega1_mhz") {
                cfg.omega1_mhz = detail::parse_double(value);
                cfg.has_omega1 = true;
            } else if (key == "omega2_mhz") {
                cfg.omega2_mhz = detail::parse_double(value);
            } else if (key == "anh1_mhz") {
                cfg.anh1_mhz = detail::parse_double(value);
            } else if (key == "anh2_mhz") {
                cfg.anh2_mhz = detail::parse_double(value);
            } else if (key == "j_mhz") {
                cfg.j_mhz = detail::parse_double(value);
            } else if (key == "levels") {
                cfg.levels = static_cast<int>(detail::parse_integer(value));
            } else if (key == "seed") {
                long long s = detail::parse_integer(value);
                if (s < 0) {
                    throw ParseError("seed must be non-negative");
                }
                cfg.seed = static_cast<std::uint64_t>(s);
            } else if (key == "shots") {
                long long s = detail::parse_integer(value);
                if (s < 0) {
                    throw ParseError("shots must be non-negative");
                }
                cfg.shots = static_cast<int>(s);
            } else if (key == "pole_guard_mhz") {
                cfg.pole_guard_mhz = detail::parse_double(value);
            } else if (key == "pole_window_mhz") {
                cfg.pole_window_mhz = detail::parse_double(value);
            } else if (key == "out") {
                cfg.out = value;
            } else if (key == "decoherence") {
                cfg.decoherence = detail::parse_bool(value);
            } else if (key == "t1_us") {
                cfg.t1_us = detail::parse_double(value);
            } else if (key == "t2_us") {
                cfg.t2_us = detail::parse_double(value);
            } else if (key == "lab_frame_check") {
                cfg.lab_frame_check = detail::parse_bool(value);
            } else if (key == "deltas") {
                cfg.deltas = parse_range(value);
                cfg.has_deltas = true;
            } else if (key == "amplitudes") {
                cfg.amplitudes = parse_range(value);
            } else if (key == "tmax_ns") {
                cfg.tmax_ns = detail::parse_double(value);
            } else if (key == "dt_ns") {
                cfg.dt_ns = detail::parse_double(value);
            } else {
                throw ParseError(at + "unknown key '" + key + "'");
            }
        } catch (const ParseError& e) {
            std::string msg = e.what();
            if (msg.rfind("line ", 0) == 0) {
                throw;
            }
            throw ParseError(at + "key '" + key + "': " + msg);
        }
    }
    std::vector<std::string> missing;
    for (const char* required : {"omega2_mhz", "anh1_mhz", "anh2_mhz", "j_mhz"}) {
        if (!seen.count(required)) {
            missing.push_back(required);
        }
    }
    if (!missing.empty()) {
        std::string msg = "missing required keys:";
        for (const auto& key : missing) {
            msg += ' ' + key;
        }
        throw MissingKey(msg);
    }
    return cfg;
}

// Canonical text form; parse_config(echo_config(cfg)) == cfg.
inline std::string echo_config(const RunConfig& cfg) {
    using detail::format_double;
    std::string out = "# crosskit " + std::string(version) + " run configuration\n";
    if (cfg.has_omega1) {
        out += "omega1_mhz = " + format_double(cfg.omega1_mhz) + '\n';
    }
    out += "omega2_mhz = " + format_double(cfg.omega2_mhz) + '\n';
    out += "anh1_mhz = " + format_double(cfg.anh1_mhz) + '\n';
    out += "anh2_mhz = " + format_double(cfg.anh2_mhz) + '\n';
    out += "j_mhz = " + format_double(cfg.j_mhz) + '\n';
    out += "levels = " + std::to_string(cfg.levels) + '\n';
    out += "seed = " + std::to_string(cfg.seed) + '\n';
    out += "shots = " + std::to_string(cfg.shots) + '\n';
    out += "pole_guard_mhz = " + format_double(cfg.pole_guard_mhz) + '\n';
    out += "pole_window_mhz = " + format_double(cfg.pole_window_mhz) + '\n';
    out += "out = " + cfg.out + '\n';
    out += "decoherence = " + std::string(cfg.decoherence ? "1" : "0") + '\n';
    out += "t1_us = " + format_double(cfg.t1_us) + '\n';
    out += "t2_us = " + format_double(cfg.t2_us) + '\n';
    out += "lab_frame_check = " + std::string(cfg.lab_frame_check ? "1" : "0") + '\n';
    if (cfg.has_deltas) {
        out += "deltas = " + cfg.deltas.to_text() + '\n';
    }
    out += "amplitudes = " + cfg.amplitudes.to_text() + '\n';
    out += "tmax_ns = " + format_double(cfg.tmax_ns) + '\n';
    out += "dt_ns = " + format_double(cfg.dt_ns) + '\n';
    return out;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config: " + path.string());
    }
    std::string text(std::istreambuf_iterator<char>(in), {});
    return parse_config(text);
}

// Device constants for a run. `delta_override`, when finite, positions
// omega1 = omega2 + delta; otherwise omega1_mhz must be in the file.
inline model::DeviceParams device_from(const RunConfig& cfg,
                                       double delta_override = std::numeric_limits<
                                           double>::quiet_NaN()) {
    model::DeviceParams device;
    device.omega2 = cfg.omega2_mhz;
    device.anh1 = cfg.anh1_mhz;
    device.anh2 = cfg.anh2_mhz;
    device.coupling_j = cfg.j_mhz;
    device.levels = cfg.levels;
    if (std::isfinite(delta_override)) {
        device.omega1 = cfg.omega2_mhz + delta_override;
    } else if (cfg.has_omega1) {
        device.omega1 = cfg.omega1_mhz;
    } else {
        throw MissingKey("omega1_mhz required (or pass a detuning on the command line)");
    }
    device.validate();
    return device;
}

inline std::vector<double> durations_from(const RunConfig& cfg) {
    if (!(cfg.dt_ns > 0.0) || !(cfg.tmax_ns >= cfg.dt_ns)) {
        throw std::invalid_argument("durations need dt_ns > 0 and tmax_ns >= dt_ns");
    }
    if (cfg.tmax_ns / cfg.dt_ns > 2e6) {
        throw std::invalid_argument("more than 2e6 samples per trace; raise dt_ns");
    }
    std::vector<double> out;
    for (double t = 0.0; t <= cfg.tmax_ns + 0.5 * cfg.dt_ns; t += cfg.dt_ns) {
        out.push_back(t);
    }
    return out;
}

// --------------------------- SVG plots ---------------------------------------

namespace svg {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool markers{true};
    bool dashed{false};
};

struct Plot {
    std::string title, xlabel, ylabel;
    std::vector<Series> series;
    std::vector<double> vlines;  // dashed vertical reference positions
    std::vector<double> hlines;  // dashed horizontal reference positions
};

namespace detail {

inline const char* palette(size_t index) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                   "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
    return colors[index % 10];
}

inline std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (c == '&') {
            out += "&amp;";
        } else if (c == '<') {
            out += "&lt;";
        } else if (c == '>') {
            out += "&gt;";
        } else {
            out += c;
        }
    }
    return out;
}

// Tick step: the largest of {1,2,5}*10^k giving at most ~6 intervals.
inline double nice_step(double span) {
    double raw = span / 6.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {5.0, 2.0, 1.0}) {
        if (mag * m <= raw) {
            return mag * m;
        }
    }
    return mag;
}

inline std::string format_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace detail

// Hand-rolled scatter/line plot: fixed canvas, linear axes, legend. No
// external renderer — the artifact has to open anywhere.
inline std::string render(const Plot& plot) {
    const double width = 860, height = 540;
    const double ml = 78, mr = 24, mt = 46, mb = 58;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : plot.series) {
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    for (double v : plot.vlines) {
        xmin = std::min(xmin, v);
        xmax = std::max(xmax, v);
    }
    for (double v : plot.hlines) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    if (!std::isfinite(xmin)) {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 1.0;
        ymax += 1.0;
    }
    double xpad = 0.05 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
           "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + ' ' +
           num(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + num(width / 2) + "\" y=\"26\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"17\">" +
           detail::escape(plot.title) + "</text>\n";

    // Grid and ticks.
    double xstep = detail::nice_step(xmax - xmin);
    double ystep = detail::nice_step(ymax - ymin);
    for (double x = std::ceil(xmin / xstep) * xstep; x <= xmax + 1e-9 * xstep; x += xstep) {
        out += "<line x1=\"" + num(px(x)) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(px(x)) +
               "\" y2=\"" + num(mt + ph) + "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + num(px(x)) + "\" y=\"" + num(mt + ph + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
               detail::format_tick(x) + "</text>\n";
    }
    for (double y = std::ceil(ymin / ystep) * ystep; y <= ymax + 1e-9 * ystep; y += ystep) {
        out += "<line x1=\"" + num(ml) + "\" y1=\"" + num(py(y)) + "\" x2=\"" +
               num(ml + pw) + "\" y2=\"" + num(py(y)) +
               "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + num(ml - 8) + "\" y=\"" + num(py(y) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
               detail::format_tick(y) + "</text>\n";
    }

    // Reference lines.
    for (double v : plot.vlines) {
        out += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(px(v)) +
               "\" y2=\"" + num(mt + ph) +
               "\" stroke=\"#777777\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\"/>\n";
    }
    for (double v : plot.hlines) {
        out += "<line x1=\"" + num(ml) + "\" y1=\"" + num(py(v)) + "\" x2=\"" +
               num(ml + pw) + "\" y2=\"" + num(py(v)) +
               "\" stroke=\"#777777\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\"/>\n";
    }

    // Frame and axis labels.
    out += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) +
           "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    out += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(height - 14) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           detail::escape(plot.xlabel) + "</text>\n";
    out += "<text x=\"20\" y=\"" + num(mt + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
           "transform=\"rotate(-90 20 " +
           num(mt + ph / 2) + ")\">" + detail::escape(plot.ylabel) + "</text>\n";

    // Data.
    for (size_t i = 0; i < plot.series.size(); ++i) {
        const auto& s = plot.series[i];
        const char* color = detail::palette(i);
        if (s.points.size() > 1) {
            std::string pts;
            for (auto [x, y] : s.points) {
                pts += num(px(x)) + ',' + num(py(y)) + ' ';
            }
            out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                   "\" stroke-width=\"1.6\"" +
                   (s.dashed ? " stroke-dasharray=\"7 4\"" : "") + "/>\n";
        }
        if (s.markers) {
            for (auto [x, y] : s.points) {
                out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) +
                       "\" r=\"3\" fill=\"" + color + "\"/>\n";
            }
        }
    }

    // Legend.
    double ly = mt + 14;
    for (size_t i = 0; i < plot.series.size(); ++i) {
        if (plot.series[i].label.empty()) {
            continue;
        }
        out += "<line x1=\"" + num(ml + pw - 150) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
               num(ml + pw - 126) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" +
               std::string(detail::palette(i)) + "\" stroke-width=\"2\"" +
               (plot.series[i].dashed ? " stroke-dasharray=\"7 4\"" : "") + "/>\n";
        out += "<text x=\"" + num(ml + pw - 120) + "\" y=\"" + num(ly) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" +
               detail::escape(plot.series[i].label) + "</text>\n";
        ly += 17;
    }
    out += "</svg>\n";
    return out;
}

inline void write(const std::filesystem::path& path, const Plot& plot) {
    pipeline::csv::write_file(path, render(plot));
}

}  // namespace svg

// --------------------------- command bodies ----------------------------------

namespace detail {

// First "# crosskit ... seed=N" comment in a CSV, so derived artifacts can
// carry the provenance of their input; 0 when absent.
inline std::uint64_t seed_from_comment(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] != '#') {
            break;
        }
        size_t at = line.find("seed=");
        if (at != std::string::npos) {
            try {
                return std::stoull(line.substr(at + 5));
            } catch (const std::exception&) {
                return 0;
            }
        }
    }
    return 0;
}

// Rotating-frame vs lab-frame agreement at reduced truncation (the lab-frame
// integrator needs picosecond steps at GHz carriers; three levels per mode
// keeps that affordable). Returns the RMS difference of the final target
// populations over a handful of short windows.
inline double lab_frame_agreement_rms(const model::DeviceParams& device_full,
                                      double amplitude_mhz) {
    model::DeviceParams device = device_full;
    device.levels = 3;
    auto spectrum = perturbation::dressed_energies_pt2(device);
    double carrier = spectrum.energy(1, 0) - spectrum.energy(0, 0);
    double sq_sum = 0.0;
    int count = 0;
    for (double duration_ns : {50.0, 100.0, 150.0, 200.0, 250.0, 300.0}) {
        auto schedule =
            dynamics::build_cr_schedule(device, amplitude_mhz, duration_ns, true, carrier);
        auto lab = dynamics::propagate_lab_rk4(device, schedule, 0.002);
        auto rot = dynamics::propagate(device, schedule, duration_ns);
        double p_lab = dynamics::population_target_excited(lab.space, lab.states.back());
        double p_rot = dynamics::population_target_excited(rot.space, rot.states.back());
        sq_sum += (p_lab - p_rot) * (p_lab - p_rot);
        ++count;
    }
    return std::sqrt(sq_sum / count);
}

}  // namespace detail

// simulate: both control states per amplitude at one detuning, written as one
// observation per row. Amplitude zero is allowed here — the trace dump has no
// fitting step to break.
inline void run_simulate(const RunConfig& cfg, double delta_mhz,
                         const std::filesystem::path& out_path) {
    model::DeviceParams device = device_from(cfg, delta_mhz);
    auto durations = durations_from(cfg);
    auto amplitudes = pipeline::detail::sorted_unique(cfg.amplitudes.values());

    std::string body;
    for (double amplitude : amplitudes) {
        for (int control = 0; control <= 1; ++control) {
            auto trace = dynamics::simulate_cr_rabi(device, amplitude, durations,
                                                    control == 1);
            if (cfg.decoherence) {
                trace = dynamics::decoherence_envelope(trace, cfg.t1_us, cfg.t2_us);
            }
            trace = pipeline::apply_shot_noise(
                trace, cfg.shots,
                pipeline::derive_seed(cfg.seed, delta_mhz, amplitude, control == 1));
            pipeline::csv::append_trace_rows(body, delta_mhz, trace);
        }
    }
    pipeline::csv::write_file(out_path, pipeline::csv::comment_line(cfg.seed) + '\n' +
                                            pipeline::csv::traces_header + '\n' + body);
}

// fit: rebuild J_eff(amplitude) curves from a trace table. External tables
// carry no rotation-sense record, so the coupling is the plain frequency
// difference of the two fitted magnitudes — sign conventions are the sweep
// command's job.
inline void run_fit(const std::filesystem::path& in_path,
                    const std::filesystem::path& out_path) {
    auto rows = pipeline::csv::read_traces(in_path);
    if (rows.empty()) {
        throw std::runtime_error("no data rows in " + in_path.string());
    }

    struct TracePair {
        std::vector<double> durations[2];
        std::vector<double> values[2];
    };
    std::map<double, std::map<double, TracePair>> grouped;
    for (const auto& r : rows) {
        if (r.control_state != 0 && r.control_state != 1) {
            throw std::runtime_error("control_state must be 0 or 1 in " + in_path.string());
        }
        auto& pair = grouped[r.delta_mhz][r.amplitude];
        pair.durations[r.control_state].push_back(r.duration_ns);
        pair.values[r.control_state].push_back(r.p_excited);
    }

    std::string out = pipeline::csv::comment_line(detail::seed_from_comment(in_path)) + '\n';
    out += std::string(pipeline::csv::jeff_header) + '\n';
    size_t total_points = 0;
    for (auto& [delta, by_amplitude] : grouped) {
        pipeline::JeffCurve curve;
        curve.delta_mhz = delta;
        for (auto& [amplitude, pair] : by_amplitude) {
            if (amplitude == 0.0) {
                curve.points.push_back({0.0, 0.0, 0.0});
                continue;
            }
            if (pair.values[0].empty() || pair.values[1].empty()) {
                curve.failures.push_back({amplitude, "missing one control state"});
                continue;
            }
            try {
                auto fit0 = fitting::fit_damped_sinusoid(pair.durations[0], pair.values[0]);
                auto fit1 = fitting::fit_damped_sinusoid(pair.durations[1], pair.values[1]);
                if (fit0.status == fitting::FitStatus::NoOscillation ||
                    fit1.status == fitting::FitStatus::NoOscillation) {
                    curve.failures.push_back({amplitude, "no oscillation resolved in trace"});
                    continue;
                }
                if (fit0.residual_rms > fit0.amplitude ||
                    fit1.residual_rms > fit1.amplitude) {
                    curve.failures.push_back(
                        {amplitude, "ambiguous fit: residual exceeds oscillation amplitude"});
                    continue;
                }
                curve.points.push_back(fitting::compute_jeff(fit1, fit0, amplitude));
            } catch (const fitting::NonConvergence& e) {
                curve.failures.push_back({amplitude, e.what()});
            } catch (const std::invalid_argument& e) {
                // Bad sampling grid inside one group is a data problem, not a
                // caller bug: record it and keep going.
                curve.failures.push_back({amplitude, std::string("bad trace data: ") +
                                                         e.what()});
            }
        }
        pipeline::detail::fit_curve_summaries(curve);
        total_points += curve.points.size();
        out += pipeline::csv::jeff_rows(curve);
        for (const auto& failure : curve.failures) {
            std::string safe = failure.reason;
            std::replace(safe.begin(), safe.end(), ',', ';');
            out += "# failed: delta=" + pipeline::detail::format_g(delta) + " amplitude=" +
                   pipeline::detail::format_g(failure.amplitude) + ": " + safe + '\n';
        }
    }
    if (total_points == 0) {
        // Per-amplitude failures are recorded and tolerated, but a table where
        // nothing fit anywhere is an analysis failure, not a result.
        throw fitting::NonConvergence("no amplitude in " + in_path.string() +
                                      " produced a usable fit");
    }
    pipeline::csv::write_file(out_path, out);
}

// mu: the theory coefficient along a detuning grid, all methods side by side,
// with validity flags instead of silent gaps.
inline void run_mu(const RunConfig& cfg, const RangeSpec& deltas,
                   const std::filesystem::path& out_path) {
    auto grid = pipeline::detail::sorted_unique(deltas.values());
    if (grid.empty()) {
        throw std::invalid_argument("empty detuning grid");
    }
    std::string out = pipeline::csv::comment_line(cfg.seed) + '\n';
    out += "delta_mhz,mu_closed,mu_matrix_h1,mu_matrix_h2,mu_numeric,flags\n";
    for (double delta : grid) {
        model::DeviceParams device = device_from(cfg, delta);
        auto field = [&](auto&& compute) -> std::string {
            try {
                return pipeline::detail::format_g(compute());
            } catch (const perturbation::ResonancePole&) {
                return "nan";
            } catch (const perturbation::LabelAmbiguity&) {
                // exact diagonalization cannot name the dressed states at a
                // degeneracy; the coefficient is as undefined as at a pole
                return "nan";
            }
        };
        std::string closed = field([&] {
            return perturbation::mu_closed_form(device, cfg.pole_guard_mhz);
        });
        std::string h1 = field([&] {
            return perturbation::cr_coefficients(device, perturbation::CRMethod::MatrixElement,
                                                 1, cfg.pole_guard_mhz)
                .mu;
        });
        std::string h2 = field([&] {
            return perturbation::cr_coefficients(device, perturbation::CRMethod::MatrixElement,
                                                 2, cfg.pole_guard_mhz)
                .mu;
        });
        std::string numeric = field([&] {
            return perturbation::cr_coefficients(device, perturbation::CRMethod::Numeric, 2,
                                                 cfg.pole_guard_mhz)
                .mu;
        });

        auto report = perturbation::validity_check(device, cfg.pole_guard_mhz);
        std::string flags;
        for (const auto& pole : report.poles) {
            if (pole.distance < cfg.pole_window_mhz) {
                flags += (flags.empty() ? "" : ";");
                flags += "near_pole(" + pole.name + ")";
            }
        }
        if (report.strong_coupling) {
            flags += (flags.empty() ? "" : ";");
            flags += "strong_coupling";
        }
        out += pipeline::detail::format_g(delta) + ',' + closed + ',' + h1 + ',' + h2 +
               ',' + numeric + ',' + flags + '\n';
    }
    pipeline::csv::write_file(out_path, out);
}

// sweep: the full pipeline into a directory, with the effective configuration
// echoed beside the artifacts so the run is reproducible from its own output.
inline pipeline::DetuningSweepResult run_sweep(const RunConfig& cfg, const RangeSpec& deltas,
                                               const std::filesystem::path& out_dir) {
    model::DeviceParams base;
    base.omega2 = cfg.omega2_mhz;
    base.omega1 = cfg.omega2_mhz;  // slides per detuning
    base.anh1 = cfg.anh1_mhz;
    base.anh2 = cfg.anh2_mhz;
    base.coupling_j = cfg.j_mhz;
    base.levels = cfg.levels;

    pipeline::SweepSettings settings;
    settings.amplitudes = pipeline::detail::sorted_unique(cfg.amplitudes.values());
    settings.durations_ns = durations_from(cfg);
    settings.pole_window_mhz = cfg.pole_window_mhz;
    settings.trace.root_seed = cfg.seed;
    settings.trace.shots = cfg.shots;
    settings.trace.decoherence = cfg.decoherence;
    settings.trace.t1_us = cfg.t1_us;
    settings.trace.t2_us = cfg.t2_us;

    std::filesystem::create_directories(out_dir);
    RunConfig effective = cfg;
    effective.deltas = deltas;
    effective.has_deltas = true;
    effective.out = out_dir.string();
    pipeline::csv::write_file(out_dir / "config.cfg", echo_config(effective));

    auto grid = deltas.values();
    auto result = pipeline::run_sweep_to_directory(base, grid, settings, out_dir);

    if (cfg.lab_frame_check) {
        // Validate the rotating-frame treatment once per run, on the first
        // surviving detuning at the smallest nonzero amplitude.
        if (!result.curves.empty()) {
            double delta = result.curves.front().delta_mhz;
            double amplitude = 1.0;
            for (double a : settings.amplitudes) {
                if (a > 0.0) {
                    amplitude = a;
                    break;
                }
            }
            double rms = detail::lab_frame_agreement_rms(
                pipeline::detail::device_at_detuning(base, delta), amplitude);
            std::ofstream diag(out_dir / "diagnostics.txt", std::ios::app);
            diag << "lab-frame check at detuning " << pipeline::detail::format_g(delta)
                 << ", amplitude " << pipeline::detail::format_g(amplitude)
                 << ": rms population difference " << pipeline::detail::format_g(rms)
                 << (rms < 0.01 ? " (ok)" : " (EXCEEDS 1%)") << '\n';
            if (!(rms < 0.01)) {
                throw dynamics::StepTooLarge(
                    "lab-frame check failed: rotating-frame result differs by rms " +
                    pipeline::detail::format_g(rms));
            }
        }
    }
    return result;
}

// --------------------------- report (SVG emission) ---------------------------

namespace detail {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    int column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw std::runtime_error("missing column: " + name);
        }
        return static_cast<int>(it - header.begin());
    }
};

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open: " + path.string());
    }
    Table table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            table.comments.push_back(line);
            continue;
        }
        auto fields = pipeline::csv::split_line(line);
        if (table.header.empty()) {
            table.header = fields;
        } else {
            table.rows.push_back(fields);
        }
    }
    return table;
}

// "key=value" tokens inside a comment line ("# reference_j=1.08 ...").
inline double comment_value(const Table& table, const std::string& key, double fallback) {
    for (const auto& comment : table.comments) {
        size_t at = comment.find(key + '=');
        if (at != std::string::npos) {
            try {
                return std::stod(comment.substr(at + key.size() + 1));
            } catch (const std::exception&) {
                return fallback;
            }
        }
    }
    return fallback;
}

// Comma-separated variant ("reference_deltas=0,360").
inline std::vector<double> comment_values(const Table& table, const std::string& key) {
    std::vector<double> out;
    for (const auto& comment : table.comments) {
        size_t at = comment.find(key + '=');
        if (at == std::string::npos) {
            continue;
        }
        std::string rest = comment.substr(at + key.size() + 1);
        rest = rest.substr(0, rest.find(' '));
        for (const auto& part : cli::detail::split(rest, ',')) {
            try {
                out.push_back(std::stod(part));
            } catch (const std::exception&) {
            }
        }
        break;
    }
    return out;
}

}  // namespace detail

// report: three SVG plots out of a sweep directory's CSV artifacts. Needs only
// the files, not the configuration that produced them.
inline void run_report(const std::filesystem::path& dir) {
    auto jeff = detail::read_table(dir / "jeff.csv");
    auto mu = detail::read_table(dir / "mu.csv");
    auto saturation = detail::read_table(dir / "saturation.csv");

    // J_eff vs amplitude, one series per detuning.
    {
        int c_type = jeff.column("row_type"), c_delta = jeff.column("delta_mhz");
        int c_amp = jeff.column("amplitude"), c_jeff = jeff.column("jeff_mhz");
        std::map<double, svg::Series> by_delta;
        for (const auto& row : jeff.rows) {
            if (row[c_type] != "point") {
                continue;
            }
            double delta = std::stod(row[c_delta]);
            auto& series = by_delta[delta];
            if (series.label.empty()) {
                series.label = "detuning " + pipeline::detail::format_g(delta) + " MHz";
            }
            series.points.push_back({std::stod(row[c_amp]), std::stod(row[c_jeff])});
        }
        svg::Plot plot;
        plot.title = "Effective coupling vs drive amplitude";
        plot.xlabel = "drive amplitude (MHz)";
        plot.ylabel = "J_eff (MHz)";
        for (auto& [delta, series] : by_delta) {
            plot.series.push_back(std::move(series));
        }
        svg::write(dir / "jeff.svg", plot);
    }

    // mu vs detuning with the closed-form overlay.
    {
        int c_delta = mu.column("delta_mhz"), c_meas = mu.column("mu_measured");
        int c_theory = mu.column("mu_theory");
        svg::Series measured, theory;
        measured.label = "measured slope";
        theory.label = "closed form";
        theory.markers = false;
        theory.dashed = true;
        for (const auto& row : mu.rows) {
            double delta = std::stod(row[c_delta]);
            measured.points.push_back({delta, std::stod(row[c_meas])});
            double t = std::stod(row[c_theory]);
            if (std::isfinite(t)) {
                theory.points.push_back({delta, t});
            }
        }
        svg::Plot plot;
        plot.title = "Conditional drive coefficient vs detuning";
        plot.xlabel = "detuning (MHz)";
        plot.ylabel = "mu (dimensionless)";
        plot.series.push_back(std::move(measured));
        plot.series.push_back(std::move(theory));
        svg::write(dir / "mu.svg", plot);
    }

    // Saturation level vs detuning with the reference lines.
    {
        int c_delta = saturation.column("delta_mhz"), c_level = saturation.column("level_mhz");
        int c_sign = saturation.column("sign");
        double ref_j = detail::comment_value(saturation, "reference_j", 0.0);
        svg::Series levels;
        levels.label = "saturation level";
        for (const auto& row : saturation.rows) {
            levels.points.push_back(
                {std::stod(row[c_delta]), std::stod(row[c_sign]) * std::stod(row[c_level])});
        }
        svg::Plot plot;
        plot.title = "Saturated coupling vs detuning";
        plot.xlabel = "detuning (MHz)";
        plot.ylabel = "signed saturation level (MHz)";
        plot.series.push_back(std::move(levels));
        plot.vlines = detail::comment_values(saturation, "reference_deltas");
        if (ref_j > 0.0) {
            plot.hlines = {ref_j, -ref_j};
        }
        svg::write(dir / "saturation.svg", plot);
    }
}

}  // namespace crosskit::cli
