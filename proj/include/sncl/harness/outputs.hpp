#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "sncl/errors.hpp"
#include "sncl/harness/scenario.hpp"

namespace sncl::harness {

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline nlohmann::json ledger_to_json(const RunLedger& l) {
    nlohmann::json j;
    j["metric"] = l.metric();
    j["matrix"] = l.matrix();
    auto& curves = j["curves"] = nlohmann::json::array();
    for (const auto& c : l.curves()) {
        nlohmann::json p = {{"session", c.session}, {"epoch", c.epoch}, {"loss", c.loss}};
        if (c.metric) p["metric"] = *c.metric;
        curves.push_back(p);
    }
    auto& cap = j["capacity"] = nlohmann::json::array();
    for (const auto& c : l.capacity())
        cap.push_back({{"session", c.session}, {"capacity", c.capacity}, {"cumulative", c.cumulative}, {"reuse", c.reuse}});
    j["extras"] = l.extras();
    return j;
}

inline RunLedger ledger_from_json(const nlohmann::json& j) {
    try {
        RunLedger l(j.at("metric").get<std::string>());
        for (const auto& row : j.at("matrix")) l.append_row(row.get<std::vector<double>>());
        for (const auto& p : j.at("curves")) {
            CurvePoint c{p.at("session").get<int>(), p.at("epoch").get<int>(), p.at("loss").get<double>(), std::nullopt};
            if (p.contains("metric")) c.metric = p.at("metric").get<double>();
            l.curves().push_back(c);
        }
        for (const auto& p : j.at("capacity"))
            l.capacity().push_back({p.at("session").get<int>(), p.at("capacity").get<double>(),
                                    p.at("cumulative").get<double>(), p.at("reuse").get<double>()});
        l.extras() = j.at("extras").get<std::map<std::string, double>>();
        return l;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ledger: ") + e.what());
    }
}

/// Rows (scenario, session_trained, session_eval, metric, value) of the metric matrix.
inline std::string report_csv(Scenario scenario, const RunLedger& l) {
    std::string out = "scenario,session_trained,session_eval,metric,value\n";
    const auto& a = l.matrix();
    for (std::size_t j = 0; j < a.size(); ++j)
        for (std::size_t i = 0; i <= j; ++i)
            out += to_string(scenario) + "," + std::to_string(j + 1) + "," + std::to_string(i + 1) + "," + l.metric() +
                   "," + format_number(a[j][i]) + "\n";
    return out;
}

inline std::string curves_csv(const RunLedger& l) {
    std::string out = "session,epoch,loss," + l.metric() + "\n";
    for (const auto& c : l.curves())
        out += std::to_string(c.session) + "," + std::to_string(c.epoch) + "," + format_number(c.loss) + "," +
               (c.metric ? format_number(*c.metric) : "") + "\n";
    return out;
}

inline std::string capacity_csv(const RunLedger& l) {
    std::string out = "session,capacity,cumulative,reuse\n";
    for (const auto& c : l.capacity())
        out += std::to_string(c.session) + "," + format_number(c.capacity) + "," + format_number(c.cumulative) + "," +
               format_number(c.reuse) + "\n";
    return out;
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const RunLedger& l) {
    const auto s = l.summary();
    nlohmann::json j = {{"scenario", to_string(cfg.scenario)},
                        {"config_hash", hex64(config_hash(cfg))},
                        {"metric", l.metric()},
                        {"sessions", l.sessions()},
                        {"acc", s.acc},
                        {"bwt", s.bwt},
                        {"bwt_defined", s.bwt_defined}};
    for (const auto& [k, v] : l.extras()) j[k] = v;
    return j;
}

/// Writes checkpoint.sncl, report.csv, summary.json, ledger.json, curves.csv,
/// capacity.csv and run.log (the only file with timing) into `dir`.
inline void write_run_outputs(const RunResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    r.checkpoint.save((dir / "checkpoint.sncl").string());
    write_text(dir / "report.csv", report_csv(r.config.scenario, r.ledger));
    write_text(dir / "summary.json", summary_json(r.config, r.ledger).dump(2) + "\n");
    write_text(dir / "ledger.json", ledger_to_json(r.ledger).dump(2) + "\n");
    write_text(dir / "curves.csv", curves_csv(r.ledger));
    write_text(dir / "capacity.csv", capacity_csv(r.ledger));
    std::ostringstream log;
    log << "config_hash " << hex64(config_hash(r.config)) << "\n";
    log << "wall_seconds " << r.wall_seconds << "\n";
    write_text(dir / "run.log", log.str());
}

}  // namespace sncl::harness
