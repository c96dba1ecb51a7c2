#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "sncl/harness/outputs.hpp"
#include "sncl/harness/report.hpp"

namespace sncl::harness {

namespace detail {

inline void print_evaluation(const Evaluation& ev, std::ostream& out) {
    for (std::size_t i = 0; i < ev.final_row.size(); ++i)
        out << "session " << i + 1 << " " << ev.metric << " " << format_number(ev.final_row[i]) << "\n";
    out << "acc " << format_number(ev.acc) << "\n";
    for (const auto& [k, v] : ev.extras) out << k << " " << format_number(v) << "\n";
}

inline void print_inspect(const Checkpoint& ck, std::ostream& out) {
    out << "magic SNCL version " << ck.version << " config_hash " << hex64(ck.config_hash) << "\n";
    if (ck.meta.contains("config")) out << "scenario " << ck.meta["config"].value("scenario", "?") << "\n";
    if (ck.meta.contains("completed_sessions")) out << "completed_sessions " << ck.meta["completed_sessions"].dump() << "\n";
    std::size_t payload = 0, mask_bytes = 0;
    for (const auto& r : ck.records) {
        out << r.name << " " << to_string(r.dtype) << " " << to_string(r.shape) << " " << r.payload_bytes() << "B";
        if (r.dtype == DType::q8) out << " min " << format_number(r.q8.min) << " scale " << format_number(r.q8.scale);
        for (const auto& m : r.masks) {
            out << " m" << m.session << "=" << m.mask.popcount() << "/" << m.mask.size();
            mask_bytes += (m.mask.size() + 7) / 8;
        }
        out << "\n";
        payload += r.payload_bytes();
    }
    out << "records " << ck.records.size() << " payload_bytes " << payload << " mask_bytes " << mask_bytes << "\n";
}

}  // namespace detail

/// Entry point of the `sncl` tool. Returns 0 on success, 1 on invalid usage or
/// configuration, 2 on any other failure.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Subnetwork continual learning experiments", "sncl"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, run_dir;
    std::optional<std::uint64_t> seed;

    auto* train = app.add_subcommand("train", "Run a scenario and write checkpoint and reports");
    train->add_option("--config", config_path, "Config file (TOML-style sections or JSON)")->required();
    train->add_option("--seed", seed, "Override the config seed");
    train->add_option("--out", out_dir, "Override the output directory");

    auto* eval = app.add_subcommand("eval", "Recompute final metrics from a checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

    auto* report = app.add_subcommand("report", "Emit CSV and SVG reports for a run directory");
    report->add_option("--run", run_dir, "Run output directory")->required();
    report->add_option("--out", out_dir, "Report directory (default: <run>/report)");

    auto* compress = app.add_subcommand("compress", "Rewrite a checkpoint with 8-bit parameters");
    compress->add_option("--checkpoint", checkpoint_path, "Input checkpoint")->required();
    compress->add_option("--out", out_dir, "Output file (default: <input>.q8.sncl)");

    auto* inspect = app.add_subcommand("inspect", "Print the contents of a checkpoint");
    inspect->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            if (seed) cfg.seed = *seed;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            validate(cfg);
            const RunResult r = run_scenario(cfg);
            write_run_outputs(r, cfg.output_dir);
            const auto s = r.ledger.summary();
            out << "scenario " << to_string(cfg.scenario) << " sessions " << r.ledger.sessions() << " acc "
                << format_number(s.acc) << " bwt " << format_number(s.bwt) << "\n";
            for (const auto& [k, v] : r.ledger.extras()) out << k << " " << format_number(v) << "\n";
            out << "wrote " << cfg.output_dir << "\n";
        } else if (eval->parsed()) {
            detail::print_evaluation(evaluate_checkpoint(Checkpoint::load(checkpoint_path)), out);
        } else if (report->parsed()) {
            const std::filesystem::path dest =
                out_dir.empty() ? std::filesystem::path(run_dir) / "report" : std::filesystem::path(out_dir);
            for (const auto& f : write_report(run_dir, dest)) out << "wrote " << (dest / f).string() << "\n";
        } else if (compress->parsed()) {
            Checkpoint ck = Checkpoint::load(checkpoint_path);
            const std::size_t before = ck.serialize().size();
            const std::size_t n = ck.compress();
            const std::string dest = out_dir.empty() ? checkpoint_path + ".q8.sncl" : out_dir;
            ck.save(dest);
            out << "compressed " << n << " records " << before << " -> " << ck.serialize().size() << " bytes\n";
            out << "wrote " << dest << "\n";
        } else if (inspect->parsed()) {
            detail::print_inspect(Checkpoint::load(checkpoint_path), out);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace sncl::harness
