// Scenario runner CLI: set up key material, execute protocol runs over the
// simulated or UDP transport, and compare run reports.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flat/harness/material.hpp"
#include "flat/harness/report.hpp"
#include "flat/harness/scenario.hpp"
#include "flat/transport/transcript_json.hpp"

using namespace flat;
using namespace flat::harness;

namespace {

int cmd_setup(const std::string& out_dir, uint64_t seed) {
    Material m = generate_material(seed);
    write_material(m, out_dir);
    std::cout << "material written to " << out_dir << " (seed " << seed << ")\n";
    return 0;
}

int cmd_run(const ScenarioConfig& cfg, const std::string& material_dir,
            const std::string& report_format, const std::string& out_file,
            const std::string& transcript_file) {
    Material material;
    try {
        material = material_dir.empty() ? generate_material(cfg.seed)
                                        : load_material(material_dir);
    } catch (const std::exception& e) {
        std::cerr << "material error: " << e.what() << "\n";
        return 1;
    }

    auto result = run_scenario(cfg, material);
    if (!result) {
        std::cerr << "config error: " << result.error() << "\n";
        return 1;
    }

    json report = run_report(cfg, *result);
    std::string rendered =
        report_format == "table" ? render_run_table(report) : report.dump(2) + "\n";
    if (!out_file.empty()) {
        std::ofstream f(out_file);
        f << report.dump(2) << "\n";
    }
    std::cout << rendered;

    if (!transcript_file.empty()) {
        std::ofstream f(transcript_file);
        f << transport::transcript_to_json(result->last_transcript).dump(2) << "\n";
    }

    if (cfg.attack == AttackKind::None) {
        for (const auto& r : result->runs) {
            if (r.outcome != Outcome::Granted) {
                std::cerr << "unexpected outcome in a no-attack scenario: "
                          << outcome_name(r.outcome) << " ("
                          << protocol::abort_reason_name(r.abort_reason) << ")\n";
                return 2;
            }
        }
    }
    return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& format) {
    auto read = [](const std::string& p) -> std::optional<json> {
        std::ifstream f(p);
        if (!f) return std::nullopt;
        try {
            return json::parse(f);
        } catch (...) {
            return std::nullopt;
        }
    };
    auto a = read(a_path);
    auto b = read(b_path);
    if (!a || !b) {
        std::cerr << "cannot read report file\n";
        return 1;
    }
    auto cmp = compare_reports(*a, *b);
    if (!cmp) {
        std::cerr << "compare error: " << cmp.error() << "\n";
        return 1;
    }
    std::cout << (format == "table" ? render_compare_table(*cmp) : cmp->dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated lightweight authentication scenario runner"};
    app.require_subcommand(1);

    // setup
    auto* setup = app.add_subcommand("setup", "generate key and certificate material");
    std::string out_dir;
    uint64_t setup_seed = 42;
    setup->add_option("--out", out_dir, "output directory")->required();
    setup->add_option("--seed", setup_seed, "deterministic generation seed");

    // run
    auto* run = app.add_subcommand("run", "execute protocol runs and report metrics");
    ScenarioConfig cfg;
    std::string protocol = "flat", transport = "mem", attack = "none";
    std::string material_dir, report_format = "json", out_file, transcript_file;
    run->add_option("--protocol", protocol, "flat|baseline")
        ->check(CLI::IsMember({"flat", "baseline"}));
    run->add_option("--transport", transport, "mem|udp")->check(CLI::IsMember({"mem", "udp"}));
    run->add_option("--attack", attack, "none|replay|tamper|fake-sp|drop")
        ->check(CLI::IsMember({"none", "replay", "tamper", "fake-sp", "drop"}));
    run->add_option("--runs", cfg.runs, "independent sessions to execute");
    run->add_option("--seed", cfg.seed, "scenario seed (mem transport is deterministic in it)");
    run->add_option("--material", material_dir, "directory from `setup` (default: derive from seed)");
    run->add_option("--report", report_format, "json|table")
        ->check(CLI::IsMember({"json", "table"}));
    run->add_option("--out", out_file, "also write the json report here");
    run->add_option("--transcript", transcript_file, "write last run's wire transcript (json)");
    run->add_option("--attack-frame", cfg.target_frame, "tamper/drop: Nth originated frame");
    run->add_option("--attack-offset", cfg.tamper_offset, "tamper: byte offset within the frame");
    uint32_t mask = 0x01;
    run->add_option("--attack-mask", mask, "tamper: xor mask");

    // compare
    auto* compare = app.add_subcommand("compare", "compare two run reports");
    std::string a_path, b_path, compare_format = "json";
    compare->add_option("a", a_path, "first report (json)")->required();
    compare->add_option("b", b_path, "second report (json)")->required();
    compare->add_option("--format", compare_format, "json|table")
        ->check(CLI::IsMember({"json", "table"}));

    CLI11_PARSE(app, argc, argv);

    if (setup->parsed()) return cmd_setup(out_dir, setup_seed);
    if (run->parsed()) {
        cfg.protocol = protocol == "flat" ? ProtocolKind::Flat : ProtocolKind::Baseline;
        cfg.transport = transport == "mem" ? TransportKind::Mem : TransportKind::Udp;
        if (attack == "replay") cfg.attack = AttackKind::Replay;
        else if (attack == "tamper") cfg.attack = AttackKind::Tamper;
        else if (attack == "fake-sp") cfg.attack = AttackKind::FakeSp;
        else if (attack == "drop") cfg.attack = AttackKind::Drop;
        else cfg.attack = AttackKind::None;
        cfg.tamper_mask = static_cast<uint8_t>(mask);
        return cmd_run(cfg, material_dir, report_format, out_file, transcript_file);
    }
    return cmd_compare(a_path, b_path, compare_format);
}
