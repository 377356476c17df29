#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "flat/harness/scenario.hpp"

namespace flat::harness {

using nlohmann::json;

struct MeanRole {
    double tx_bytes = 0, rx_bytes = 0, total_bytes = 0;
    double tx_msgs = 0, rx_msgs = 0;
    double cpu_us = 0;
    double ecies_enc = 0, ecies_dec = 0, ecdsa_sign = 0, ecdsa_verify = 0, ecqv_extract = 0;
    double sym_protect = 0, sym_unprotect = 0;
};

namespace detail {

inline MeanRole mean_of(const std::vector<RunMetrics>& runs, RoleMetrics RunMetrics::*role) {
    MeanRole m;
    if (runs.empty()) return m;
    for (const auto& r : runs) {
        const RoleMetrics& rm = r.*role;
        m.tx_bytes += static_cast<double>(rm.tx_bytes);
        m.rx_bytes += static_cast<double>(rm.rx_bytes);
        m.tx_msgs += static_cast<double>(rm.tx_msgs);
        m.rx_msgs += static_cast<double>(rm.rx_msgs);
        m.cpu_us += static_cast<double>(rm.cpu_ns) / 1000.0;
        m.ecies_enc += static_cast<double>(rm.ops.ecies_enc);
        m.ecies_dec += static_cast<double>(rm.ops.ecies_dec);
        m.ecdsa_sign += static_cast<double>(rm.ops.ecdsa_sign);
        m.ecdsa_verify += static_cast<double>(rm.ops.ecdsa_verify);
        m.ecqv_extract += static_cast<double>(rm.ops.ecqv_extract);
        m.sym_protect += static_cast<double>(rm.ops.sym_protect);
        m.sym_unprotect += static_cast<double>(rm.ops.sym_unprotect);
    }
    double n = static_cast<double>(runs.size());
    m.tx_bytes /= n; m.rx_bytes /= n; m.tx_msgs /= n; m.rx_msgs /= n; m.cpu_us /= n;
    m.ecies_enc /= n; m.ecies_dec /= n; m.ecdsa_sign /= n; m.ecdsa_verify /= n;
    m.ecqv_extract /= n; m.sym_protect /= n; m.sym_unprotect /= n;
    m.total_bytes = m.tx_bytes + m.rx_bytes;
    return m;
}

inline json role_json(const MeanRole& m) {
    return json{{"tx_bytes", m.tx_bytes},
                {"rx_bytes", m.rx_bytes},
                {"total_bytes", m.total_bytes},
                {"tx_msgs", m.tx_msgs},
                {"rx_msgs", m.rx_msgs},
                {"cpu_us", m.cpu_us},
                {"ops",
                 {{"ecies_enc", m.ecies_enc},
                  {"ecies_dec", m.ecies_dec},
                  {"ecdsa_sign", m.ecdsa_sign},
                  {"ecdsa_verify", m.ecdsa_verify},
                  {"ecqv_extract", m.ecqv_extract},
                  {"sym_protect", m.sym_protect},
                  {"sym_unprotect", m.sym_unprotect}}}};
}

inline json layout_json(ProtocolKind p) {
    if (p == ProtocolKind::Flat) {
        namespace L = protocol::layout;
        return json{{"per_message",
                     {{"key_request", L::kKeyRequest},
                      {"certificate_challenge", L::kCertificateChallenge},
                      {"certificate_response", L::kCertificateResponse},
                      {"sp_key", L::kSpKey},
                      {"key_acknowledgment", L::kKeyAcknowledgment},
                      {"client_key", L::kClientKey},
                      {"assertion_request", L::kAssertionRequest},
                      {"assertion", L::kAssertionMsg},
                      {"service_request", L::kServiceRequest},
                      {"service", L::kService}}},
                    {"client_sent", L::kClientSent},
                    {"client_received", L::kClientReceived},
                    {"client_total", L::kClientTotal},
                    {"sp_total", L::kSpTotal},
                    {"idp_total", L::kIdpTotal},
                    {"run_total", L::kRunTotal},
                    {"message_count", L::kMessageCount}};
    }
    namespace L = baseline::layout;
    return json{{"per_message",
                 {{"service_init", L::kServiceInit},
                  {"redirect", L::kRedirect},
                  {"assertion_request", L::kAssertionRequest},
                  {"challenge", L::kChallenge},
                  {"credentials", L::kCredentials},
                  {"assertion", L::kAssertionMsg},
                  {"service_request", L::kServiceRequest},
                  {"service_grant", L::kServiceGrant}}},
                {"client_sent", L::kClientSent},
                {"client_received", L::kClientReceived},
                {"client_total", L::kClientTotal},
                {"sp_total", L::kSpTotal},
                {"idp_total", L::kIdpTotal},
                {"run_total", L::kRunTotal},
                {"message_count", L::kMessageCount}};
}

}  // namespace detail

/// Stable machine-readable run report ("flat-run-report/1", documented in the
/// README). The table rendering below reads the same object, so the two
/// views cannot diverge.
inline json run_report(const ScenarioConfig& cfg, const ScenarioResult& result) {
    json outcomes{{"granted", 0}, {"denied", 0}, {"aborted", 0}};
    for (const auto& r : result.runs) outcomes[outcome_name(r.outcome)] = outcomes[outcome_name(r.outcome)].get<int>() + 1;

    uint32_t restarts = 0;
    double wall_us = 0;
    for (const auto& r : result.runs) {
        restarts += r.restarts;
        wall_us += static_cast<double>(r.wall_time_us);
    }
    wall_us /= static_cast<double>(result.runs.empty() ? 1 : result.runs.size());

    json report{
        {"schema", "flat-run-report/1"},
        {"config",
         {{"protocol", protocol_name(cfg.protocol)},
          {"transport", transport_name(cfg.transport)},
          {"attack", attack_name(cfg.attack)},
          {"runs", cfg.runs},
          {"seed", cfg.seed}}},
        {"layout", detail::layout_json(cfg.protocol)},
        {"outcomes", outcomes},
        {"restarts", restarts},
        {"mean_wall_time_us", wall_us},
        {"mean",
         {{"client", detail::role_json(detail::mean_of(result.runs, &RunMetrics::client))},
          {"sp", detail::role_json(detail::mean_of(result.runs, &RunMetrics::sp))},
          {"idp", detail::role_json(detail::mean_of(result.runs, &RunMetrics::idp))}}},
    };
    if (cfg.attack != AttackKind::None && !result.runs.empty()) {
        const RunMetrics& last = result.runs.back();
        report["attack"] = {{"kind", attack_name(cfg.attack)},
                            {"denied", last.attack_denied},
                            {"abort_role", last.attack_abort_role},
                            {"abort_reason", protocol::abort_reason_name(last.attack_abort_reason)},
                            {"restarts", last.restarts}};
    }
    return report;
}

/// Side-by-side comparison of two run reports (normally flat vs baseline).
/// `claims` flags which of the expected directional relations hold.
inline Result<json, std::string> compare_reports(const json& a, const json& b) {
    for (const json* r : {&a, &b}) {
        if (!r->contains("schema") || (*r)["schema"] != "flat-run-report/1")
            return std::string("not a flat-run-report/1 document");
    }
    if (a["config"]["runs"] != b["config"]["runs"])
        return std::string("run counts differ; comparison would be skewed");

    auto total = [](const json& r, const char* role) {
        return r["mean"][role]["total_bytes"].get<double>();
    };
    auto overall = [&](const json& r) {
        return total(r, "client") + total(r, "sp") + total(r, "idp");
    };

    double client_a = total(a, "client"), client_b = total(b, "client");
    double overall_a = overall(a), overall_b = overall(b);
    double idp_a = total(a, "idp"), idp_b = total(b, "idp");
    double sp_a = total(a, "sp"), sp_b = total(b, "sp");
    double cpu_a = a["mean"]["client"]["cpu_us"].get<double>();
    double cpu_b = b["mean"]["client"]["cpu_us"].get<double>();

    auto pct_less = [](double x, double y) { return y > 0 ? 100.0 * (1.0 - x / y) : 0.0; };

    json cmp{
        {"schema", "flat-compare-report/1"},
        {"a", {{"protocol", a["config"]["protocol"]}, {"runs", a["config"]["runs"]}}},
        {"b", {{"protocol", b["config"]["protocol"]}, {"runs", b["config"]["runs"]}}},
        {"client",
         {{"a_total", client_a},
          {"b_total", client_b},
          {"reduction_pct", pct_less(client_a, client_b)}}},
        {"overall",
         {{"a_total", overall_a},
          {"b_total", overall_b},
          {"reduction_pct", pct_less(overall_a, overall_b)}}},
        {"per_role",
         {{"sp", {{"a_total", sp_a}, {"b_total", sp_b}}},
          {"idp",
           {{"a_total", idp_a},
            {"b_total", idp_b},
            {"a_vs_b_pct", idp_b > 0 ? 100.0 * (idp_a / idp_b - 1.0) : 0.0}}}}},
        {"cpu", {{"client_a_us", cpu_a}, {"client_b_us", cpu_b},
                 {"client_ratio", cpu_b > 0 ? cpu_a / cpu_b : 0.0}}},
        {"claims",
         {{"client_reduction_ge_55pct", client_a * 100.0 <= client_b * 45.0},
          {"overall_lower", overall_a < overall_b},
          {"idp_higher", idp_a > idp_b},
          {"sp_lower", sp_a < sp_b},
          {"client_cpu_le_tenth", cpu_b > 0 && cpu_a * 10.0 <= cpu_b}}},
    };
    return cmp;
}

// ---------------------------------------------------------------------------
// Human-readable rendering; same numbers as the JSON by construction.
// ---------------------------------------------------------------------------

inline std::string render_run_table(const json& r) {
    char buf[256];
    std::string out;
    snprintf(buf, sizeof buf, "protocol=%s transport=%s attack=%s runs=%d seed=%llu\n",
             r["config"]["protocol"].get<std::string>().c_str(),
             r["config"]["transport"].get<std::string>().c_str(),
             r["config"]["attack"].get<std::string>().c_str(), r["config"]["runs"].get<int>(),
             static_cast<unsigned long long>(r["config"]["seed"].get<uint64_t>()));
    out += buf;
    snprintf(buf, sizeof buf, "outcomes: granted=%d denied=%d aborted=%d\n",
             r["outcomes"]["granted"].get<int>(), r["outcomes"]["denied"].get<int>(),
             r["outcomes"]["aborted"].get<int>());
    out += buf;
    out += "role    |   tx B |   rx B |  total | tx# | rx# |   cpu us\n";
    out += "--------+--------+--------+--------+-----+-----+---------\n";
    for (const char* role : {"client", "sp", "idp"}) {
        const json& m = r["mean"][role];
        snprintf(buf, sizeof buf, "%-7s | %6.1f | %6.1f | %6.1f | %3.1f | %3.1f | %8.2f\n", role,
                 m["tx_bytes"].get<double>(), m["rx_bytes"].get<double>(),
                 m["total_bytes"].get<double>(), m["tx_msgs"].get<double>(),
                 m["rx_msgs"].get<double>(), m["cpu_us"].get<double>());
        out += buf;
    }
    const json& L = r["layout"];
    snprintf(buf, sizeof buf,
             "layout: client %d+%d = %d bytes, sp %d, idp %d, run total %d (%d msgs)\n",
             L["client_sent"].get<int>(), L["client_received"].get<int>(),
             L["client_total"].get<int>(), L["sp_total"].get<int>(), L["idp_total"].get<int>(),
             L["run_total"].get<int>(), L["message_count"].get<int>());
    out += buf;
    snprintf(buf, sizeof buf, "ops(client): enc=%.1f dec=%.1f sign=%.1f verify=%.1f extract=%.1f\n",
             r["mean"]["client"]["ops"]["ecies_enc"].get<double>(),
             r["mean"]["client"]["ops"]["ecies_dec"].get<double>(),
             r["mean"]["client"]["ops"]["ecdsa_sign"].get<double>(),
             r["mean"]["client"]["ops"]["ecdsa_verify"].get<double>(),
             r["mean"]["client"]["ops"]["ecqv_extract"].get<double>());
    out += buf;
    if (r.contains("attack")) {
        snprintf(buf, sizeof buf, "attack: %s denied=%s abort=%s@%s\n",
                 r["attack"]["kind"].get<std::string>().c_str(),
                 r["attack"]["denied"].get<bool>() ? "yes" : "no",
                 r["attack"]["abort_reason"].get<std::string>().c_str(),
                 r["attack"]["abort_role"].get<std::string>().c_str());
        out += buf;
    }
    return out;
}

inline std::string render_compare_table(const json& c) {
    char buf[256];
    std::string out;
    snprintf(buf, sizeof buf, "compare: a=%s b=%s (runs=%d)\n",
             c["a"]["protocol"].get<std::string>().c_str(),
             c["b"]["protocol"].get<std::string>().c_str(), c["a"]["runs"].get<int>());
    out += buf;
    snprintf(buf, sizeof buf, "client total: %.1f vs %.1f  (%.1f%% reduction)\n",
             c["client"]["a_total"].get<double>(), c["client"]["b_total"].get<double>(),
             c["client"]["reduction_pct"].get<double>());
    out += buf;
    snprintf(buf, sizeof buf, "overall:      %.1f vs %.1f  (%.1f%% reduction)\n",
             c["overall"]["a_total"].get<double>(), c["overall"]["b_total"].get<double>(),
             c["overall"]["reduction_pct"].get<double>());
    out += buf;
    snprintf(buf, sizeof buf, "idp total:    %.1f vs %.1f  (%+.1f%%)\n",
             c["per_role"]["idp"]["a_total"].get<double>(),
             c["per_role"]["idp"]["b_total"].get<double>(),
             c["per_role"]["idp"]["a_vs_b_pct"].get<double>());
    out += buf;
    snprintf(buf, sizeof buf, "client cpu:   %.2f us vs %.2f us (ratio %.4f)\n",
             c["cpu"]["client_a_us"].get<double>(), c["cpu"]["client_b_us"].get<double>(),
             c["cpu"]["client_ratio"].get<double>());
    out += buf;
    out += "claims:";
    for (auto& [name, holds] : c["claims"].items()) {
        out += " ";
        out += name;
        out += holds.get<bool>() ? "=yes" : "=no";
    }
    out += "\n";
    return out;
}

}  // namespace flat::harness
