#include <doctest.h>

#include <filesystem>

#include "flat/crypto/sha256.hpp"
#include "flat/harness/material.hpp"
#include "flat/harness/report.hpp"
#include "flat/harness/scenario.hpp"
#include "flat/transport/transcript_json.hpp"

using namespace flat;
using namespace flat::harness;

namespace {
const Material& shared_material() {
    static Material m = generate_material(42);
    return m;
}

ScenarioConfig mem_config(ProtocolKind p, uint32_t runs, AttackKind attack = AttackKind::None) {
    ScenarioConfig cfg;
    cfg.protocol = p;
    cfg.transport = TransportKind::Mem;
    cfg.attack = attack;
    cfg.runs = runs;
    cfg.seed = 7;
    return cfg;
}
}  // namespace

TEST_CASE("material: deterministic by seed, roundtrips through files") {
    Material a = generate_material(123);
    Material b = generate_material(123);
    Material c = generate_material(124);
    CHECK(a.sp_icert.serialize() == b.sp_icert.serialize());
    CHECK(a.k_ci == b.k_ci);
    CHECK(a.client_cert.serialize() == b.client_cert.serialize());
    CHECK(a.sp_icert.serialize() != c.sp_icert.serialize());

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "flat_material_test";
    fs::remove_all(dir);
    write_material(a, dir);

    // on-disk sizes: 70- and 134-byte certificates end up as 140/268 hex chars
    auto hex_len = [&](const char* name) {
        std::ifstream f(dir / name);
        std::string line;
        std::getline(f, line);
        return line.size();
    };
    CHECK(hex_len("sp.icert") == 140);
    CHECK(hex_len("idp.icert") == 140);
    CHECK(hex_len("sp.cert") == 268);
    CHECK(hex_len("client.cert") == 268);

    Material loaded = load_material(dir);
    CHECK(loaded.seed == a.seed);
    CHECK(loaded.k_ci == a.k_ci);
    CHECK(loaded.sp_icert.serialize() == a.sp_icert.serialize());
    CHECK(loaded.idp_cert.serialize() == a.idp_cert.serialize());
    CHECK(loaded.credential == a.credential);
    CHECK(crypto::U256::cmp(loaded.sp_d, a.sp_d) == 0);

    // manifest lists each entity exactly once
    std::ifstream mf(dir / "manifest.json");
    auto manifest = nlohmann::json::parse(mf);
    std::set<uint32_t> ids;
    for (const auto& e : manifest["entities"]) ids.insert(e["id"].get<uint32_t>());
    CHECK(ids.size() == manifest["entities"].size());

    // rewriting from the same seed reproduces identical files
    fs::path dir2 = fs::temp_directory_path() / "flat_material_test2";
    fs::remove_all(dir2);
    write_material(generate_material(123), dir2);
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::ifstream f1(entry.path());
        std::ifstream f2(dir2 / entry.path().filename());
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("mem scenario: honest flat runs are granted with exact byte totals") {
    auto result = run_scenario(mem_config(ProtocolKind::Flat, 5), shared_material());
    REQUIRE(result.has_value());
    for (const auto& r : result->runs) {
        CHECK(r.outcome == Outcome::Granted);
        CHECK(r.client.tx_bytes + r.client.rx_bytes == protocol::layout::kClientTotal);
        CHECK(r.client.tx_msgs == 3);
        CHECK(r.client.rx_msgs == 3);
        CHECK(r.sp.tx_msgs == 3);
        CHECK(r.sp.rx_msgs == 3);
        CHECK(r.idp.tx_msgs == 4);
        CHECK(r.idp.rx_msgs == 4);
        CHECK(r.client.ops.asymmetric_total() == 0);
        // conservation: every sent byte is received by someone
        CHECK(r.client.tx_bytes + r.sp.tx_bytes + r.idp.tx_bytes ==
              r.client.rx_bytes + r.sp.rx_bytes + r.idp.rx_bytes);
    }
}

TEST_CASE("mem scenario: passive transcript holds the ten frames in step order") {
    auto result = run_scenario(mem_config(ProtocolKind::Flat, 1), shared_material());
    REQUIRE(result.has_value());
    const auto& t = result->last_transcript;
    REQUIRE(t.size() == 10);
    const uint8_t order[] = {0x01, 0x03, 0x04, 0x05, 0x06, 0x02, 0x07, 0x08, 0x09, 0x0A};
    for (size_t i = 0; i < t.size(); ++i) {
        CHECK(t[i].frame[0] == order[i]);
        CHECK(!t[i].injected);
    }
    // frames delivered in send order: timestamps never decrease
    for (size_t i = 1; i < t.size(); ++i) CHECK(t[i].time_ms >= t[i - 1].time_ms);
}

TEST_CASE("mem scenario: determinism — same seed, byte-identical transcripts") {
    auto cfg = mem_config(ProtocolKind::Flat, 2);
    auto r1 = run_scenario(cfg, shared_material());
    auto r2 = run_scenario(cfg, shared_material());
    REQUIRE(r1.has_value());
    REQUIRE(r2.has_value());
    auto j1 = transport::transcript_to_json(r1->last_transcript).dump();
    auto j2 = transport::transcript_to_json(r2->last_transcript).dump();
    CHECK(crypto::sha256(ByteView(reinterpret_cast<const uint8_t*>(j1.data()), j1.size())) ==
          crypto::sha256(ByteView(reinterpret_cast<const uint8_t*>(j2.data()), j2.size())));

    auto cfg2 = cfg;
    cfg2.seed = 8;
    auto r3 = run_scenario(cfg2, shared_material());
    auto j3 = transport::transcript_to_json(r3->last_transcript).dump();
    CHECK(j1 != j3);
}

TEST_CASE("mem scenario: baseline honest runs calibrate to (1,1,2,5)") {
    auto result = run_scenario(mem_config(ProtocolKind::Baseline, 5), shared_material());
    REQUIRE(result.has_value());
    for (const auto& r : result->runs) {
        CHECK(r.outcome == Outcome::Granted);
        CHECK(r.client.ops.ecies_enc == 1);
        CHECK(r.client.ops.ecies_dec == 1);
        CHECK(r.client.ops.ecdsa_sign == 2);
        CHECK(r.client.ops.ecdsa_verify == 5);
        CHECK(r.client.tx_bytes + r.client.rx_bytes == baseline::layout::kClientTotal);
    }
}

TEST_CASE("replay attack: original granted, replayed attempt denied") {
    auto result =
        run_scenario(mem_config(ProtocolKind::Flat, 1, AttackKind::Replay), shared_material());
    REQUIRE(result.has_value());
    const RunMetrics& r = result->runs[0];
    CHECK(r.outcome == Outcome::Granted);
    CHECK(r.attack_denied);
    CHECK(r.attack_abort_reason == protocol::AbortReason::Replay);
    CHECK(r.attack_abort_role == "sp");
}

TEST_CASE("tamper attack: flipped client-key bit aborts the client with MAC failure") {
    auto cfg = mem_config(ProtocolKind::Flat, 1, AttackKind::Tamper);
    cfg.target_frame = 5;  // client key is the sixth frame on the wire
    cfg.tamper_offset = wire::kHeaderSize + 20;
    auto result = run_scenario(cfg, shared_material());
    REQUIRE(result.has_value());
    const RunMetrics& r = result->runs[0];
    CHECK(r.outcome == Outcome::Aborted);
    CHECK(r.attack_abort_role == "client");
    CHECK(r.attack_abort_reason == protocol::AbortReason::MacFailure);
}

TEST_CASE("fake-sp attack: IdP aborts, no key material ever transmitted") {
    auto result =
        run_scenario(mem_config(ProtocolKind::Flat, 1, AttackKind::FakeSp), shared_material());
    REQUIRE(result.has_value());
    const RunMetrics& r = result->runs[0];
    CHECK(r.outcome == Outcome::Aborted);
    CHECK(r.attack_abort_role == "idp");
    CHECK(r.attack_abort_reason == protocol::AbortReason::BadSignature);
    for (const auto& e : result->last_transcript) {
        REQUIRE(!e.frame.empty());
        CHECK(e.frame[0] != static_cast<uint8_t>(wire::MessageType::SpKey));
        CHECK(e.frame[0] != static_cast<uint8_t>(wire::MessageType::ClientKey));
    }
}

TEST_CASE("drop attack: one lost frame, one restart, still granted") {
    auto cfg = mem_config(ProtocolKind::Flat, 1, AttackKind::Drop);
    cfg.target_frame = 3;  // lose the SP-key message once
    auto result = run_scenario(cfg, shared_material());
    REQUIRE(result.has_value());
    const RunMetrics& r = result->runs[0];
    CHECK(r.outcome == Outcome::Granted);
    CHECK(r.restarts == 1);
}

TEST_CASE("drop attack with restarts disabled: client aborts on timeout") {
    auto cfg = mem_config(ProtocolKind::Flat, 1, AttackKind::Drop);
    cfg.target_frame = 3;
    cfg.max_restarts = 0;
    auto result = run_scenario(cfg, shared_material());
    REQUIRE(result.has_value());
    CHECK(result->runs[0].outcome == Outcome::Aborted);
    CHECK(result->runs[0].abort_reason == protocol::AbortReason::Timeout);
}

TEST_CASE("config validation: attacks demand the mem transport, runs > 0") {
    ScenarioConfig cfg;
    cfg.transport = TransportKind::Udp;
    cfg.attack = AttackKind::Replay;
    CHECK(!run_scenario(cfg, shared_material()).has_value());
    ScenarioConfig cfg2;
    cfg2.runs = 0;
    CHECK(!run_scenario(cfg2, shared_material()).has_value());
}

TEST_CASE("run report json and table agree; compare flags the claims") {
    auto flat_result = run_scenario(mem_config(ProtocolKind::Flat, 10), shared_material());
    auto base_result = run_scenario(mem_config(ProtocolKind::Baseline, 10), shared_material());
    REQUIRE(flat_result.has_value());
    REQUIRE(base_result.has_value());

    json fr = run_report(mem_config(ProtocolKind::Flat, 10), *flat_result);
    json br = run_report(mem_config(ProtocolKind::Baseline, 10), *base_result);
    CHECK(fr["schema"] == "flat-run-report/1");
    CHECK(fr["outcomes"]["granted"] == 10);
    CHECK(fr["mean"]["client"]["total_bytes"].get<double>() ==
          doctest::Approx(protocol::layout::kClientTotal));
    CHECK(fr["layout"]["client_total"].get<int>() == 577);

    // table and json carry identical numbers
    std::string table = render_run_table(fr);
    CHECK(table.find("577") != std::string::npos);

    auto cmp = compare_reports(fr, br);
    REQUIRE(cmp.has_value());
    CHECK((*cmp)["claims"]["client_reduction_ge_55pct"].get<bool>());
    CHECK((*cmp)["claims"]["overall_lower"].get<bool>());
    CHECK((*cmp)["claims"]["idp_higher"].get<bool>());
    CHECK((*cmp)["client"]["reduction_pct"].get<double>() > 55.0);

    // self-comparison: all deltas zero
    auto self_cmp = compare_reports(fr, fr);
    REQUIRE(self_cmp.has_value());
    CHECK((*self_cmp)["client"]["reduction_pct"].get<double>() == doctest::Approx(0.0));
    CHECK((*self_cmp)["overall"]["reduction_pct"].get<double>() == doctest::Approx(0.0));

    // mismatched run counts refuse to compare
    json br_small = run_report(mem_config(ProtocolKind::Baseline, 3),
                               *run_scenario(mem_config(ProtocolKind::Baseline, 3),
                                             shared_material()));
    CHECK(!compare_reports(fr, br_small).has_value());
}

TEST_CASE("udp scenario: one flat run over loopback reaches granted") {
    ScenarioConfig cfg;
    cfg.protocol = ProtocolKind::Flat;
    cfg.transport = TransportKind::Udp;
    cfg.runs = 1;
    cfg.seed = 9;
    auto result = run_scenario(cfg, shared_material());
    REQUIRE(result.has_value());
    CHECK(result->runs[0].outcome == Outcome::Granted);
    CHECK(result->runs[0].client.tx_bytes + result->runs[0].client.rx_bytes ==
          protocol::layout::kClientTotal);
}
