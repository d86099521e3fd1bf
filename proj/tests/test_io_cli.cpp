// Serialization layer and the batch CLI. The io tests run against the
// library directly; the CLI tests invoke the built binary on the JSON
// fixtures and check stdout, exit codes and the written reports, with
// witnesses replayed through independent library calls.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"

#include "conerisk/io.hpp"
#include "conerisk/pricing.hpp"
#include "conerisk/riskcore.hpp"
#include "conerisk/timecheck.hpp"
#include "support/models.hpp"

using namespace conerisk;
using json = nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("conerisk-cli-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct RunResult {
    int code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args, const std::filesystem::path& dir,
                  const std::string& env = "") {
    const std::string out_file = (dir / "stdout.txt").string();
    const std::string cmd =
        env + (env.empty() ? "" : " ") + CONERISK_BIN + " " + args + " > " + out_file + " 2>&1";
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = io::read_file(out_file);
    return r;
}

std::string fixture(const std::string& name) {
    return (std::filesystem::path(CONERISK_FIXTURES) / name).string();
}

json load_json(const std::filesystem::path& p) { return json::parse(io::read_file(p.string())); }

}  // namespace

TEST_CASE("tree serialization round-trips and prunes null branches") {
    const ScenarioTree tree = testsupport::binomial_tree(2);
    const ScenarioTree back = io::tree_from_json(io::tree_to_json(tree));
    REQUIRE(back.num_nodes() == tree.num_nodes());
    REQUIRE(back.horizon() == tree.horizon());
    REQUIRE(back.assets() == tree.assets());
    for (int v = 0; v < tree.num_nodes(); ++v) {
        CHECK(back.ext_id(v) == tree.ext_id(v));
        CHECK(back.time(v) == tree.time(v));
        CHECK(back.prob(v) == doctest::Approx(tree.prob(v)).epsilon(1e-15));
    }

    // An entire subtree carrying zero mass disappears at load time, taking
    // its emptied-out parent with it.
    const std::string pruned = R"({
        "horizon": 2, "assets": 1, "nodes": [
            {"id": 0, "time": 0},
            {"id": 1, "time": 1, "parent": 0},
            {"id": 2, "time": 1, "parent": 0},
            {"id": 3, "time": 2, "parent": 1, "p": 0.6},
            {"id": 4, "time": 2, "parent": 1, "p": 0.4},
            {"id": 5, "time": 2, "parent": 2, "p": 0.0},
            {"id": 6, "time": 2, "parent": 2, "p": 0.0}]})";
    const ScenarioTree t2 = io::tree_from_json(pruned);
    CHECK(t2.num_nodes() == 4);
    CHECK(t2.num_leaves() == 2);
    CHECK(validate_tree(t2).ok);
    CHECK_THROWS_AS((void)t2.index_of(2), Error);

    // A node that was childless in the input is not pruning's business;
    // it stays and the validator reports it.
    const std::string stub = R"({
        "horizon": 2, "assets": 1, "nodes": [
            {"id": 0, "time": 0},
            {"id": 1, "time": 1, "parent": 0},
            {"id": 2, "time": 1, "parent": 0},
            {"id": 3, "time": 2, "parent": 1, "p": 1.0}]})";
    const ScenarioTree t3 = io::tree_from_json(stub);
    CHECK(t3.num_nodes() == 4);
    CHECK_FALSE(validate_tree(t3).ok);

    CHECK_THROWS_AS(io::tree_from_json("not json"), Error);
    CHECK_THROWS_AS(io::tree_from_json(R"({"horizon": 1, "nodes": []})"), Error);
    CHECK_THROWS_AS(io::tree_from_json(R"({
        "horizon": 1, "assets": 1, "nodes": [
            {"id": 0, "time": 0},
            {"id": 1, "time": 1, "parent": 0}]})"),
                    Error);  // terminal node without p
}

TEST_CASE("market and price serialization enforce their schemas") {
    const testsupport::Model mb = testsupport::model_b();
    const MarketModel back = io::market_from_json(mb.tree, io::market_to_json(mb.tree, mb.market));
    REQUIRE(back.kind() == MarketKind::Cone);
    for (int v = 0; v < mb.tree.num_nodes(); ++v) {
        const auto& g0 = mb.market.cone(v).generators;
        const auto& g1 = back.cone(v).generators;
        REQUIRE(g1.size() == g0.size());
        for (size_t k = 0; k < g0.size(); ++k)
            for (size_t i = 0; i < g0[k].size(); ++i) CHECK(g1[k][i] == g0[k][i]);
    }

    const io::ModelBundle region = io::load_bundle(fixture("region-model.json"));
    REQUIRE(region.market.kind() == MarketKind::Region);
    CHECK(region.market.region(0).G.size() == 2);
    CHECK(region.market.region(0).h[1] == -0.2);
    CHECK(validate_market(region.tree, region.market).ok);
    const std::string round = io::market_to_json(region.tree, region.market);
    CHECK(io::market_from_json(region.tree, round).region(2).recession.size() == 4);

    const ScenarioTree& tree = mb.tree;
    CHECK_THROWS_AS(io::market_from_json(tree, R"({"0": {"bid": [1.0], "ask": [1.0]}})"), Error);
    CHECK_THROWS_AS(io::market_from_json(tree, R"({
        "0": {"bid": [1.0, 2.0], "ask": [1.0, 2.0]},
        "1": {"bid": [2.0], "ask": [2.0]},
        "2": {"bid": [0.5], "ask": [0.5]}})"),
                    Error);  // wrong risky-asset count
    CHECK_THROWS_AS(io::market_from_json(tree, R"({
        "0": {"generators": [[1.0, 0.0]]},
        "1": {"G": [[1.0, 0.0]], "h": [0.0], "recession": [[1.0, 0.0]]},
        "2": {"generators": [[1.0, 0.0]]}})"),
                    Error);  // cone and region nodes mixed
    CHECK_THROWS_AS(io::market_from_json(tree, R"({
        "0": {"bid": [1.0], "ask": [1.0]},
        "00": {"bid": [1.0], "ask": [1.0]},
        "1": {"bid": [2.0], "ask": [2.0]},
        "2": {"bid": [0.5], "ask": [0.5]}})"),
                    Error);  // "00" aliases node 0
    CHECK_THROWS_AS(io::market_from_json(tree, R"({
        "0": {"bid": [1.0], "ask": [1.0]},
        "1": {"bid": [2.0], "ask": [2.0]},
        "7": {"bid": [0.5], "ask": [0.5]}})"),
                    Error);  // unknown node

    PriceSystem sys{AdaptedProcess(tree, 2)};
    for (int v = 0; v < tree.num_nodes(); ++v) sys.S.at(v, 0) = 1.0;
    sys.S.at(tree.index_of(0), 1) = 1.5;
    sys.S.at(tree.index_of(1), 1) = 2.0;
    sys.S.at(tree.index_of(2), 1) = 0.5;
    const PriceSystem sys2 = io::prices_from_json(tree, io::prices_to_json(tree, sys));
    for (int v = 0; v < tree.num_nodes(); ++v)
        for (int i = 0; i < 2; ++i) CHECK(sys2.S.at(v, i) == sys.S.at(v, i));
    CHECK_THROWS_AS(io::prices_from_json(tree, R"({"S": {"0": [1.0, 1.5]}})"), Error);
    CHECK_THROWS_AS(io::prices_from_json(tree, R"({"0": [1.0, 1.5]})"), Error);
}

TEST_CASE("claims, risk values and reports serialize to the documented shapes") {
    const testsupport::Model ma = testsupport::model_a();
    const ScenarioTree& tree = ma.tree;

    // Sparse claims fill missing leaves with zero.
    const auto x = io::claim_from_json(tree, R"({"X": {"1": [-1.0, 0.0]}})");
    CHECK(x == testsupport::short_cash_at(tree, 1));
    const auto x2 = io::claim_from_json(tree, io::claim_to_json(tree, x));
    CHECK(x2 == x);
    CHECK_THROWS_AS(io::claim_from_json(tree, R"({"X": {"0": [1.0, 0.0]}})"), Error);
    CHECK_THROWS_AS(io::claim_from_json(tree, R"({"X": {"1": [1.0]}})"), Error);
    CHECK_THROWS_AS(io::claim_from_json(tree, R"({"X": {"1": [1.0, 0.0], "01": [2.0, 0.0]}})"),
                    Error);

    const RiskSpec spec = RiskSpec::shp_proportional();
    const RiskValue rv = rho_primal(tree, ma.market, spec, x, 0);
    const json rj = json::parse(io::risk_to_json(tree, rv));
    REQUIRE(rj.contains("0"));
    CHECK(rj["0"]["flag"] == "finite");
    // frictionless binomial: the unique up weight (1 - 0.5) / (2 - 0.5)
    CHECK(rj["0"]["value"].get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    RiskValue inf_val;
    inf_val.t = 0;
    inf_val.v = {ExtValue::neg_inf()};
    const json ij = json::parse(io::risk_to_json(tree, inf_val));
    CHECK(ij["0"]["flag"] == "-inf");
    CHECK(ij["0"]["value"].get<double>() == 0.0);

    PriceSystem sys{AdaptedProcess(tree, 2)};
    for (int v = 0; v < tree.num_nodes(); ++v) sys.S.at(v, 0) = 1.0;
    sys.S.at(tree.index_of(0), 1) = 1.0;
    sys.S.at(tree.index_of(1), 1) = 2.0;
    sys.S.at(tree.index_of(2), 1) = 0.5;
    const NaCertificate cert = na_check(tree, sys);
    REQUIRE(cert.holds);
    const json cj = json::parse(io::certificate_to_json(tree, cert.witness, cert.margin));
    CHECK(cj["margin"].get<double>() > 0.0);
    CHECK(cj["q"]["1"].get<double>() + cj["q"]["2"].get<double>() ==
          doctest::Approx(1.0).epsilon(1e-12));

    TcReport rep;
    rep.name = "example";
    rep.pass = false;
    rep.violation = 0.25;
    rep.witness = TcWitness{x, {}, 0, 1, 0, 7};
    const json tj = json::parse(io::tc_report_to_json(tree, rep));
    CHECK(tj["name"] == "example");
    CHECK_FALSE(tj["pass"].get<bool>());
    CHECK(tj["witness"]["trial"] == 7);
    CHECK(tj["witness"]["x"]["X"]["1"][0].get<double>() == -1.0);
    CHECK_FALSE(tj["witness"].contains("y"));

    CHECK(io::levels_from_json("[[0.5, 0.5]]") == std::vector<Vec>{{0.5, 0.5}});
    CHECK_THROWS_AS(io::levels_from_json("{}"), Error);
    CHECK_THROWS_AS(io::levels_from_json(R"([["a"]])"), Error);
}

TEST_CASE("model bundles carry named claims and levels through a round-trip") {
    const io::ModelBundle c = io::load_bundle(fixture("model-c.json"));
    REQUIRE(validate_tree(c.tree).ok);
    REQUIRE(validate_market(c.tree, c.market).ok);
    REQUIRE(c.claims.count("short-cash-uu") == 1);
    CHECK(c.claims.at("zero") == testsupport::zero_claim(c.tree));

    const io::ModelBundle c2 = io::bundle_from_json(io::bundle_to_json(c));
    CHECK(c2.tree.num_nodes() == c.tree.num_nodes());
    CHECK(c2.claims.at("short-cash-uu") == c.claims.at("short-cash-uu"));

    // The JSON fixture reproduces the coded model: same superhedging value
    // for the same claim.
    const testsupport::Model coded = testsupport::model_c();
    const RiskSpec spec = RiskSpec::shp_proportional();
    const RiskValue from_file =
        rho_primal(c.tree, c.market, spec, c.claims.at("short-cash-uu"), 0);
    const RiskValue from_code = rho_primal(coded.tree, coded.market, spec,
                                           testsupport::short_cash_at(coded.tree, 3), 0);
    CHECK(from_file.v[0].value() == doctest::Approx(from_code.v[0].value()).epsilon(1e-12));

    const io::ModelBundle a = io::load_bundle(fixture("model-a.json"));
    REQUIRE(a.levels == std::vector<Vec>{{0.5, 0.5}});
    CHECK_THROWS_AS(io::bundle_from_json(R"({"tree": {}})"), Error);
}

TEST_CASE("cli validate separates clean, broken and arbitrage models") {
    const auto dir = scratch("validate");
    const RunResult ok =
        run_cli("validate --model " + fixture("model-a.json") + " --out " + dir.string(), dir);
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS robust no-arbitrage") != std::string::npos);
    const json rep = load_json(dir / "validate-report.json");
    CHECK(rep["tree"]["ok"].get<bool>());
    CHECK(rep["no_arbitrage"]["margin"].get<double>() > 0.0);

    const RunResult broken = run_cli(
        "validate --model " + fixture("broken-probabilities.json") + " --out " + dir.string(),
        dir);
    CHECK(broken.code == 1);
    const json brep = load_json(dir / "validate-report.json");
    CHECK_FALSE(brep["tree"]["ok"].get<bool>());
    CHECK(brep["tree"]["problems"][0].get<std::string>().find("sum") != std::string::npos);

    const RunResult arb = run_cli(
        "validate --model " + fixture("arbitrage.json") + " --out " + dir.string(), dir);
    CHECK(arb.code == 1);
    CHECK(arb.out.find("robust no-arbitrage fails") != std::string::npos);

    const RunResult missing = run_cli("validate --model /does/not/exist.json", dir);
    CHECK(missing.code == 2);
}

TEST_CASE("cli price reproduces the interval-market value from both sides") {
    const auto dir = scratch("price");
    const RunResult r = run_cli("price --model " + fixture("model-b.json") +
                                    " --claim short-cash-u --out " + dir.string() + " --csv",
                                dir);
    REQUIRE(r.code == 0);
    const json rep = load_json(dir / "price-report.json");
    CHECK(rep["primal"]["0"]["value"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep["dual"]["0"]["value"].get<double>() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(rep["residual"].get<double>() < 1e-6);
    CHECK(io::read_file((dir / "price-report.csv").string()).find("0,0.5,finite") !=
          std::string::npos);

    // The same claim provided as a standalone file prices identically.
    const RunResult rf = run_cli("price --model " + fixture("model-b.json") + " --claim " +
                                     fixture("claim-short-u.json") + " --out " + dir.string(),
                                 dir);
    REQUIRE(rf.code == 0);
    const json repf = load_json(dir / "price-report.json");
    CHECK(repf["primal"]["0"]["value"] == rep["primal"]["0"]["value"]);

    const RunResult zero = run_cli(
        "price --model " + fixture("model-a.json") + " --claim zero --out " + dir.string(), dir);
    REQUIRE(zero.code == 0);
    CHECK(load_json(dir / "price-report.json")["primal"]["0"]["value"].get<double>() ==
          doctest::Approx(0.0).epsilon(1e-12));

    // Composed AV@R through the bundled levels, one value per node.
    const RunResult avar =
        run_cli("price --model " + fixture("model-a.json") +
                    " --claim short-cash-u --spec avar --out " + dir.string(),
                dir);
    REQUIRE(avar.code == 0);
    const json arep = load_json(dir / "price-report.json");
    CHECK(arep["spec"] == "avar");
    CHECK(arep["value"]["0"]["flag"] == "finite");
    // lambda = 1/2 lets the density double, but the asset-2 consistency
    // row q(u) * 0.5 * S(u) <= 0.5 * S(0) caps the up weight at 1/2, so
    // the up-state cash short prices at exactly that weight. By hand:
    // sup{q(u) : q(u) <= 0.5, q(d) <= 1, q(u) + q(d) = 1} = 0.5.
    CHECK(arep["value"]["0"]["value"].get<double>() ==
          doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("cli audit writes a deterministic matrix and an informational reversal witness") {
    const auto d1 = scratch("audit1");
    const RunResult a = run_cli(
        "audit --model " + fixture("model-a.json") + " --out " + d1.string(), d1);
    CHECK(a.code == 0);
    CHECK(a.out.find("INFO rho-reversal: none found") != std::string::npos);
    CHECK(a.out.find("FAIL") == std::string::npos);

    const RunResult c = run_cli(
        "audit --model " + fixture("model-c.json") + " --out " + d1.string(), d1);
    CHECK(c.code == 0);
    const json rep = load_json(d1 / "audit-report.json");
    CHECK(rep["pass"].get<bool>());
    for (const json& row : rep["checks"]) CHECK(row["pass"].get<bool>());
    REQUIRE(rep["falsifier"]["found"].get<bool>());
    const json witness = load_json(d1 / "witness-rho-reversal.json");
    CHECK(witness["witness"]["t"].get<int>() < witness["witness"]["s"].get<int>());

    // Same config, fresh directory: byte-identical report.
    const auto d2 = scratch("audit2");
    const RunResult c2 = run_cli(
        "audit --model " + fixture("model-c.json") + " --out " + d2.string(), d2);
    CHECK(c2.code == 0);
    CHECK(io::read_file((d1 / "audit-report.json").string()) ==
          io::read_file((d2 / "audit-report.json").string()));

    // And the worker pool size must not leak into the bytes.
    const auto d3 = scratch("audit3");
    const RunResult c3 = run_cli(
        "audit --model " + fixture("model-c.json") + " --out " + d3.string(), d3,
        "CONERISK_THREADS=3");
    CHECK(c3.code == 0);
    CHECK(io::read_file((d1 / "audit-report.json").string()) ==
          io::read_file((d3 / "audit-report.json").string()));

    // A corrupted model gets targeted FAIL rows and no theory noise.
    const auto d4 = scratch("audit4");
    const RunResult broken = run_cli(
        "audit --model " + fixture("broken-probabilities.json") + " --out " + d4.string(), d4);
    CHECK(broken.code == 1);
    CHECK(broken.out.find("FAIL tree") != std::string::npos);
    CHECK(broken.out.find("pi-recursion") == std::string::npos);

    // Span restriction: only the requested pair shows up.
    const auto d5 = scratch("audit5");
    const RunResult one = run_cli("audit --model " + fixture("model-c.json") +
                                      " --t 1 --s 2 --out " + d5.string(),
                                  d5);
    CHECK(one.code == 0);
    CHECK(one.out.find("pi-recursion t=1 s=2") != std::string::npos);
    CHECK(one.out.find("pi-recursion t=0") == std::string::npos);
}

TEST_CASE("cli falsify gates on the reversal and its witness replays") {
    const auto dir = scratch("falsify");
    const RunResult none = run_cli("falsify --model " + fixture("model-a.json") +
                                       " --samples 300 --out " + dir.string(),
                                   dir);
    CHECK(none.code == 0);
    CHECK(none.out.find("no reversal in 300 trials") != std::string::npos);

    const RunResult hit = run_cli(
        "falsify --model " + fixture("model-c.json") + " --out " + dir.string(), dir);
    REQUIRE(hit.code == 1);
    const json rep = load_json(dir / "falsify-report.json");
    REQUIRE_FALSE(rep["pass"].get<bool>());

    // Replay the stored pair through fresh primal calls: dominated at s,
    // strictly more expensive at t.
    const io::ModelBundle c = io::load_bundle(fixture("model-c.json"));
    const RiskSpec spec = RiskSpec::shp_proportional();
    const json& w = rep["witness"];
    const auto x = io::claim_from_json(c.tree, w["x"].dump());
    const auto y = io::claim_from_json(c.tree, w["y"].dump());
    const int t = w["t"].get<int>(), s = w["s"].get<int>();
    const RiskValue rsx = rho_primal(c.tree, c.market, spec, x, s);
    const RiskValue rsy = rho_primal(c.tree, c.market, spec, y, s);
    for (size_t k = 0; k < rsx.v.size(); ++k)
        CHECK(rsx.v[k].value() <= rsy.v[k].value() + 1e-9);
    const RiskValue rtx = rho_primal(c.tree, c.market, spec, x, t);
    const RiskValue rty = rho_primal(c.tree, c.market, spec, y, t);
    double gap = 0.0;
    for (size_t k = 0; k < rtx.v.size(); ++k)
        gap = std::max(gap, rtx.v[k].value() - rty.v[k].value());
    CHECK(gap == doctest::Approx(rep["violation"].get<double>()).epsilon(1e-9));
}

TEST_CASE("cli pi and sample-prices expose the sampled dual surface") {
    const auto dir = scratch("pi");
    const RunResult r = run_cli("pi --model " + fixture("model-c.json") +
                                    " --claim short-cash-uu --samples 16 --out " + dir.string(),
                                dir);
    REQUIRE(r.code == 0);
    const json rep = load_json(dir / "pi-report.json");
    CHECK(rep["worst_gap"].get<double>() >= -1e-6);
    REQUIRE(rep["systems"].is_array());
    CHECK(static_cast<int>(rep["systems"].size()) == rep["samples_accepted"].get<int>());
    const double max0 = rep["sampled_max"]["0"]["value"].get<double>();
    const double ref0 = rep["reference"]["0"]["value"].get<double>();
    CHECK(max0 <= ref0 + 1e-6);

    const RunResult sp = run_cli("sample-prices --model " + fixture("model-c.json") +
                                     " --samples 12 --out " + dir.string(),
                                 dir);
    REQUIRE(sp.code == 0);
    const json srep = load_json(dir / "samples.json");
    CHECK(srep["accepted"].get<int>() + srep["duplicates"].get<int>() +
              srep["rejected"].get<int>() ==
          srep["requested"].get<int>());
    REQUIRE(srep["systems"].size() > 0);
    const json& first = srep["systems"][0];
    for (int v = 0; v < 7; ++v)
        CHECK(first["S"][std::to_string(v)][0].get<double>() == 1.0);
    double mass = 0.0;
    for (const auto& [key, val] : first["q"].items()) mass += val.get<double>();
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
}
