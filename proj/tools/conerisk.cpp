// Batch front end: loads JSON model bundles, runs pricing and consistency
// suites and writes machine-readable reports. Exit codes: 0 all checks
// pass, 1 at least one check fails, 2 input or usage errors.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "conerisk/io.hpp"
#include "conerisk/market.hpp"
#include "conerisk/pricing.hpp"
#include "conerisk/riskcore.hpp"
#include "conerisk/rng.hpp"
#include "conerisk/timecheck.hpp"
#include "conerisk/tree.hpp"

namespace {

using conerisk::Error;
using json = nlohmann::json;

struct Config {
    std::string model;
    std::string claim;
    std::string spec;    // shp, shp-convex or avar; empty = derive from market
    std::string levels;  // inline JSON array or a file path
    std::string out = ".";
    int t = 0;
    int s = -1;
    int samples = -1;  // -1 = per-command default
    int threads = 0;   // 0 = env or hardware default
    std::uint64_t seed = 20240817;
    double tol = 1e-6;
    bool csv = false;
    bool t_given = false;
    bool s_given = false;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int pool_size(const Config& cfg) {
    if (const char* env = std::getenv("CONERISK_THREADS")) {
        const int k = std::atoi(env);
        if (k > 0) return k;
    }
    if (cfg.threads > 0) return cfg.threads;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Index-sharded fan-out; results must be written into per-index slots so
/// reductions never see scheduling order. The lowest-index exception wins
/// to keep error surfaces deterministic too.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

json jparse(const std::string& text) { return json::parse(text); }

void write_report(const std::string& dir, const std::string& name, const json& j) {
    std::filesystem::create_directories(dir);
    conerisk::io::write_file((std::filesystem::path(dir) / name).string(), j.dump(2) + "\n");
}

std::string report_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void print_check(bool pass, const std::string& name, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << "\n";
}

std::vector<double> resolve_claim(const conerisk::io::ModelBundle& bundle,
                                  const std::string& ref) {
    const auto it = bundle.claims.find(ref);
    if (it != bundle.claims.end()) return it->second;
    std::string text;
    try {
        text = conerisk::io::read_file(ref);
    } catch (const Error& e) {
        throw Error("claim \"" + ref + "\" is neither a bundle claim name nor a readable file (" +
                    e.what() + ")");
    }
    return conerisk::io::claim_from_json(bundle.tree, text);
}

std::vector<conerisk::Vec> resolve_levels(const Config& cfg,
                                          const conerisk::io::ModelBundle& bundle) {
    if (cfg.levels.empty()) return bundle.levels;
    const size_t first = cfg.levels.find_first_not_of(" \t\n");
    const std::string text = first != std::string::npos && cfg.levels[first] == '['
                                 ? cfg.levels
                                 : conerisk::io::read_file(cfg.levels);
    return conerisk::io::levels_from_json(text);
}

conerisk::RiskSpec resolve_spec(const Config& cfg, const conerisk::io::ModelBundle& bundle) {
    const std::vector<conerisk::Vec> levels = resolve_levels(cfg, bundle);
    std::string name = cfg.spec;
    if (name.empty())
        name = bundle.market.kind() == conerisk::MarketKind::Cone ? "shp" : "shp-convex";
    conerisk::RiskSpec spec;
    if (name == "shp") {
        spec = conerisk::RiskSpec::shp_proportional();
    } else if (name == "shp-convex") {
        spec = conerisk::RiskSpec::shp_convex();
    } else if (name == "avar") {
        if (levels.empty())
            throw Error("avar spec needs level vectors (--levels or bundle \"levels\")");
        spec = conerisk::RiskSpec::avar(levels);
    } else {
        throw Error("unknown spec \"" + name + "\" (choose shp, shp-convex or avar)");
    }
    conerisk::validate_spec(bundle.tree, bundle.market, spec);
    return spec;
}

std::string spec_name(const conerisk::RiskSpec& spec) {
    switch (spec.kind) {
        case conerisk::RiskKind::ShpProportional: return "shp";
        case conerisk::RiskKind::ShpConvex: return "shp-convex";
        case conerisk::RiskKind::AvarComposed: return "avar";
    }
    return "?";
}

void check_time(const conerisk::ScenarioTree& tree, int t) {
    if (t < 0 || t > tree.horizon())
        throw Error("time " + std::to_string(t) + " is outside 0.." +
                    std::to_string(tree.horizon()));
}

/// Terminal claims with i.i.d. uniform [-1, 1] entries, one RNG stream
/// per claim index so the set does not depend on evaluation order.
std::vector<std::vector<double>> random_claims(const conerisk::ScenarioTree& tree, int n,
                                               std::uint64_t master) {
    std::vector<std::vector<double>> out(static_cast<size_t>(n));
    const size_t len = static_cast<size_t>(tree.num_leaves()) * tree.assets();
    for (int k = 0; k < n; ++k) {
        auto gen = conerisk::rng_for(master, 5000 + static_cast<std::uint64_t>(k));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        auto& x = out[static_cast<size_t>(k)];
        x.resize(len);
        for (double& e : x) e = u(gen);
    }
    return out;
}

double relative_gap(const conerisk::ExtValue& a, const conerisk::ExtValue& b) {
    if (a.flag != b.flag) return std::numeric_limits<double>::infinity();
    if (!a.finite_p()) return 0.0;
    const double scale = std::max({1.0, std::abs(a.value()), std::abs(b.value())});
    return std::abs(a.value() - b.value()) / scale;
}

// ---------------------------------------------------------------- validate

int run_validate(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const conerisk::TreeReport tr = conerisk::validate_tree(bundle.tree);
    const conerisk::MarketReport mr = conerisk::validate_market(bundle.tree, bundle.market);

    json rep;
    rep["tree"] = {{"ok", tr.ok}, {"problems", tr.problems}};
    rep["market"] = {{"ok", mr.ok}, {"problems", mr.problems}};

    bool na_ok = false;
    std::vector<std::string> na_problems;
    if (tr.ok && mr.ok) {
        const conerisk::NaReport na = conerisk::robust_na_check(bundle.tree, bundle.market);
        na_ok = na.holds;
        if (!na.holds) na_problems.push_back("robust no-arbitrage fails");
        rep["no_arbitrage"] = {{"ok", na.holds}, {"margin", na.margin}, {"problems", na_problems}};
    } else {
        na_problems.push_back("skipped: tree or market invariants fail");
        rep["no_arbitrage"] = {{"ok", false}, {"margin", 0.0}, {"problems", na_problems}};
    }

    print_check(tr.ok, "tree invariants", tr.ok ? "" : tr.problems.front());
    print_check(mr.ok, "market invariants", mr.ok ? "" : mr.problems.front());
    print_check(na_ok, "robust no-arbitrage", na_ok ? "" : na_problems.front());

    write_report(cfg.out, "validate-report.json", rep);
    std::cout << "report: " << report_path(cfg.out, "validate-report.json") << "\n";
    return tr.ok && mr.ok && na_ok ? 0 : 1;
}

// ------------------------------------------------------------------- price

void write_price_csv(const Config& cfg, const conerisk::ScenarioTree& tree, const json& rep) {
    std::ostringstream csv;
    csv << "node,primal,primal_flag,dual,dual_flag\n";
    const json& primal = rep.contains("primal") ? rep["primal"] : rep["value"];
    for (int v : tree.nodes_at(rep["t"].get<int>())) {
        const std::string key = std::to_string(tree.ext_id(v));
        const json& p = primal.at(key);
        csv << key << "," << fmt(p["value"].get<double>()) << ","
            << p["flag"].get<std::string>() << ",";
        if (rep.contains("dual")) {
            const json& d = rep["dual"].at(key);
            csv << fmt(d["value"].get<double>()) << "," << d["flag"].get<std::string>();
        } else {
            csv << ",";
        }
        csv << "\n";
    }
    conerisk::io::write_file(report_path(cfg.out, "price-report.csv"), csv.str());
}

int run_price(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const conerisk::RiskSpec spec = resolve_spec(cfg, bundle);
    const std::vector<double> x = resolve_claim(bundle, cfg.claim);
    check_time(bundle.tree, cfg.t);
    const int threads = pool_size(cfg);
    (void)threads;

    json rep;
    rep["t"] = cfg.t;
    rep["spec"] = spec_name(spec);
    int exit_code = 0;

    if (spec.kind == conerisk::RiskKind::AvarComposed) {
        const int n = cfg.samples > 0 ? cfg.samples : 64;
        const conerisk::SampleSet ss =
            conerisk::sample_price_systems(bundle.tree, bundle.market, n, cfg.seed);
        rep["samples_accepted"] = ss.accepted;
        if (ss.pairs.empty()) {
            print_check(false, "avar sampling", "no admissible price systems");
            rep["value"] = nullptr;
            exit_code = 1;
        } else {
            const conerisk::RiskValue v = conerisk::avar_composed(bundle.tree, bundle.market,
                                                                  spec, x, cfg.t, ss.pairs);
            rep["value"] = jparse(conerisk::io::risk_to_json(bundle.tree, v));
            for (size_t k = 0; k < v.v.size(); ++k) {
                const long long ext = bundle.tree.ext_id(bundle.tree.nodes_at(cfg.t)[k]);
                std::cout << "value[" << ext << "] = "
                          << (v.v[k].finite_p() ? fmt(v.v[k].value())
                                                : to_string(v.v[k].flag))
                          << "\n";
            }
            print_check(true, "avar composed value",
                        "over " + std::to_string(ss.accepted) + " sampled systems");
        }
    } else {
        const conerisk::RiskValue primal =
            conerisk::rho_primal(bundle.tree, bundle.market, spec, x, cfg.t);
        rep["primal"] = jparse(conerisk::io::risk_to_json(bundle.tree, primal));
        for (size_t k = 0; k < primal.v.size(); ++k) {
            const long long ext = bundle.tree.ext_id(bundle.tree.nodes_at(cfg.t)[k]);
            std::cout << "value[" << ext << "] = "
                      << (primal.v[k].finite_p() ? fmt(primal.v[k].value())
                                                 : to_string(primal.v[k].flag))
                      << "\n";
        }
        if (spec.kind == conerisk::RiskKind::ShpProportional) {
            const conerisk::RiskValue dual =
                conerisk::rho_dual_exact(bundle.tree, bundle.market, spec, x, cfg.t);
            rep["dual"] = jparse(conerisk::io::risk_to_json(bundle.tree, dual));
            double residual = 0.0;
            for (size_t k = 0; k < primal.v.size(); ++k)
                residual = std::max(residual, relative_gap(primal.v[k], dual.v[k]));
            rep["residual"] = residual;
            const bool ok = residual <= cfg.tol;
            print_check(ok, "primal-dual residual", fmt(residual) + " (tol " + fmt(cfg.tol) + ")");
            if (!ok) exit_code = 1;
        }
        if (cfg.samples > 0) {
            const conerisk::SampleSet ss =
                conerisk::sample_price_systems(bundle.tree, bundle.market, cfg.samples, cfg.seed);
            rep["samples_accepted"] = ss.accepted;
            if (!ss.pairs.empty()) {
                const conerisk::GapReport gap = conerisk::rho_from_samples(
                    bundle.tree, bundle.market, spec, x, cfg.t, ss.pairs);
                rep["sampled"] = jparse(conerisk::io::risk_to_json(bundle.tree, gap.value));
                rep["worst_gap"] = gap.worst_gap;
                const bool ok = gap.worst_gap >= -cfg.tol;
                print_check(ok, "sampled lower bound",
                            "worst gap " + fmt(gap.worst_gap) + " (tol " + fmt(cfg.tol) + ")");
                if (!ok) exit_code = 1;
            }
        }
    }

    write_report(cfg.out, "price-report.json", rep);
    if (cfg.csv) write_price_csv(cfg, bundle.tree, rep);
    std::cout << "report: " << report_path(cfg.out, "price-report.json") << "\n";
    return exit_code;
}

// ---------------------------------------------------------------------- pi

int run_pi(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const conerisk::RiskSpec spec = resolve_spec(cfg, bundle);
    const std::vector<double> x = resolve_claim(bundle, cfg.claim);
    check_time(bundle.tree, cfg.t);
    const int n = cfg.samples > 0 ? cfg.samples : 64;

    const conerisk::SampleSet ss =
        conerisk::sample_price_systems(bundle.tree, bundle.market, n, cfg.seed);
    json rep;
    rep["t"] = cfg.t;
    rep["spec"] = spec_name(spec);
    rep["samples_accepted"] = ss.accepted;
    if (ss.pairs.empty()) {
        print_check(false, "price-system sampling", "no admissible price systems");
        write_report(cfg.out, "pi-report.json", rep);
        std::cout << "report: " << report_path(cfg.out, "pi-report.json") << "\n";
        return 1;
    }

    // One fixed-selection value per sampled system, then the node-wise max
    // against the exact measure; sampling from below keeps the gap >= 0 up
    // to LP noise.
    const int m = static_cast<int>(ss.pairs.size());
    std::vector<conerisk::RiskValue> per(static_cast<size_t>(m));
    parallel_for(m, pool_size(cfg), [&](int k) {
        per[static_cast<size_t>(k)] = conerisk::pi_S(bundle.tree, bundle.market, spec, x,
                                                     ss.pairs[static_cast<size_t>(k)].S, cfg.t);
    });

    const auto& slice = bundle.tree.nodes_at(cfg.t);
    conerisk::RiskValue best;
    best.t = cfg.t;
    best.v.assign(slice.size(), conerisk::ExtValue::neg_inf());
    for (const auto& rv : per)
        for (size_t i = 0; i < slice.size(); ++i) {
            const conerisk::ExtValue& e = rv.v[i];
            if (!e.finite_p()) continue;
            if (!best.v[i].finite_p() || e.value() > best.v[i].value()) best.v[i] = e;
        }

    const conerisk::RiskValue reference =
        spec.kind == conerisk::RiskKind::AvarComposed
            ? conerisk::avar_composed(bundle.tree, bundle.market, spec, x, cfg.t, ss.pairs)
            : conerisk::rho_primal(bundle.tree, bundle.market, spec, x, cfg.t);

    double worst_gap = 0.0;
    for (size_t i = 0; i < slice.size(); ++i) {
        if (!reference.v[i].finite_p() || !best.v[i].finite_p()) continue;
        worst_gap = std::min(worst_gap, reference.v[i].value() - best.v[i].value());
    }

    json systems = json::array();
    for (int k = 0; k < m; ++k) {
        json e;
        e["index"] = k;
        e["value"] = jparse(conerisk::io::risk_to_json(bundle.tree, per[static_cast<size_t>(k)]));
        systems.push_back(std::move(e));
    }
    rep["systems"] = std::move(systems);
    rep["sampled_max"] = jparse(conerisk::io::risk_to_json(bundle.tree, best));
    rep["reference"] = jparse(conerisk::io::risk_to_json(bundle.tree, reference));
    rep["worst_gap"] = worst_gap;

    const bool ok = worst_gap >= -cfg.tol;
    print_check(ok, "sampled lower bound",
                "worst gap " + fmt(worst_gap) + " over " + std::to_string(m) + " systems");
    write_report(cfg.out, "pi-report.json", rep);
    if (cfg.csv) {
        std::ostringstream csv;
        csv << "node,sampled_max,flag,reference,reference_flag\n";
        for (size_t i = 0; i < slice.size(); ++i) {
            csv << bundle.tree.ext_id(slice[i]) << ","
                << fmt(best.v[i].finite_p() ? best.v[i].value() : 0.0) << ","
                << to_string(best.v[i].flag) << ","
                << fmt(reference.v[i].finite_p() ? reference.v[i].value() : 0.0) << ","
                << to_string(reference.v[i].flag) << "\n";
        }
        conerisk::io::write_file(report_path(cfg.out, "pi-report.csv"), csv.str());
    }
    std::cout << "report: " << report_path(cfg.out, "pi-report.json") << "\n";
    return ok ? 0 : 1;
}

// ------------------------------------------------------------------- audit

struct AuditRow {
    std::string name;
    int t = -1;
    int s = -1;
    bool pass = true;
    double violation = 0.0;
    std::string note;
    std::optional<conerisk::TcReport> witness_report;
};

json row_to_json(const AuditRow& row, const std::string& witness_file) {
    json j;
    j["name"] = row.name;
    j["t"] = row.t;
    j["s"] = row.s;
    j["pass"] = row.pass;
    j["violation"] = row.violation;
    if (!row.note.empty()) j["note"] = row.note;
    if (!witness_file.empty()) j["witness_file"] = witness_file;
    return j;
}

std::string row_slug(const AuditRow& row) {
    std::string slug = row.name;
    if (row.t >= 0) slug += "-" + std::to_string(row.t);
    if (row.s >= 0) slug += "-" + std::to_string(row.s);
    return slug;
}

/// Merges a batch of per-cell reports into one row: worst violation, all
/// cells must pass, the lowest failing index donates the witness.
AuditRow reduce_reports(std::string name, int t, int s,
                        const std::vector<conerisk::TcReport>& cells) {
    AuditRow row;
    row.name = std::move(name);
    row.t = t;
    row.s = s;
    for (const auto& rep : cells) {
        row.violation = std::max(row.violation, rep.violation);
        if (!rep.pass && row.pass) {
            row.pass = false;
            row.witness_report = rep;
        }
    }
    return row;
}

int run_audit(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const conerisk::RiskSpec spec = resolve_spec(cfg, bundle);
    const conerisk::ScenarioTree& tree = bundle.tree;
    const int threads = pool_size(cfg);

    json rep;
    rep["config"] = {{"model", cfg.model}, {"spec", spec_name(spec)},
                     {"seed", cfg.seed},   {"samples", cfg.samples},
                     {"t", cfg.t_given ? cfg.t : -1}, {"s", cfg.s_given ? cfg.s : -1}};

    // Model invariants come first; theory checks on a broken model would
    // only report noise, so a failure here short-circuits the audit.
    const conerisk::TreeReport tr = conerisk::validate_tree(tree);
    const conerisk::MarketReport mr = conerisk::validate_market(tree, bundle.market);
    bool na_ok = false;
    if (tr.ok && mr.ok) na_ok = conerisk::robust_na_check(tree, bundle.market).holds;

    std::vector<json> check_rows;
    check_rows.push_back(row_to_json({"tree", -1, -1, tr.ok, 0.0, tr.ok ? "" : tr.problems.front(), {}}, ""));
    check_rows.push_back(row_to_json({"market", -1, -1, mr.ok, 0.0, mr.ok ? "" : mr.problems.front(), {}}, ""));
    check_rows.push_back(row_to_json(
        {"no-arbitrage", -1, -1, na_ok, 0.0, na_ok ? "" : "robust no-arbitrage fails", {}}, ""));
    print_check(tr.ok, "tree", tr.ok ? "" : tr.problems.front());
    print_check(mr.ok, "market", mr.ok ? "" : mr.problems.front());
    print_check(na_ok, "no-arbitrage", na_ok ? "" : "robust no-arbitrage fails");

    if (!tr.ok || !mr.ok || !na_ok) {
        rep["checks"] = check_rows;
        rep["pass"] = false;
        write_report(cfg.out, "audit-report.json", rep);
        std::cout << "report: " << report_path(cfg.out, "audit-report.json") << "\n";
        return 1;
    }

    if (cfg.t_given) check_time(tree, cfg.t);
    if (cfg.s_given) {
        check_time(tree, cfg.s);
        if (cfg.t_given && cfg.t >= cfg.s) throw Error("--t must be strictly before --s");
    }
    std::vector<std::pair<int, int>> spans;
    for (int t = 0; t < tree.horizon(); ++t)
        for (int s = t + 1; s <= tree.horizon(); ++s) {
            if (cfg.t_given && t != cfg.t) continue;
            if (cfg.s_given && s != cfg.s) continue;
            spans.emplace_back(t, s);
        }
    if (spans.empty()) throw Error("no (t, s) span matches the requested restriction");

    const int n_systems = cfg.samples > 0 ? cfg.samples : 8;
    const conerisk::SampleSet ss =
        conerisk::sample_price_systems(tree, bundle.market, n_systems, cfg.seed);
    rep["sampling"] = {{"requested", ss.requested},
                       {"accepted", ss.accepted},
                       {"duplicates", ss.duplicates},
                       {"rejected", ss.rejected}};
    const bool sampled_ok = !ss.pairs.empty();
    check_rows.push_back(row_to_json({"sampling", -1, -1, sampled_ok, 0.0,
                                      std::to_string(ss.accepted) + " systems", {}},
                                     ""));
    print_check(sampled_ok, "sampling", std::to_string(ss.accepted) + " systems accepted");
    if (!sampled_ok) {
        rep["checks"] = check_rows;
        rep["pass"] = false;
        write_report(cfg.out, "audit-report.json", rep);
        std::cout << "report: " << report_path(cfg.out, "audit-report.json") << "\n";
        return 1;
    }

    constexpr int kClaims = 24;
    constexpr int kSplitTrials = 8;
    constexpr long long kFalsifyTrials = 200;
    const auto claims = random_claims(tree, kClaims, cfg.seed);
    const int m = static_cast<int>(ss.pairs.size());

    bool all_pass = true;
    std::vector<AuditRow> rows;

    for (const auto& [t, s] : spans) {
        {  // recursion of the fixed-selection risk, per (system, claim)
            std::vector<conerisk::TcReport> cells(static_cast<size_t>(m * kClaims));
            parallel_for(m * kClaims, threads, [&, t = t, s = s](int i) {
                const int k = i / kClaims, c = i % kClaims;
                cells[static_cast<size_t>(i)] = conerisk::pi_recursion_check(
                    tree, bundle.market, spec, claims[static_cast<size_t>(c)],
                    ss.pairs[static_cast<size_t>(k)].S, t, s);
            });
            rows.push_back(reduce_reports("pi-recursion", t, s, cells));
        }
        if (spec.kind != conerisk::RiskKind::AvarComposed) {
            // sample-restricted recursion of the scalar measure, per claim
            std::vector<conerisk::TcReport> cells(static_cast<size_t>(kClaims));
            parallel_for(kClaims, threads, [&, t = t, s = s](int c) {
                cells[static_cast<size_t>(c)] = conerisk::rho_recursion_check(
                    tree, bundle.market, spec, claims[static_cast<size_t>(c)], t, s, ss.pairs);
            });
            rows.push_back(reduce_reports("rho-recursion", t, s, cells));
        }
        {  // acceptance-set decomposition, per sampled system
            std::vector<conerisk::TcReport> cells(static_cast<size_t>(m));
            parallel_for(m, threads, [&, t = t, s = s](int k) {
                cells[static_cast<size_t>(k)] = conerisk::acceptance_decomposition_check(
                    tree, bundle.market, spec, ss.pairs[static_cast<size_t>(k)].S, t, s,
                    kSplitTrials,
                    conerisk::derive_seed(cfg.seed, 7000 + static_cast<std::uint64_t>(k)));
            });
            rows.push_back(reduce_reports("acceptance-decomposition", t, s, cells));
        }
    }

    {  // supermartingale of value plus penalty, pairs with finite penalty
        std::vector<int> usable;
        for (int k = 0; k < m; ++k) {
            const conerisk::RiskValue beta = conerisk::penalty_beta(
                tree, bundle.market, spec, ss.pairs[static_cast<size_t>(k)], 0);
            bool finite = true;
            for (const auto& e : beta.v) finite = finite && e.finite_p();
            if (finite) usable.push_back(k);
        }
        const int mu = static_cast<int>(usable.size());
        std::vector<conerisk::TcReport> cells(static_cast<size_t>(mu * kClaims));
        parallel_for(mu * kClaims, threads, [&](int i) {
            const int k = usable[static_cast<size_t>(i / kClaims)], c = i % kClaims;
            cells[static_cast<size_t>(i)] = conerisk::supermartingale_check(
                tree, bundle.market, spec, claims[static_cast<size_t>(c)],
                ss.pairs[static_cast<size_t>(k)]);
        });
        AuditRow row = reduce_reports("supermartingale", -1, -1, cells);
        row.note = std::to_string(mu) + " of " + std::to_string(m) + " pairs admissible";
        rows.push_back(std::move(row));
    }

    for (const AuditRow& row : rows) {
        // Witness paths inside the report stay relative to the report's
        // own directory so identical runs into different --out locations
        // still produce identical bytes.
        std::string witness_name;
        if (row.witness_report.has_value()) {
            witness_name = "witness-" + row_slug(row) + ".json";
            std::filesystem::create_directories(cfg.out);
            conerisk::io::write_file(report_path(cfg.out, witness_name),
                                     conerisk::io::tc_report_to_json(tree, *row.witness_report));
        }
        check_rows.push_back(row_to_json(row, witness_name));
        std::string label = row.name;
        if (row.t >= 0) label += " t=" + std::to_string(row.t) + " s=" + std::to_string(row.s);
        std::string detail = "max violation " + fmt(row.violation);
        if (!row.note.empty()) detail += " (" + row.note + ")";
        if (!witness_name.empty()) detail += " witness=" + report_path(cfg.out, witness_name);
        print_check(row.pass, label, detail);
        all_pass = all_pass && row.pass;
    }

    // Informational: the scalar measure is not expected to recurse on
    // markets whose cones disagree across siblings, so a reversal witness
    // documents the model rather than failing the audit. The falsify
    // subcommand turns the same search into a hard gate.
    json falsifier;
    if (spec.kind == conerisk::RiskKind::AvarComposed) {
        falsifier["ran"] = false;
        falsifier["note"] = "reversal search targets the superhedging measures";
        std::cout << "INFO rho-reversal: skipped for the avar spec\n";
    } else {
        const conerisk::TcReport fr =
            conerisk::rho_tc_falsify(tree, bundle.market, spec, kFalsifyTrials, cfg.seed);
        falsifier["ran"] = true;
        falsifier["found"] = !fr.pass;
        falsifier["violation"] = fr.violation;
        if (!fr.pass) {
            const std::string name = "witness-rho-reversal.json";
            std::filesystem::create_directories(cfg.out);
            conerisk::io::write_file(report_path(cfg.out, name),
                                     conerisk::io::tc_report_to_json(tree, fr));
            falsifier["trial"] = fr.witness->trial;
            falsifier["witness_file"] = name;
            std::cout << "WITNESS rho-reversal: trial " << fr.witness->trial << " violation "
                      << fmt(fr.violation) << " witness=" << report_path(cfg.out, name) << "\n";
        } else {
            std::cout << "INFO rho-reversal: none found in " << kFalsifyTrials << " trials\n";
        }
    }
    rep["falsifier"] = std::move(falsifier);

    rep["checks"] = check_rows;
    rep["pass"] = all_pass;
    write_report(cfg.out, "audit-report.json", rep);
    if (cfg.csv) {
        std::ostringstream csv;
        csv << "name,t,s,pass,violation\n";
        for (const json& r : check_rows)
            csv << r["name"].get<std::string>() << "," << r["t"].get<int>() << ","
                << r["s"].get<int>() << "," << (r["pass"].get<bool>() ? 1 : 0) << ","
                << fmt(r["violation"].get<double>()) << "\n";
        conerisk::io::write_file(report_path(cfg.out, "audit-report.csv"), csv.str());
    }
    std::cout << "report: " << report_path(cfg.out, "audit-report.json") << "\n";
    return all_pass ? 0 : 1;
}

// ----------------------------------------------------------- sample-prices

int run_sample_prices(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const int n = cfg.samples > 0 ? cfg.samples : 64;
    const conerisk::SampleSet ss =
        conerisk::sample_price_systems(bundle.tree, bundle.market, n, cfg.seed);

    json systems = json::array();
    for (const conerisk::DualPair& pair : ss.pairs) {
        json e;
        e["S"] = jparse(conerisk::io::prices_to_json(bundle.tree, pair.S))["S"];
        json q;
        for (int leaf : bundle.tree.leaves())
            q[std::to_string(bundle.tree.ext_id(leaf))] =
                pair.q.w[static_cast<size_t>(bundle.tree.leaf_pos(leaf))];
        e["q"] = std::move(q);
        systems.push_back(std::move(e));
    }
    json rep;
    rep["requested"] = ss.requested;
    rep["accepted"] = ss.accepted;
    rep["duplicates"] = ss.duplicates;
    rep["rejected"] = ss.rejected;
    rep["systems"] = std::move(systems);

    const bool ok = ss.accepted > 0;
    print_check(ok, "price-system sampling",
                std::to_string(ss.accepted) + " accepted, " + std::to_string(ss.duplicates) +
                    " duplicates, " + std::to_string(ss.rejected) + " rejected");
    write_report(cfg.out, "samples.json", rep);
    std::cout << "report: " << report_path(cfg.out, "samples.json") << "\n";
    return ok ? 0 : 1;
}

// ----------------------------------------------------------------- falsify

int run_falsify(const Config& cfg) {
    const conerisk::io::ModelBundle bundle = conerisk::io::load_bundle(cfg.model);
    const conerisk::RiskSpec spec = resolve_spec(cfg, bundle);
    const long long trials = cfg.samples > 0 ? cfg.samples : 1000;
    const conerisk::TcReport fr =
        conerisk::rho_tc_falsify(bundle.tree, bundle.market, spec, trials, cfg.seed);

    write_report(cfg.out, "falsify-report.json",
                 jparse(conerisk::io::tc_report_to_json(bundle.tree, fr)));
    if (fr.pass) {
        print_check(true, "rho-reversal",
                    "no reversal in " + std::to_string(trials) + " trials");
    } else {
        std::cout << "WITNESS rho-reversal: trial " << fr.witness->trial << " t="
                  << fr.witness->t << " s=" << fr.witness->s << " violation "
                  << fmt(fr.violation) << "\n";
    }
    std::cout << "report: " << report_path(cfg.out, "falsify-report.json") << "\n";
    return fr.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic scalar risk measures for multi-asset markets on scenario trees"};
    app.require_subcommand(1);
    Config cfg;

    const auto add_model = [&](CLI::App* c) {
        c->add_option("--model", cfg.model, "model bundle JSON file")->required();
        c->add_option("--out", cfg.out, "report directory (default .)");
    };
    const auto add_spec = [&](CLI::App* c) {
        c->add_option("--spec", cfg.spec, "risk spec: shp, shp-convex or avar");
        c->add_option("--levels", cfg.levels, "AV@R levels: JSON array or file");
    };
    const auto add_seeded = [&](CLI::App* c) {
        c->add_option("--samples", cfg.samples, "sample or trial budget");
        c->add_option("--seed", cfg.seed, "master RNG seed");
    };
    const auto add_pool = [&](CLI::App* c) {
        c->add_option("--threads", cfg.threads,
                      "worker pool size (CONERISK_THREADS overrides, default hardware)");
    };

    CLI::App* validate = app.add_subcommand("validate", "Check tree, market and no-arbitrage");
    add_model(validate);

    CLI::App* price = app.add_subcommand("price", "Superhedging or AV@R value of a claim");
    add_model(price);
    price->add_option("--claim", cfg.claim, "claim JSON file or bundle claim name")->required();
    add_spec(price);
    price->add_option("--t", cfg.t, "evaluation time (default 0)");
    add_seeded(price);
    price->add_option("--tol", cfg.tol, "pass gate for residual and gap checks");
    add_pool(price);
    price->add_flag("--csv", cfg.csv, "also write a CSV flattening");

    CLI::App* pi = app.add_subcommand("pi", "Fixed-selection values over sampled price systems");
    add_model(pi);
    pi->add_option("--claim", cfg.claim, "claim JSON file or bundle claim name")->required();
    add_spec(pi);
    pi->add_option("--t", cfg.t, "evaluation time (default 0)");
    add_seeded(pi);
    pi->add_option("--tol", cfg.tol, "pass gate for the sampling gap");
    add_pool(pi);
    pi->add_flag("--csv", cfg.csv, "also write a CSV flattening");

    CLI::App* audit = app.add_subcommand("audit", "Run every consistency suite on a model");
    add_model(audit);
    add_spec(audit);
    CLI::Option* t_opt = audit->add_option("--t", cfg.t, "restrict spans to this earlier time");
    CLI::Option* s_opt = audit->add_option("--s", cfg.s, "restrict spans to this later time");
    add_seeded(audit);
    add_pool(audit);
    audit->add_flag("--csv", cfg.csv, "also write a CSV flattening");

    CLI::App* sample = app.add_subcommand("sample-prices", "Sample admissible price systems");
    add_model(sample);
    add_seeded(sample);

    CLI::App* falsify = app.add_subcommand("falsify", "Search for a risk order reversal");
    add_model(falsify);
    add_spec(falsify);
    add_seeded(falsify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    cfg.t_given = t_opt->count() > 0;
    cfg.s_given = s_opt->count() > 0;

    try {
        if (validate->parsed()) return run_validate(cfg);
        if (price->parsed()) return run_price(cfg);
        if (pi->parsed()) return run_pi(cfg);
        if (audit->parsed()) return run_audit(cfg);
        if (sample->parsed()) return run_sample_prices(cfg);
        if (falsify->parsed()) return run_falsify(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
