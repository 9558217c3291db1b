#include <gtest/gtest.h>

#include <kolmo/lab.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kolmo;
using namespace kolmo::lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("kolmo-lab-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

bool mentions(const std::vector<std::string>& errs, const std::string& needle) {
    for (const auto& e : errs)
        if (e.find(needle) != std::string::npos) return true;
    return false;
}

ExperimentConfig config(json j, const fs::path& dir) {
    j["output_dir"] = dir.string();
    return parse_config(j);
}

bool have_matplotlib() { return std::system("python3 -c 'import matplotlib' >/dev/null 2>&1") == 0; }

BoxGrid rough_grid() { return BoxGrid(1, 512.0, 65536); }

} // namespace

TEST(Config, DefaultsAreMergedAndEchoed) {
    auto c = parse_config(json{{"experiment", "growth-law"}});
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.output_dir, "kolmo-out/growth-law");
    EXPECT_EQ(c.grid.points, 16384u);
    EXPECT_EQ(c.rough.J, 5);
    EXPECT_EQ(c.rough.law, amplitude_law::geometric);
    EXPECT_EQ(c.effective["toy"]["gamma"], -1.0);
    EXPECT_EQ(c.effective["options"]["orders"].size(), 4u);
    EXPECT_FALSE(c.effective.contains("collision"));

    auto d = parse_config(json{{"experiment", "rough-data-scan"}, {"options", {{"K", 5}}}, {"seed", 42}});
    EXPECT_EQ(d.integer("K"), 5);
    EXPECT_TRUE(d.option("M2").is_null());
    EXPECT_EQ(d.effective["seed"], 42);
}

TEST(Config, ValidationEnumeratesEveryError) {
    json j = {{"experiment", "growth-law"},
              {"seed", -3},
              {"colour", "red"},
              {"toy", {{"gamma", -5.0}, {"s", 2.0}, {"dt", "small"}}},
              {"grid", {{"points", 1000}}},
              {"collision", json::object()},
              {"options", {{"orders", {9}}, {"bogus", 1}}}};
    auto errs = config_violations(j);
    EXPECT_TRUE(mentions(errs, "unknown key 'colour'"));
    EXPECT_TRUE(mentions(errs, "'seed' must be a non-negative integer"));
    EXPECT_TRUE(mentions(errs, "toy.dt must be a number"));
    EXPECT_TRUE(mentions(errs, "toy: gamma must lie in"));
    EXPECT_TRUE(mentions(errs, "toy: s must lie in"));
    EXPECT_TRUE(mentions(errs, "grid: points per axis must be a power of two"));
    EXPECT_TRUE(mentions(errs, "'collision' is not used by growth-law"));
    EXPECT_TRUE(mentions(errs, "options.orders entries"));
    EXPECT_TRUE(mentions(errs, "unknown key options.bogus"));
    EXPECT_EQ(errs.size(), 9u);
    try {
        parse_config(j);
        FAIL() << "expected config_errors";
    } catch (const config_errors& e) {
        EXPECT_EQ(e.errors, errs);
    }
}

TEST(Config, UnknownExperimentListsValidNames) {
    for (const json& j : {json{{"experiment", "warp-drive"}}, json{{"seed", 1}}, json{{"experiment", 7}}}) {
        auto errs = config_violations(j);
        ASSERT_EQ(errs.size(), 1u);
        for (const auto& e : experiments()) EXPECT_NE(errs[0].find(e.name), std::string::npos) << e.name;
    }
    EXPECT_THROW(parse_config(json::array()), config_errors);
}

TEST(Config, ModuleParameterInvariantsAreChecked) {
    auto errs = config_violations(json{{"experiment", "collision-identities"},
                                       {"collision", {{"gamma", -2.5}, {"eps_theta", 2.0}, {"dim", 4}}},
                                       {"options", {{"eps_list", {0.1, 0.05}}, {"oracle_points", 12}}}});
    EXPECT_TRUE(mentions(errs, "collision: "));
    EXPECT_TRUE(mentions(errs, "options.eps_list"));
    EXPECT_TRUE(mentions(errs, "options.oracle_points"));

    auto t = config_violations(json{{"experiment", "transport-gain"}, {"transport", {{"beta", 2.0}, {"x_points", {64, 256}}}}});
    EXPECT_TRUE(mentions(t, "transport: beta must lie in [0, 1]"));
    EXPECT_TRUE(mentions(t, "transport: x_points must double"));

    auto d = config_violations(json{{"experiment", "toy-dichotomy"},
                                    {"toy", {{"gamma", -1.0}}},
                                    {"options", {{"triples", {{0.5, 0.5, 2.0}, {-1.0, 0.5}}}, {"J_lo", 9}}}});
    EXPECT_TRUE(mentions(d, "toy.gamma is set per triple"));
    EXPECT_TRUE(mentions(d, "gamma must lie in (-3, 0)"));
    EXPECT_TRUE(mentions(d, "entries must be [gamma, s, ell]"));
    EXPECT_TRUE(mentions(d, "options.J_lo"));
}

TEST(Config, FileErrors) {
    EXPECT_THROW(load_config("/nonexistent/kolmo.json"), config_errors);
    auto dir = scratch("file-errors");
    fs::create_directories(dir);
    std::ofstream(dir / "bad.json") << "{\"experiment\": ";
    EXPECT_THROW(load_config((dir / "bad.json").string()), config_errors);
    std::ofstream(dir / "ok.json") << "{\"experiment\": \"partition-audit\"}";
    EXPECT_EQ(load_config((dir / "ok.json").string()).experiment, "partition-audit");
}

TEST(Run, PartitionAuditPasses) {
    auto dir = scratch("partition");
    auto rep = run(config({{"experiment", "partition-audit"}, {"seed", 5}}, dir));
    ASSERT_TRUE(rep.passed()) << rep.error;
    const auto* r = rep.find("partition-profile-residual");
    ASSERT_NE(r, nullptr);
    EXPECT_LE(r->measured, 1e-12);
    EXPECT_EQ(r->tolerance, 1e-12);
    auto j = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(j["schema_version"], schema_version);
    EXPECT_EQ(j["tool_version"], tool_version);
    EXPECT_EQ(j["seed"], 5);
    EXPECT_EQ(j["config"]["experiment"], "partition-audit");
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["checks"].size(), rep.checks.size());
    for (const auto& c : j["checks"]) {
        EXPECT_TRUE(c.contains("tolerance"));
        EXPECT_TRUE(c.contains("relation"));
        EXPECT_TRUE(c.contains("pass"));
    }
}

TEST(Run, SeedRecordedInEveryArtifact) {
    auto dir = scratch("seeded");
    auto rep = run(config({{"experiment", "norm-equivalence"},
                           {"seed", 77},
                           {"options", {{"fields", 3}, {"commutator", false}, {"bernstein_fields", 1}}}},
                          dir));
    ASSERT_FALSE(rep.artifacts.empty());
    for (const auto& a : rep.artifacts) {
        auto text = slurp(dir / a.file);
        EXPECT_EQ(text.rfind("# kolmo-lab norm-equivalence seed=77\n", 0), 0u) << a.file;
    }
    EXPECT_EQ(json::parse(slurp(dir / "report.json"))["seed"], 77);
}

TEST(Run, DeterministicArtifacts) {
    json j = {{"experiment", "norm-equivalence"}, {"options", {{"fields", 5}, {"commutator_draws", 1}}}};
    auto a = scratch("det-a"), b = scratch("det-b"), c = scratch("det-c");
    auto ra = run(config(j, a));
    auto rb = run(config(j, b));
    ASSERT_EQ(ra.artifacts.size(), rb.artifacts.size());
    for (const auto& art : ra.artifacts) EXPECT_EQ(slurp(a / art.file), slurp(b / art.file)) << art.file;
    j["seed"] = 2;
    run(config(j, c));
    EXPECT_NE(slurp(a / "norm_ratios.csv"), slurp(c / "norm_ratios.csv"));
}

TEST(Run, RuntimeErrorsAreCaptured) {
    auto dir = scratch("runtime-error");
    // packets j = 7, 8 do not fit the grid
    auto rep = run(config({{"experiment", "rough-data-scan"}, {"rough_data", {{"J", 8}}}}, dir));
    EXPECT_FALSE(rep.passed());
    EXPECT_FALSE(rep.error.empty());
    const auto* e = rep.find("rough-increments:error");
    ASSERT_NE(e, nullptr);
    EXPECT_FALSE(e->pass);
    EXPECT_NE(e->diagnostic.find("packet 7"), std::string::npos) << e->diagnostic;
    auto j = json::parse(slurp(dir / "report.json"));
    EXPECT_FALSE(j["passed"].get<bool>());
    EXPECT_TRUE(j["error"].is_string());
}

TEST(Run, ToyDichotomyCrossover) {
    auto dir = scratch("dichotomy");
    auto rep = run(config({{"experiment", "toy-dichotomy"}, {"options", {{"triples", {{-1.0, 0.5, 2.0}}}}}}, dir));
    const auto* c = rep.find("dichotomy-crossover-0");
    ASSERT_NE(c, nullptr) << rep.error;
    const double n_star = c->values["n_star"].get<double>();
    EXPECT_GE(n_star, 1.5);
    EXPECT_LE(n_star, 2.5);
    EXPECT_DOUBLE_EQ(c->values["threshold"].get<double>(), 2.0);
    EXPECT_TRUE(c->pass);

    ASSERT_EQ(rep.plots.size(), 1u);
    auto script = slurp(rep.plots[0]);
    EXPECT_NE(script.find("threshold = 2\n"), std::string::npos);
    EXPECT_NE(script.find("axvline(threshold"), std::string::npos);
    EXPECT_NE(script.find("scan_0.csv"), std::string::npos);
    if (have_matplotlib()) {
        EXPECT_EQ(std::system(("MPLBACKEND=Agg python3 " + rep.plots[0]).c_str()), 0);
        EXPECT_TRUE(fs::exists(dir / "scan_0.png"));
    }
}

TEST(EmitPlots, EmptyReportWritesNothing) {
    RunReport r;
    r.experiment = "partition-audit";
    r.output_dir = scratch("empty").string();
    EXPECT_TRUE(emit_plots(r).empty());
    ASSERT_EQ(r.notes.size(), 1u);
    EXPECT_NE(r.notes[0].find("no plot scripts"), std::string::npos);
    EXPECT_FALSE(fs::exists(r.output_dir));
}

TEST(EmitPlots, MissingArtifactIsListed) {
    auto dir = scratch("missing");
    fs::create_directories(dir);
    RunReport r;
    r.experiment = "rough-data-scan";
    r.output_dir = dir.string();
    r.artifacts.push_back({"sj.csv", "sj", json::object()});
    EXPECT_TRUE(emit_plots(r).empty());
    EXPECT_TRUE(mentions(r.notes, "missing artifact: sj.csv"));
}

TEST(EmitPlots, GrowthLawOnePlotPerOrder) {
    auto dir = scratch("growth");
    auto rep = run(config({{"experiment", "growth-law"}, {"options", {{"cross_validation", false}}}}, dir));
    ASSERT_TRUE(rep.passed()) << rep.error;
    ASSERT_EQ(rep.plots.size(), 1u);
    EXPECT_EQ(fs::path(rep.plots[0]).filename(), "plot_growth.py");
    auto script = slurp(rep.plots[0]);
    EXPECT_NE(script.find("fitted q"), std::string::npos);
    if (!have_matplotlib()) GTEST_SKIP() << "matplotlib not available";
    ASSERT_EQ(std::system(("MPLBACKEND=Agg python3 " + rep.plots[0]).c_str()), 0);
    for (int a = 0; a <= 3; ++a) EXPECT_TRUE(fs::exists(dir / ("growth_alpha" + std::to_string(a) + ".png"))) << a;
}

TEST(EnergyFunctional, ConstantXFactorGivesZeros) {
    auto g = rough_grid();
    RoughDataSpec rs;
    auto h = rough_data(rs, g);
    auto E = energy_functional_scan(lacunary_x_factor(0, rs.eps, torus_grid(64)), h, rs.ell, rs.eps, rs.a, rs.J);
    ASSERT_EQ(E.S.size(), 6u);
    for (std::size_t i = 0; i < E.S.size(); ++i) {
        EXPECT_LE(E.x_weight[i], 1e-28) << i;
        EXPECT_LE(E.S[i], 1e-20 * std::exp2(4.2 * 6.0) * std::pow(l2_norm(h), 2)) << i;
    }
}

TEST(EnergyFunctional, MatchesDirectFormula) {
    auto g = rough_grid();
    RoughDataSpec rs;
    rs.J = 5;
    auto h = rough_data(rs, g);
    const int K = max_phase_block(g);
    auto E = energy_functional_scan(lacunary_x_factor(5, rs.eps, torus_grid(128)), h, rs.ell, rs.eps, rs.a, rs.J);
    // explicit x-coefficients (ln m)^{-2} and block norms from the projections themselves
    XModeSet M(5, rs.eps);
    double acc = 0.0;
    for (int j = 1; j <= rs.J; ++j) {
        const double w = 2.0 * std::pow(XModeSet::coefficient(M.mode(j)), 2);
        double e = 0.0;
        for (int l = rs.shell(j); l <= K; ++l) e += std::pow(l2_norm(freq_project(phase_project(h, l), j)), 2);
        acc += std::exp2((2.0 * rs.ell * rs.a + rs.eps) * j) * w * e;
        EXPECT_NEAR(E.S[j - 1], acc, 1e-10 * acc + 1e-20 * E.S.back()) << j;
        EXPECT_EQ(E.modes[j - 1], M.mode(j));
    }
    EXPECT_LE(E.S[0], 1e-20 * E.S.back()); // m_1 = 1 carries no coefficient
}

TEST(EnergyFunctional, SmoothVFactorSaturates) {
    auto g = rough_grid();
    auto E = energy_functional_scan(lacunary_x_factor(6, 0.2, torus_grid(256)), sample(g, unit_gaussian), 2.0, 0.2, 1.0, 6);
    ASSERT_GT(E.S[1], 0.0);
    for (int J = 4; J <= 6; ++J) EXPECT_LE(E.S[J - 1] - E.S[J - 2], 1e-6 * E.S[1]) << J;
}

TEST(EnergyFunctional, MatchedVFactorGrows) {
    auto g = rough_grid();
    RoughDataSpec rs;
    rs.law = amplitude_law::geometric;
    auto E = energy_functional_scan(lacunary_x_factor(rs.J, rs.eps, torus_grid(256)), matched_v_factor(rs, g), rs.ell,
                                    rs.eps, rs.a, rs.J);
    for (int J = 3; J <= rs.J; ++J) EXPECT_GE(E.ratio[J - 1], std::exp2(rs.eps / 2)) << J;
}

TEST(EnergyFunctional, TruncationAndErrors) {
    auto g = rough_grid();
    RoughDataSpec rs;
    auto h = rough_data(rs, g);
    auto x = lacunary_x_factor(6, rs.eps, torus_grid(256));
    auto full = energy_functional_scan(x, h, rs.ell, rs.eps, rs.a, 6);
    auto cut = energy_functional_scan(x, h, rs.ell, rs.eps, rs.a, 6, -2, 3);
    for (int J = 1; J <= 3; ++J) EXPECT_EQ(cut.S[J - 1], full.S[J - 1]);
    for (int J = 4; J <= 6; ++J) EXPECT_EQ(cut.S[J - 1], cut.S[2]);
    // m_4 = 9 is beyond the Nyquist mode of a 16-point torus
    EXPECT_THROW(energy_functional_scan(lacunary_x_factor(3, rs.eps, torus_grid(16)), h, rs.ell, rs.eps, rs.a, 6),
                 out_of_range_error);
    EXPECT_THROW(energy_functional_scan(h, h, rs.ell, rs.eps, rs.a, 6), contract_violation);
}
