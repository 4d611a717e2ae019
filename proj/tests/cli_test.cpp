#include "psdo_cli.hpp"

#include <gtest/gtest.h>

using namespace psdo;
namespace fs = std::filesystem;

namespace {

const fs::path configs = PSDO_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("psdo-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::string& command, const std::optional<fs::path>& config, const fs::path& out, std::uint64_t seed = 0,
        std::optional<std::string> only = std::nullopt, std::string format = "report") {
    cli::Options opt;
    opt.command = command;
    if (config) opt.config = config->string();
    opt.out = out.string();
    opt.seed = seed;
    opt.only = std::move(only);
    opt.format = std::move(format);
    std::ostringstream o, e;
    int code = cli::run(opt, o, e);
    return {code, o.str(), e.str()};
}

fs::path write_config(const std::string& name, const std::string& text) {
    fs::path p = scratch("configs") / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
    return p;
}

nlohmann::json report(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "report.json")); }

}  // namespace

// ---- config ----

TEST(Config, ReadsStockConfigs) {
    for (const auto& entry : fs::directory_iterator(configs)) {
        if (entry.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    }
    auto c = load_config(configs / "elliptic.json");
    EXPECT_EQ(c.geometry.kind, Geometry::Kind::cone);
    EXPECT_EQ(c.geometry.mode, BoundaryMode::interval);
    EXPECT_DOUBLE_EQ(c.geometry.cone_step(), 0.25);
    EXPECT_EQ(c.sizes, (std::vector<int>{128, 256}));
    EXPECT_EQ(c.tuple_kind(), TupleKind::vertex);
    Geometry g = c.geometry.build(256);
    EXPECT_EQ(g.n_t(), 256);
    EXPECT_DOUBLE_EQ(g.h_t(), 0.25);
}

TEST(Config, RejectsInvalidDocuments) {
    using nlohmann::json;
    auto bad = [](const char* text) { return parse_config(json::parse(text)); };
    EXPECT_THROW(bad(R"({})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "torus"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "extra": 1})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle", "nx": 4}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle", "n_x": 2}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle", "n_x": 33}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle", "n_x": 6.5}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "tolerances": {"rank": 0}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "tolerances": {"compat": -1e-8}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "cone", "half_length": 6, "step": 0.25}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "scan": {"sizes": [128, 64]}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "symbols": {"family": "1"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "cone"}, "symbols": {"toeplitz": "1"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"geometry": {"kind": "circle"}, "symbols": {"interior": 1}})"), ConfigError);
    EXPECT_NO_THROW(bad(R"({"geometry": {"kind": "circle"}, "parameter": {"v": -2, "ladder": [1, 2, 4]}})"));
}

TEST(Config, LoadErrors) {
    EXPECT_THROW(load_config(scratch("none") / "missing.json"), ConfigError);
    EXPECT_THROW(load_config(write_config("broken.json", "{\"geometry\": ")), ConfigError);
}

// ---- container ----

TEST(Container, RoundTripIsBitExact) {
    Geometry g = Geometry::edge(8, {BaseKind::circle, 8, 2.5, 8, BoundaryMode::interval}, 2);
    Matrix m = Matrix::Random(g.dim(), g.dim());
    m(0, 0) = {-0.0, std::numeric_limits<double>::denorm_min()};
    DiscretizedOperator A{g, 0.75, m};
    auto bytes = container::encode(A);
    EXPECT_EQ(bytes.substr(0, 4), "PSDO");
    EXPECT_EQ(bytes[4], 1);  // little-endian version
    auto back = container::decode(bytes);
    EXPECT_EQ(back.geometry.kind(), Geometry::Kind::edge);
    EXPECT_EQ(back.geometry.n_omega(), 8);
    EXPECT_EQ(back.geometry.mode(), BoundaryMode::interval);
    EXPECT_EQ(back.v, 0.75);
    EXPECT_EQ(std::memcmp(back.matrix.data(), m.data(), sizeof(Complex) * m.size()), 0);
    EXPECT_EQ(container::encode(back), bytes);
}

TEST(Container, RejectsMalformedBytes) {
    DiscretizedOperator A{Geometry::circle(8), 0.0, Matrix::Identity(8, 8)};
    auto bytes = container::encode(A);
    EXPECT_THROW(container::decode("XSDO" + bytes.substr(4)), FormatError);
    EXPECT_THROW(container::decode(bytes.substr(0, bytes.size() - 1)), FormatError);
    EXPECT_THROW(container::decode(bytes + "x"), FormatError);
    auto wrong_version = bytes;
    wrong_version[4] = 9;
    EXPECT_THROW(container::decode(wrong_version), FormatError);
}

// ---- check ----

TEST(CliCheck, ExitCodes) {
    auto dir = scratch("check");
    EXPECT_EQ(run("check", configs / "elliptic.json", dir).code, 0);
    EXPECT_EQ(report(dir)["verdict"]["exit_code"], 0);
    EXPECT_EQ(run("check", configs / "conormal_zero.json", dir).code, 3);
    EXPECT_FALSE(report(dir)["sections"]["ellipticity"]["elliptic"].get<bool>());
    EXPECT_EQ(run("check", configs / "compat_mismatch.json", dir).code, 2);
    EXPECT_EQ(run("check", configs / "identity.json", dir).code, 0);
    EXPECT_EQ(run("check", configs / "toeplitz.json", dir).code, 0);
    EXPECT_EQ(run("check", configs / "edge.json", dir).code, 0);

    auto parse = run("check", configs / "malformed_dsl.json", dir);
    EXPECT_EQ(parse.code, 65);
    EXPECT_NE(parse.err.find("symbols.interior"), std::string::npos) << parse.err;
    EXPECT_NE(parse.err.find("line 1, column 16"), std::string::npos) << parse.err;

    EXPECT_EQ(run("check", std::nullopt, dir).code, 64);
    EXPECT_EQ(run("check", scratch("none") / "missing.json", dir).code, 64);
    EXPECT_EQ(run("check", write_config("unknown.json", R"({"geometry": {"kind": "circle"}, "colour": 1})"), dir).code, 64);
    EXPECT_EQ(run("check", write_config("shape.json", R"({"geometry": {"kind": "circle"}, "symbols": {"interior": "[[1, 0], [0, 1]]"}})"), dir).code, 64);
    EXPECT_EQ(run("check", write_config("nosym.json", R"({"geometry": {"kind": "cone"}})"), dir).code, 64);
    EXPECT_EQ(run("check", write_config("vanish.json", R"j({"geometry": {"kind": "circle"}, "symbols": {"interior": "cos(x)"}})j"), dir).code, 3);
}

// ---- quantize ----

TEST(CliQuantize, IdentityContainerHoldsIdentity) {
    auto dir = scratch("quantize-identity");
    ASSERT_EQ(run("quantize", configs / "identity.json", dir).code, 0);
    auto A = read_container(dir / "operator.psdo");
    EXPECT_EQ(A.geometry.kind(), Geometry::Kind::circle);
    EXPECT_EQ(A.geometry.n_x(), 64);
    EXPECT_LE((A.matrix - Matrix::Identity(64, 64)).norm(), 1e-13);
    auto r = report(dir);
    EXPECT_TRUE(r["sections"]["operator"]["container_roundtrip_exact"].get<bool>());
    EXPECT_TRUE(r["sections"]["extraction"]["pass"].get<bool>());
}

TEST(CliQuantize, ExtractionMatchesConfigSymbols) {
    auto dir = scratch("quantize-symbol");
    ASSERT_EQ(run("quantize", configs / "circle_symbol.json", dir).code, 0);
    auto r = report(dir);
    EXPECT_LE(r["sections"]["extraction"]["max_error"].get<double>(), 1e-10);

    // the file on disk re-quantizes to the same bytes
    auto cfg = load_config(configs / "circle_symbol.json");
    auto A = op_circle(InteriorSymbol(parse(*cfg.interior), 1), cfg.geometry.build());
    EXPECT_EQ(read_file(dir / "operator.psdo"), container::encode(A));

    ASSERT_EQ(run("quantize", configs / "elliptic.json", dir).code, 0);
    EXPECT_EQ(read_container(dir / "operator.psdo").matrix.rows(), 128);
    EXPECT_EQ(run("quantize", configs / "edge.json", dir).code, 0);
    EXPECT_EQ(run("quantize", configs / "compat_mismatch.json", dir).code, 2);
}

TEST(CliQuantize, IoFailureExits74) {
    auto dir = scratch("quantize-io");
    fs::create_directories(dir);
    std::ofstream(dir / "blocker") << "a file where a directory is expected";
    EXPECT_EQ(run("quantize", configs / "identity.json", dir / "blocker" / "out").code, 74);
}

// ---- index ----

TEST(CliIndex, ExitCodesAndTables) {
    auto dir = scratch("index");
    auto t = run("index", configs / "toeplitz.json", dir, 0, std::nullopt, "csv");
    ASSERT_EQ(t.code, 0);
    auto r = report(dir);
    EXPECT_EQ(r["sections"]["fredholm"]["index"], -1);
    EXPECT_EQ(r["sections"]["winding"]["winding"], 1);
    for (const auto& s : r["sections"]["fredholm"]["sections"]) EXPECT_EQ(s["index"], -1);
    EXPECT_EQ(t.out.substr(0, t.out.find('\n')), "N (nodes),kernel (dim),cokernel (dim),index,s_min,s_regular,gap_ratio");
    EXPECT_EQ(read_file(dir / "index.csv"), t.out);

    ASSERT_EQ(run("index", configs / "identity.json", dir).code, 0);
    EXPECT_EQ(report(dir)["sections"]["fredholm"]["index"], 0);
    ASSERT_EQ(run("index", configs / "circle_symbol.json", dir).code, 0);
    EXPECT_EQ(report(dir)["sections"]["fredholm"]["index"], 0);

    ASSERT_EQ(run("index", configs / "elliptic.json", dir).code, 0);
    EXPECT_EQ(report(dir)["sections"]["fredholm"]["index"], 1);  // Cayley conormal symbol winds once
    EXPECT_EQ(run("index", configs / "degenerate.json", dir).code, 4);

    EXPECT_EQ(run("index", configs / "compat_mismatch.json", dir).code, 64);  // periodic cone
    EXPECT_EQ(run("index", configs / "edge.json", dir).code, 64);

    // the interior symbol winds once along r at xi = +1 and cancels the conormal winding: the sections
    // are determinate with index 0, the conormal winding oracle predicts 1
    ASSERT_EQ(run("index", configs / "interior_winding.json", dir).code, 5);
    r = report(dir);
    EXPECT_TRUE(r["sections"]["fredholm"]["determinate"].get<bool>());
    EXPECT_EQ(r["sections"]["fredholm"]["index"], 0);
    EXPECT_EQ(r["sections"]["winding"]["winding"], 1);
}

// ---- verify ----

TEST(CliVerify, SingleSuiteAndDeterminism) {
    auto a = scratch("verify-a"), b = scratch("verify-b");
    ASSERT_EQ(run("verify", configs / "verify.json", a, 0, "partition-bound").code, 0);
    ASSERT_EQ(run("verify", configs / "verify.json", b, 0, "partition-bound").code, 0);
    auto ra = report(a), rb = report(b);
    EXPECT_EQ(ra["sections"]["suites"].size(), 1u);
    ra.erase("timestamp");
    rb.erase("timestamp");
    EXPECT_EQ(ra.dump(), rb.dump());
    EXPECT_TRUE(fs::exists(a / "timings.csv"));

    // a different seed draws different instances but reaches the same verdict
    ASSERT_EQ(run("verify", configs / "verify.json", b, 7, "partition-bound").code, 0);
    auto r7 = report(b);
    EXPECT_EQ(r7["sections"]["suites"]["partition-bound"]["pass"], true);
    EXPECT_NE(r7["sections"]["suites"]["partition-bound"]["metrics"].dump(), ra["sections"]["suites"]["partition-bound"]["metrics"].dump());

    EXPECT_EQ(run("verify", configs / "verify.json", a, 0, "no-such-suite").code, 64);
    EXPECT_EQ(run("verify", std::nullopt, a, 0, "toeplitz").code, 0);
}

TEST(CliMain, ArgumentErrors) {
    auto call = [](std::vector<std::string> args) {
        std::vector<char*> argv;
        for (auto& s : args) argv.push_back(s.data());
        std::ostringstream o, e;
        return cli::main(static_cast<int>(argv.size()), argv.data(), o, e);
    };
    EXPECT_EQ(call({"psdo"}), 64);
    EXPECT_EQ(call({"psdo", "frobnicate"}), 64);
    EXPECT_EQ(call({"psdo", "check", "--format", "xml"}), 64);
    EXPECT_EQ(call({"psdo", "--help"}), 0);
    auto dir = scratch("main");
    EXPECT_EQ(call({"psdo", "verify", "--only=toeplitz", "--seed", "3", "--out", dir.string()}), 0);
    EXPECT_EQ(report(dir)["seed"], 3);
}
