// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 iff every criterion passes.

#include "psdo/container.hpp"
#include "psdo/verify.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <regex>

using namespace psdo;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    std::string title;
    std::string suite;
    double budget_seconds;  ///< 0: no runtime budget
};

std::string strip_timestamp(const std::string& report) {
    static const std::regex ts(R"("timestamp": "[^"]*")");
    return std::regex_replace(report, ts, R"("timestamp": "")");
}

std::string summary(const verify::SuiteResult& r) {
    const auto& m = r.metrics;
    std::ostringstream ss;
    if (m.contains("error")) return "error: " + m["error"].get<std::string>();
    for (const char* key : {"max_violation", "violations", "max_excess", "cauchy_worst_ratio", "bounded", "non_decreasing", "stable_under_seed_change"})
        if (m.contains(key) && m[key].is_primitive()) ss << key << '=' << m[key].dump() << ' ';
    return ss.str();
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "twisted homogeneity of 5 stock edge symbols, violation <= 1e-10, < 5 s", "twisted-homogeneity", 5.0},
        {2, "composition remainder slopes <= -(N - 1/2), N = 1..3, < 30 s", "composition", 30.0},
        {3, "quantize/extract round trip (exact band-limited, C/N with x-dependence)", "roundtrip", 0.0},
        {4, "finite sections: 5 elliptic tuples determinate, 3 degenerate collapse", "finiteness", 0.0},
        {5, "Toeplitz symbol e^{ix}: index -1 at N = 64, 128, 256, < 30 s", "toeplitz", 30.0},
        {6, "cone index equals conormal winding on 3 interval-mode instances", "cone-index", 0.0},
        {7, "partition-of-unity bound: 100 random instances, no violation, < 5 s", "partition-bound", 5.0},
        {8, "gluing reproduction <= 2 eps and Cauchy bound across the eps ladder", "gluing", 0.0},
        {9, "large-parameter s_min >= 0.5 and non-decreasing within 10%", "large-parameter", 0.0},
        {10, "infinitesimal operators: convergence, translation commutation, norm bound", "infinitesimal", 0.0},
        {11, "negligible classification stable under seed change", "negligible", 0.0},
    };
    const std::uint64_t seed = 0;
    int failed = 0;
    auto line = [&](int id, bool pass, const std::string& title, const std::string& detail) {
        std::cout << "criterion " << std::setw(2) << id << ": " << (pass ? "PASS" : "FAIL") << "  " << title << "  [" << detail << "]"
                  << std::endl;
        if (!pass) ++failed;
    };

    for (const auto& c : criteria) {
        auto r = verify::run_suite(verify::find_suite(c.suite), seed);
        const bool in_budget = c.budget_seconds == 0.0 || r.seconds < c.budget_seconds;
        std::ostringstream detail;
        detail << summary(r) << std::fixed << std::setprecision(2) << r.seconds << " s";
        if (!in_budget) detail << " exceeds budget " << c.budget_seconds << " s";
        line(c.id, r.pass && in_budget, c.title, detail.str());
    }

    // 12: two independent CLI processes, same seed, byte-identical reports apart from the timestamp
    {
        const fs::path base = fs::temp_directory_path() / ("psdo-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(base);
        bool ok = true;
        double slowest = 0.0;
        std::string detail;
        std::vector<std::string> reports;
        for (const char* run : {"a", "b"}) {
            const fs::path out = base / run;
            const std::string cmd = std::string("\"") + PSDO_BINARY + "\" verify --seed 0 --out \"" + out.string() + "\" > \"" +
                                    (base / (std::string(run) + ".log")).string() + "\" 2>&1";
            fs::create_directories(base);
            auto t0 = std::chrono::steady_clock::now();
            int status = std::system(cmd.c_str());
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            slowest = std::max(slowest, secs);
            if (status != 0) {
                ok = false;
                detail += std::string("run ") + run + " exited with status " + std::to_string(status) + "; ";
            }
            try {
                reports.push_back(strip_timestamp(read_file(out / "report.json")));
            } catch (const IoError& e) {
                ok = false;
                detail += e.what() + std::string("; ");
            }
        }
        const bool identical = reports.size() == 2 && reports[0] == reports[1];
        const bool in_budget = slowest < 600.0;
        std::ostringstream d;
        d << detail << "reports " << (identical ? "identical" : "differ") << ", slowest run " << std::fixed << std::setprecision(1) << slowest
          << " s of 600 s";
        line(12, ok && identical && in_budget, "verify is deterministic for a fixed seed; full battery < 10 min", d.str());
        if (ok && identical) fs::remove_all(base);
    }

    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
