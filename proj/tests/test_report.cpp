#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mdlab/report.hpp"
#include "mdlab/rng.hpp"

using namespace mdlab;

TEST_CASE("doubles round trip through their text form") {
    Rng rng(1, Stream::monte_carlo);
    for (int i = 0; i < 1000; ++i) {
        const double x = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.below(40)) - 20);
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(2.0) == "2");
    CHECK(format_int(-42) == "-42");
}

TEST_CASE("json dump") {
    const nlohmann::json j{{"b", 0.1}, {"a", {1, 2}}, {"inf", std::numeric_limits<double>::infinity()},
                           {"nan", std::nan("")}, {"s", "x\"y"}};
    const auto text = dump_json(j);
    CHECK(text.find("0.10000000000000001") != std::string::npos);
    const auto back = nlohmann::json::parse(text);
    CHECK(back.at("inf").is_null());
    CHECK(back.at("nan").is_null());
    CHECK(back.at("s") == "x\"y");
    CHECK(back.at("b").get<double>() == 0.1);
    CHECK(text.find("\"a\"") < text.find("\"b\""));
    CHECK(dump_json(j) == text);
}

TEST_CASE("files") {
    const auto dir = std::filesystem::temp_directory_path() / "mdlab_report_test";
    std::filesystem::create_directories(dir);
    write_json(dir / "x.json", {{"k", 3}});
    CHECK(read_json(dir / "x.json").at("k") == 3);
    CHECK_THROWS(read_json(dir / "missing.json"));
    {
        CsvWriter csv(dir / "x.csv", {"a", "b"});
        csv.row({"1", "2"});
        CHECK_THROWS(csv.row({"1"}));
    }
    std::ifstream in(dir / "x.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "a,b\n1,2\n");
    std::filesystem::remove_all(dir);
}

TEST_CASE("manifest records timing only on request") {
    RunManifest m;
    m.command = "schedule-opt";
    m.seed = 7;
    m.outputs = {"schedule.json"};
    auto j = m.to_json();
    CHECK(j.at("version") == kVersion);
    CHECK_FALSE(j.contains("wall_clock_seconds"));
    m.wall_clock_seconds = 1.5;
    CHECK(m.to_json().at("wall_clock_seconds") == 1.5);
}
