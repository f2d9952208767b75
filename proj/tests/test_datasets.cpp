// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "gtdsgd/datasets.hpp"
#include "gtdsgd/error.hpp"
#include "support.hpp"

using namespace gtdsgd;

namespace {

LabeledDataset load(const std::string& name) {
    std::ifstream is(testing::fixture(name));
    REQUIRE(is.good());
    return parse_libsvm(is);
}

std::size_t error_line(const std::string& name) {
    try {
        load(name);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("fixture parses to the expected rows") {
    const auto ds = load("small.svm");
    REQUIRE(ds.size() == 6);
    CHECK(ds.d == 4);
    const std::vector<Sample> expected{
        {1, {{0, 0.5}, {2, 1.0}}},
        {-1, {{1, -1.25}, {3, 2.0}}},
        {1, {{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}}},
        {-1, {{3, 0.75}}},
        {1, {{2, -0.5}}},
        {-1, {{0, 2.0}, {2, 0.25}}},
    };
    CHECK(ds.rows == expected);
}

TEST_CASE("malformed fixtures report the offending line") {
    CHECK(error_line("bad_pair.svm") == 3);
    CHECK(error_line("bad_order.svm") == 2);
    CHECK(error_line("bad_label.svm") == 4);
    CHECK(error_line("bad_index.svm") == 2);
    CHECK(error_line("many_labels.svm") >= 1);
}

TEST_CASE("error text carries the line number") {
    try {
        load("bad_pair.svm");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("explicit dimension widens but never narrows") {
    std::istringstream a("1 2:1\n-1 1:1\n");
    CHECK(parse_libsvm(a, 10).d == 10);
    std::istringstream b("1 5:1\n-1 1:1\n");
    CHECK(parse_libsvm(b, 3).d == 5);
}

TEST_CASE("write then parse is the identity") {
    const auto ds = load("small.svm");
    std::stringstream ss;
    write_libsvm(ss, ds);
    CHECK(parse_libsvm(ss, ds.d) == ds);
}

TEST_CASE("uniform split sizes differ by at most one") {
    LabeledDataset ds;
    ds.d = 1;
    for (int k = 0; k < 10; ++k) ds.rows.push_back({k % 2 ? 1 : -1, {{0, double(k)}}});
    const auto parts = split_uniform(ds, 3, 0);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].size() == 4);
    CHECK(parts[1].size() == 3);
    CHECK(parts[2].size() == 3);
}

TEST_CASE("uniform split is a partition and is seed-deterministic") {
    LabeledDataset ds;
    ds.d = 1;
    for (int k = 0; k < 101; ++k) ds.rows.push_back({1, {{0, double(k)}}});
    for (std::size_t n : {1u, 2u, 7u, 101u}) {
        const auto parts = split_uniform(ds, n, 9);
        std::multiset<double> seen;
        for (const auto& p : parts) {
            CHECK(p.d == 1);
            for (const auto& r : p.rows) seen.insert(r.features[0].second);
        }
        CHECK(seen.size() == 101);
        CHECK(std::set<double>(seen.begin(), seen.end()).size() == 101);
        CHECK(split_uniform(ds, n, 9) == parts);
    }
    CHECK_THROWS_AS(split_uniform(ds, 102, 0), InvalidArgument);
}

TEST_CASE("max-abs scaling bounds every feature by one") {
    const auto s = scale_max_abs(load("small.svm"));
    std::vector<double> peak(s.d, 0.0);
    for (const auto& r : s.rows)
        for (auto [j, v] : r.features) peak[j] = std::max(peak[j], std::abs(v));
    for (double p : peak) CHECK(p == doctest::Approx(1.0));
}

}  // TEST_SUITE
