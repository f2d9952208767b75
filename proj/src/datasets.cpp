// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <string_view>

#include "gtdsgd/error.hpp"
#include "gtdsgd/format.hpp"
#include "gtdsgd/rng.hpp"

namespace gtdsgd {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        const std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

}  // namespace

LabeledDataset parse_libsvm(std::istream& is, std::optional<std::size_t> d_override) {
    struct RawRow {
        double label;
        std::size_t line;
        std::vector<std::pair<std::uint32_t, double>> features;
    };
    std::vector<RawRow> raw;
    std::size_t max_index = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string_view view(line);
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        auto tokens = tokenize(view);
        if (tokens.empty()) continue;

        RawRow row{0.0, lineno, {}};
        auto label = parse_double(tokens[0]);
        if (!label || !std::isfinite(*label)) throw ParseError(lineno, "non-numeric label '" + std::string(tokens[0]) + "'");
        row.label = *label;
        long long prev = 0;
        for (std::size_t k = 1; k < tokens.size(); ++k) {
            const auto tok = tokens[k];
            const auto colon = tok.find(':');
            if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
                throw ParseError(lineno, "malformed pair '" + std::string(tok) + "'");
            const auto idx_text = tok.substr(0, colon);
            if (!std::all_of(idx_text.begin(), idx_text.end(), [](char c) { return c >= '0' && c <= '9'; }))
                throw ParseError(lineno, "non-integer index in '" + std::string(tok) + "'");
            const auto idx = parse_double(idx_text);
            if (!idx || *idx < 1 || *idx > 4294967295.0) throw ParseError(lineno, "index out of range in '" + std::string(tok) + "'");
            const auto index = static_cast<long long>(*idx);
            if (index <= prev) throw ParseError(lineno, "indices must be strictly increasing at '" + std::string(tok) + "'");
            const auto value = parse_double(tok.substr(colon + 1));
            if (!value || !std::isfinite(*value)) throw ParseError(lineno, "non-numeric value in '" + std::string(tok) + "'");
            prev = index;
            row.features.emplace_back(static_cast<std::uint32_t>(index - 1), *value);
            max_index = std::max<std::size_t>(max_index, static_cast<std::size_t>(index));
        }
        raw.push_back(std::move(row));
    }

    std::set<double> labels;
    for (const auto& r : raw) labels.insert(r.label);
    auto map_label = [&](const RawRow& r) -> int {
        const bool pm_one = std::all_of(labels.begin(), labels.end(), [](double l) { return l == 1.0 || l == -1.0; });
        const bool zero_one = std::all_of(labels.begin(), labels.end(), [](double l) { return l == 0.0 || l == 1.0; });
        if (pm_one) return r.label > 0 ? 1 : -1;
        if (zero_one) return r.label == 0.0 ? -1 : 1;
        if (labels.size() == 2) return r.label == *labels.begin() ? -1 : 1;
        throw ParseError(r.line, "labels must be binary; found " + std::to_string(labels.size()) + " distinct values");
    };

    LabeledDataset ds;
    ds.d = std::max(max_index, d_override.value_or(0));
    ds.rows.reserve(raw.size());
    for (auto& r : raw) ds.rows.push_back(Sample{map_label(r), std::move(r.features)});
    return ds;
}

void write_libsvm(std::ostream& os, const LabeledDataset& ds) {
    for (const auto& row : ds.rows) {
        os << (row.label > 0 ? "+1" : "-1");
        for (const auto& [idx, val] : row.features) os << ' ' << (idx + 1) << ':' << format_double(val);
        os << '\n';
    }
    if (!os) throw IoError("failed writing LIBSVM text");
}

std::vector<LabeledDataset> split_uniform(const LabeledDataset& ds, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("split needs at least one agent");
    const std::size_t m = ds.size();
    if (n > m) throw InvalidArgument("too few samples: " + std::to_string(m) + " rows for " + std::to_string(n) + " agents");

    std::vector<std::size_t> perm(m);
    for (std::size_t k = 0; k < m; ++k) perm[k] = k;
    Xoshiro256 rng(hash_key({seed, 0x5u}));
    for (std::size_t k = m; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);

    std::vector<LabeledDataset> shards(n);
    const std::size_t base = m / n, extra = m % n;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = base + (i < extra ? 1 : 0);
        shards[i].d = ds.d;
        shards[i].rows.reserve(count);
        for (std::size_t k = 0; k < count; ++k) shards[i].rows.push_back(ds.rows[perm[cursor++]]);
    }
    return shards;
}

LabeledDataset scale_max_abs(const LabeledDataset& ds) {
    std::vector<double> scale(ds.d, 0.0);
    for (const auto& row : ds.rows)
        for (const auto& [idx, val] : row.features) scale[idx] = std::max(scale[idx], std::abs(val));
    LabeledDataset out = ds;
    for (auto& row : out.rows)
        for (auto& [idx, val] : row.features)
            if (scale[idx] > 0.0) val /= scale[idx];
    return out;
}

}  // namespace gtdsgd
