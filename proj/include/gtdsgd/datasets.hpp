// SPDX-License-Identifier: Apache-2.0
//
// LIBSVM sparse text format and uniform splitting of samples across agents.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace gtdsgd {

struct Sample {
    int label = 1;  // +1 or -1
    std::vector<std::pair<std::uint32_t, double>> features;  // 0-based, strictly increasing

    bool operator==(const Sample&) const = default;
};

struct LabeledDataset {
    std::vector<Sample> rows;
    std::size_t d = 0;  // feature dimension shared by every shard

    std::size_t size() const noexcept { return rows.size(); }
    bool operator==(const LabeledDataset&) const = default;
};

/// Parses one sample per line: `label idx:val idx:val ...` with 1-based,
/// strictly increasing indices. Blank lines are skipped and anything after
/// '#' is ignored. Labels {-1,+1} pass through, {0,1} map 0 -> -1, and any
/// other two-valued label set maps its smaller value to -1. `d_override`
/// widens (never narrows) the feature dimension.
/// Throws ParseError carrying the 1-based line number.
LabeledDataset parse_libsvm(std::istream& is, std::optional<std::size_t> d_override = std::nullopt);

/// Canonical text: "+1"/"-1" labels, 1-based indices, shortest round-trip values.
void write_libsvm(std::ostream& os, const LabeledDataset& ds);

/// Seeded permutation followed by contiguous chunks; the first (m mod n)
/// agents receive one extra sample. Every shard keeps the corpus-wide d.
std::vector<LabeledDataset> split_uniform(const LabeledDataset& ds, std::size_t n, std::uint64_t seed);

/// Divides every feature by its largest absolute value over the corpus.
LabeledDataset scale_max_abs(const LabeledDataset& ds);

}  // namespace gtdsgd
