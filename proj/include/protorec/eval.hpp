#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protorec/data.hpp"
#include "protorec/model.hpp"

namespace protorec {

enum class Exec { serial, parallel };

struct RankRecord {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  std::uint32_t rank = 0;              // 1-based position of the positive
  std::vector<std::uint32_t> top10;    // highest-scoring candidates, in order

  bool operator==(const RankRecord&) const = default;
};

// Ranks one candidate list: descending score, ties by list position.
RankRecord rank_candidates(const EvalCase& c, std::span<const double> scores);

// One record per evaluation case of the stage, in case order. The
// parallel path distributes users over threads and is bit-identical to the
// serial one.
std::vector<RankRecord> rank_all(const ModelParams& params, const FilterSpec& filter,
                                 const Split& split, Stage stage, Exec exec = Exec::parallel);

// Throw UsageError on empty input.
double hit_ratio(std::span<const RankRecord> records, std::size_t cutoff = 10);
double ndcg(std::span<const RankRecord> records, std::size_t cutoff = 10);

struct GroupMeanRanks {
  std::optional<double> under;
  std::optional<double> over;
  std::vector<std::optional<double>> per_decile;  // popularity bins of the positive
};

GroupMeanRanks group_mean_ranks(std::span<const RankRecord> records, const Dataset& dataset);

struct LongTailMetrics {
  double visibility = 0.0;  // share of filled top-10 slots holding long-tail items
  std::optional<double> mean_rank;
};

LongTailMetrics long_tail_metrics(std::span<const RankRecord> records, const Dataset& dataset);

struct EvalReport {
  double hit_ratio_10 = 0.0;
  double ndcg_10 = 0.0;
  std::optional<double> mean_rank_under;
  std::optional<double> mean_rank_over;
  std::optional<double> rank_gap;
  double lt_visibility = 0.0;
  std::optional<double> lt_mean_rank;
  std::vector<std::optional<double>> per_decile_mean_rank;
};

EvalReport make_report(std::span<const RankRecord> records, const Dataset& dataset);

// Flat JSON object keyed by the field names; absent values are null.
std::string report_json(const EvalReport& report);
// Header row plus one value row; per-decile values get one column each.
std::string report_csv(const EvalReport& report);

// user,positive,rank,top10 with external keys and top10 joined by '|'.
void write_records_csv(std::ostream& out, std::span<const RankRecord> records,
                       const Dataset& dataset);

}  // namespace protorec
