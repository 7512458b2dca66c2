#include "protorec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "protorec/checkpoint.hpp"
#include "protorec/errors.hpp"

namespace protorec {

RankRecord rank_candidates(const EvalCase& c, std::span<const double> scores) {
  const auto cands = c.candidates();
  std::vector<std::uint32_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  RankRecord r;
  r.user = c.user;
  r.positive = c.positive;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == c.positive_slot) r.rank = static_cast<std::uint32_t>(pos + 1);
    if (pos < 10) r.top10.push_back(cands[order[pos]]);
  }
  return r;
}

std::vector<RankRecord> rank_all(const ModelParams& params, const FilterSpec& filter,
                                 const Split& split, Stage stage, Exec exec) {
  const auto& cases = split.cases(stage);
  std::vector<RankRecord> records(cases.size());
  const auto n = static_cast<std::ptrdiff_t>(cases.size());
#pragma omp parallel for schedule(dynamic, 16) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto cands = cases[i].candidates();
    const auto scores = batch_scores(params, cases[i].user, cands, filter);
    records[i] = rank_candidates(cases[i], scores);
  }
  return records;
}

double hit_ratio(std::span<const RankRecord> records, std::size_t cutoff) {
  if (records.empty()) throw UsageError("hit_ratio of no records");
  std::size_t hits = 0;
  for (const auto& r : records)
    if (r.rank <= cutoff) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double ndcg(std::span<const RankRecord> records, std::size_t cutoff) {
  if (records.empty()) throw UsageError("ndcg of no records");
  double sum = 0.0;
  for (const auto& r : records)
    if (r.rank <= cutoff) sum += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
  return sum / static_cast<double>(records.size());
}

namespace {

struct MeanAcc {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

}  // namespace

GroupMeanRanks group_mean_ranks(std::span<const RankRecord> records, const Dataset& dataset) {
  const auto decile = popularity_deciles(dataset);
  std::vector<MeanAcc> per(decile_count(dataset));
  MeanAcc under, over;
  for (const auto& r : records) {
    const Group g = dataset.item_group.at(r.positive);
    if (g == Group::under) under.add(r.rank);
    if (g == Group::over) over.add(r.rank);
    per[decile[r.positive]].add(r.rank);
  }
  GroupMeanRanks out;
  out.under = under.mean();
  out.over = over.mean();
  for (const auto& p : per) out.per_decile.push_back(p.mean());
  return out;
}

LongTailMetrics long_tail_metrics(std::span<const RankRecord> records, const Dataset& dataset) {
  const auto tail = long_tail_items(dataset);
  std::size_t slots = 0, tail_slots = 0;
  MeanAcc rank;
  for (const auto& r : records) {
    for (auto item : r.top10) {
      ++slots;
      if (tail[item]) ++tail_slots;
    }
    if (tail[r.positive]) rank.add(r.rank);
  }
  LongTailMetrics out;
  out.visibility = slots == 0 ? 0.0 : static_cast<double>(tail_slots) / static_cast<double>(slots);
  out.mean_rank = rank.mean();
  return out;
}

EvalReport make_report(std::span<const RankRecord> records, const Dataset& dataset) {
  EvalReport rep;
  rep.hit_ratio_10 = hit_ratio(records);
  rep.ndcg_10 = ndcg(records);
  auto groups = group_mean_ranks(records, dataset);
  rep.mean_rank_under = groups.under;
  rep.mean_rank_over = groups.over;
  if (groups.under && groups.over) rep.rank_gap = *groups.under - *groups.over;
  auto lt = long_tail_metrics(records, dataset);
  rep.lt_visibility = lt.visibility;
  rep.lt_mean_rank = lt.mean_rank;
  rep.per_decile_mean_rank = std::move(groups.per_decile);
  return rep;
}

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["hit_ratio_10"] = r.hit_ratio_10;
  j["ndcg_10"] = r.ndcg_10;
  j["mean_rank_under"] = opt(r.mean_rank_under);
  j["mean_rank_over"] = opt(r.mean_rank_over);
  j["rank_gap"] = opt(r.rank_gap);
  j["lt_visibility"] = r.lt_visibility;
  j["lt_mean_rank"] = opt(r.lt_mean_rank);
  auto deciles = nlohmann::ordered_json::array();
  for (const auto& d : r.per_decile_mean_rank) deciles.push_back(opt(d));
  j["per_decile_mean_rank"] = deciles;
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "hit_ratio_10,ndcg_10,mean_rank_under,mean_rank_over,rank_gap,lt_visibility,lt_mean_rank";
  for (std::size_t i = 0; i < r.per_decile_mean_rank.size(); ++i)
    out << ",per_decile_mean_rank_" << i;
  out << '\n'
      << format_double(r.hit_ratio_10) << ',' << format_double(r.ndcg_10) << ','
      << opt_csv(r.mean_rank_under) << ',' << opt_csv(r.mean_rank_over) << ','
      << opt_csv(r.rank_gap) << ',' << format_double(r.lt_visibility) << ','
      << opt_csv(r.lt_mean_rank);
  for (const auto& d : r.per_decile_mean_rank) out << ',' << opt_csv(d);
  out << '\n';
  return out.str();
}

void write_records_csv(std::ostream& out, std::span<const RankRecord> records,
                       const Dataset& dataset) {
  out << "user,positive,rank,top10\n";
  for (const auto& r : records) {
    out << dataset.user_keys.at(r.user) << ',' << dataset.item_keys.at(r.positive) << ','
        << r.rank << ',';
    for (std::size_t i = 0; i < r.top10.size(); ++i)
      out << (i ? "|" : "") << dataset.item_keys.at(r.top10[i]);
    out << '\n';
  }
}

}  // namespace protorec
