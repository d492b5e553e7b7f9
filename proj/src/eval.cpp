#include "avatar/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace avatar {

namespace {

// Full DP table for both distance and backtrace.
std::vector<std::vector<int>> dp_table(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      const int sub = dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      dp[i][j] = std::min({sub, dp[i - 1][j] + 1, dp[i][j - 1] + 1});
    }
  return dp;
}

}  // namespace

int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return dp_table(a, b)[a.size()][b.size()];
}

double wer(const std::vector<std::string>& reference,
           const std::vector<std::string>& hypothesis) {
  if (reference.empty()) throw std::invalid_argument("wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) / reference.size();
}

Alignment align(const std::vector<std::string>& reference,
                const std::vector<std::string>& hypothesis) {
  const auto dp = dp_table(reference, hypothesis);
  Alignment out;
  out.ref_changed.assign(reference.size(), false);
  out.gap_insert.assign(reference.size() + 1, false);
  out.edits = dp[reference.size()][hypothesis.size()];
  // Backtrace, preferring match/substitution on ties.
  size_t i = reference.size(), j = hypothesis.size();
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1)) {
      if (reference[i - 1] != hypothesis[j - 1]) out.ref_changed[i - 1] = true;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      out.ref_changed[i - 1] = true;  // deletion
      --i;
    } else {
      out.gap_insert[i] = true;  // insertion before ref position i
      --j;
    }
  }
  return out;
}

double hits_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& gold,
                 int k) {
  if (k < 1) throw std::invalid_argument("hits_at_k: k < 1");
  if (ranked.size() != gold.size())
    throw std::invalid_argument("hits_at_k: one ranked list per query required");
  if (ranked.empty()) return 0.0;
  int hits = 0;
  for (size_t q = 0; q < ranked.size(); ++q) {
    const int limit = std::min<int>(k, static_cast<int>(ranked[q].size()));
    for (int r = 0; r < limit; ++r)
      if (ranked[q][r] == gold[q]) {
        ++hits;
        break;
      }
  }
  return 100.0 * hits / static_cast<double>(ranked.size());
}

namespace {

std::vector<std::pair<size_t, size_t>> entity_spans(const std::vector<std::string>& clean,
                                                    const EntityLexicon& lexicon) {
  std::vector<std::pair<size_t, size_t>> spans;
  for (const auto& ent : lexicon) {
    if (ent.empty() || ent.size() > clean.size()) continue;
    for (size_t s = 0; s + ent.size() <= clean.size(); ++s)
      if (std::equal(ent.begin(), ent.end(), clean.begin() + s))
        spans.emplace_back(s, s + ent.size());
  }
  return spans;
}

}  // namespace

bool contains_entity(const std::vector<std::string>& clean, const EntityLexicon& lexicon) {
  return !entity_spans(clean, lexicon).empty();
}

bool entity_span_corrupted(const std::vector<std::string>& clean,
                           const std::vector<std::string>& noisy,
                           const EntityLexicon& lexicon) {
  const auto spans = entity_spans(clean, lexicon);
  if (spans.empty()) return false;
  const Alignment al = align(clean, noisy);
  for (const auto& [s, e] : spans) {
    for (size_t i = s; i < e; ++i)
      if (al.ref_changed[i]) return true;
    for (size_t g = s + 1; g < e; ++g)  // insertion splitting the span
      if (al.gap_insert[g]) return true;
  }
  return false;
}

double eer(const std::vector<Query>& clean, const std::vector<Query>& noisy,
           const EntityLexicon& lexicon) {
  if (clean.size() != noisy.size()) throw std::invalid_argument("eer: unpaired inputs");
  if (lexicon.empty()) {
    std::cerr << "warning: eer called with an empty entity lexicon\n";
    return 0.0;
  }
  int bearing = 0, corrupted = 0;
  for (size_t i = 0; i < clean.size(); ++i) {
    if (!contains_entity(clean[i].tokens, lexicon)) continue;
    ++bearing;
    if (entity_span_corrupted(clean[i].tokens, noisy[i].tokens, lexicon)) ++corrupted;
  }
  return bearing == 0 ? 0.0 : static_cast<double>(corrupted) / bearing;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_entity_noise(
    const std::vector<Query>& clean, const std::vector<Query>& noisy,
    const EntityLexicon& lexicon) {
  if (clean.size() != noisy.size())
    throw std::invalid_argument("split_entity_noise: unpaired inputs");
  std::vector<size_t> entity, nonentity;
  for (size_t i = 0; i < clean.size(); ++i) {
    if (entity_span_corrupted(clean[i].tokens, noisy[i].tokens, lexicon))
      entity.push_back(i);
    else
      nonentity.push_back(i);
  }
  return {std::move(entity), std::move(nonentity)};
}

namespace {

nlohmann::ordered_json metrics_json(const ConditionMetrics& m) {
  nlohmann::ordered_json j;
  j["hits1"] = m.hits1;
  j["hits10"] = m.hits10;
  j["wer"] = m.wer;
  j["eer_utterance_level"] = m.eer;
  j["entity_hits1"] = m.entity_hits1;
  j["entity_hits10"] = m.entity_hits10;
  j["nonentity_hits1"] = m.nonentity_hits1;
  j["nonentity_hits10"] = m.nonentity_hits10;
  j["entity_subset_size"] = m.entity_subset_size;
  j["nonentity_subset_size"] = m.nonentity_subset_size;
  return j;
}

ConditionMetrics metrics_from_json(const nlohmann::json& j) {
  ConditionMetrics m;
  m.hits1 = j.at("hits1");
  m.hits10 = j.at("hits10");
  m.wer = j.at("wer");
  m.eer = j.at("eer_utterance_level");
  m.entity_hits1 = j.at("entity_hits1");
  m.entity_hits10 = j.at("entity_hits10");
  m.nonentity_hits1 = j.at("nonentity_hits1");
  m.nonentity_hits10 = j.at("nonentity_hits10");
  m.entity_subset_size = j.at("entity_subset_size");
  m.nonentity_subset_size = j.at("nonentity_subset_size");
  return m;
}

}  // namespace

std::string EvalReport::to_string() const {
  nlohmann::ordered_json j;
  j["seeds"] = seeds;
  j["config_hash"] = config_hash;
  nlohmann::ordered_json mat;
  for (const auto& [cond, systems] : matrix) {
    nlohmann::ordered_json row;
    for (const auto& [sys, m] : systems) row[sys] = metrics_json(m);
    mat[cond] = row;
  }
  j["matrix"] = mat;
  return j.dump(2) + "\n";
}

void EvalReport::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write eval report: " + path);
  out << to_string();
}

EvalReport EvalReport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open eval report: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  EvalReport r;
  r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  r.config_hash = j.at("config_hash");
  for (const auto& [cond, systems] : j.at("matrix").items())
    for (const auto& [sys, m] : systems.items()) r.matrix[cond][sys] = metrics_from_json(m);
  return r;
}

void write_run_file(const std::string& path, const Corpus& corpus,
                    const std::vector<std::vector<std::pair<int, double>>>& ranked) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run file: " + path);
  for (size_t q = 0; q < ranked.size(); ++q)
    for (size_t r = 0; r < ranked[q].size(); ++r)
      out << q << '\t' << (r + 1) << '\t' << corpus.documents.at(ranked[q][r].first).external_id
          << '\t' << ranked[q][r].second << '\n';
}

}  // namespace avatar
