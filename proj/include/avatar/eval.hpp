#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avatar/corpus.hpp"

namespace avatar {

// Minimal edit distance with uniform costs.
int edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// (S+D+I)/|reference|; may exceed 1.
double wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

// Alignment detail from the same DP, for entity-span checks.
struct Alignment {
  std::vector<bool> ref_changed;  // substitution or deletion at ref position
  std::vector<bool> gap_insert;   // insertion at gap g (before ref position g), size |ref|+1
  int edits = 0;
};
Alignment align(const std::vector<std::string>& reference,
                const std::vector<std::string>& hypothesis);

// 100 * (#queries with gold in top-k) / #queries. ranked[i] lists document
// indices best-first.
double hits_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<int>& gold, int k);

using EntityLexicon = std::vector<std::vector<std::string>>;

// True when any entity occurrence in the clean query is altered by the
// aligned noise (substitution/deletion inside the span, or an insertion
// splitting it).
bool entity_span_corrupted(const std::vector<std::string>& clean,
                           const std::vector<std::string>& noisy, const EntityLexicon& lexicon);
bool contains_entity(const std::vector<std::string>& clean, const EntityLexicon& lexicon);

// Utterance-level entity error rate: of entity-bearing utterances, the
// fraction whose entity span was corrupted.
double eer(const std::vector<Query>& clean, const std::vector<Query>& noisy,
           const EntityLexicon& lexicon);

// Partition query indices by whether an entity span was corrupted.
std::pair<std::vector<size_t>, std::vector<size_t>> split_entity_noise(
    const std::vector<Query>& clean, const std::vector<Query>& noisy,
    const EntityLexicon& lexicon);

struct ConditionMetrics {
  double hits1 = 0.0;
  double hits10 = 0.0;
  double wer = 0.0;
  double eer = 0.0;  // utterance-level
  // entity/non-entity subsets (subset sizes sum to the test size)
  double entity_hits1 = 0.0, entity_hits10 = 0.0;
  double nonentity_hits1 = 0.0, nonentity_hits10 = 0.0;
  int entity_subset_size = 0, nonentity_subset_size = 0;
};

struct EvalReport {
  std::vector<uint64_t> seeds;
  std::string config_hash;
  // condition name ("clean", "wer10", ...) -> system name -> metrics
  std::map<std::string, std::map<std::string, ConditionMetrics>> matrix;

  std::string to_string() const;  // canonical serialized form
  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);
};

// Run file line: query_id \t rank \t external_doc_id \t score
void write_run_file(const std::string& path, const Corpus& corpus,
                    const std::vector<std::vector<std::pair<int, double>>>& ranked);

}  // namespace avatar
