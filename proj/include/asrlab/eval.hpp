// Copyright (c) 2026 asrlab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ASRLAB_EVAL_HPP_
#define ASRLAB_EVAL_HPP_

#include <map>
#include <string>
#include <vector>

namespace asrlab {

enum class EditOp { kMatch, kSub, kIns, kDel };

struct AlignStep {
  EditOp op;
  int ref_pos;  // -1 for insertions
  int hyp_pos;  // -1 for deletions
};

struct Alignment {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  std::vector<AlignStep> steps;
  int edits() const { return substitutions + deletions + insertions; }
};

// Minimum-edit-distance alignment with unit costs. Ties in the backtrace are
// broken deterministically: match, then substitution, then insertion, then
// deletion. The reference must be non-empty; the hypothesis may be empty.
Alignment align_wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct RefUtterance {
  std::string utt_id;
  std::string group_tag;  // e.g. "Dev-INV"
  std::vector<std::string> words;
};

struct UtteranceScore {
  std::string utt_id;
  std::string group_tag;
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int64_t ref_len = 0;
  bool missing = false;
};

struct GroupStats {
  std::string tag;
  int64_t utterances = 0;
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t ref_len = 0;
  double wer_percent = 0.0;  // 100 * (S + D + I) / ref_len
};

struct WERReport {
  std::vector<UtteranceScore> per_utt;   // corpus order
  std::vector<GroupStats> groups;        // sorted by tag
  GroupStats all;                        // pooled counts, tag "All"
  std::vector<std::string> missing_utts;
};

// Scores one system against a reference corpus. An utterance without a
// hypothesis is counted as all deletions and flagged. Hypotheses for unknown
// utterance ids are rejected.
WERReport wer_report(const std::vector<RefUtterance>& refs,
                     const std::map<std::string, std::vector<std::string>>& hyps);

// Aligned-column text table, one row per group plus the pooled "All" row.
std::string format_wer_table(const WERReport& report);

// Machine-readable key=value lines covering groups, the pooled totals, and
// every utterance.
std::string format_wer_kv(const WERReport& report);

struct MAPSSWEResult {
  int64_t n = 0;
  std::vector<int> diffs;  // per-segment error difference, system A - system B
  double mean_diff = 0.0;
  double variance = 0.0;  // n-1 denominator
  double z = 0.0;         // mean / sqrt(variance / n)
  double p_value = 1.0;   // two-sided normal
  double alpha = 0.05;
  double critical = 0.0;  // two-sided normal critical value at alpha
  bool significant = false;
  bool degenerate_variance = false;
};

// Matched-pairs significance test over per-utterance error counts, one
// segment per utterance. Zero-variance difference vectors are flagged rather
// than rejected: a nonzero mean is then reported as significant.
MAPSSWEResult mapsswe(const std::vector<int>& errors_a, const std::vector<int>& errors_b,
                      double alpha = 0.05);

// z with P(|N(0,1)| > z) = alpha, solved to ~1e-12 by bisection.
double two_sided_normal_critical(double alpha);

}  // namespace asrlab

#endif  // ASRLAB_EVAL_HPP_
