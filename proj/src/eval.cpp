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

#include "asrlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "asrlab/array.hpp"

namespace asrlab {

namespace {

void check_name(const std::string& s, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string(what) + " must not be empty");
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '=')
      throw std::invalid_argument(std::string(what) + " '" + s + "' contains whitespace or '='");
  }
}

std::string pad_left(const std::string& s, size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string wer_str(double wer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", wer);
  return buf;
}

void accumulate(GroupStats& g, const UtteranceScore& u) {
  g.utterances += 1;
  g.substitutions += u.substitutions;
  g.deletions += u.deletions;
  g.insertions += u.insertions;
  g.ref_len += u.ref_len;
}

void finish(GroupStats& g) {
  g.wer_percent = 100.0 * static_cast<double>(g.substitutions + g.deletions + g.insertions) /
                  static_cast<double>(g.ref_len);
}

}  // namespace

Alignment align_wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw std::invalid_argument("align_wer: reference must not be empty");
  const size_t R = ref.size(), H = hyp.size();
  std::vector<std::vector<int>> d(R + 1, std::vector<int>(H + 1, 0));
  for (size_t i = 0; i <= R; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= H; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= R; ++i) {
    for (size_t j = 1; j <= H; ++j) {
      int diag = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i][j - 1] + 1, d[i - 1][j] + 1});
    }
  }

  Alignment a;
  size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      a.steps.push_back({EditOp::kMatch, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      a.steps.push_back({EditOp::kSub, static_cast<int>(i - 1), static_cast<int>(j - 1)});
      ++a.substitutions;
      --i, --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      a.steps.push_back({EditOp::kIns, -1, static_cast<int>(j - 1)});
      ++a.insertions;
      --j;
    } else {
      a.steps.push_back({EditOp::kDel, static_cast<int>(i - 1), -1});
      ++a.deletions;
      --i;
    }
  }
  std::reverse(a.steps.begin(), a.steps.end());
  return a;
}

WERReport wer_report(const std::vector<RefUtterance>& refs,
                     const std::map<std::string, std::vector<std::string>>& hyps) {
  if (refs.empty()) throw std::invalid_argument("wer_report: no reference utterances");
  std::set<std::string> ids;
  for (const auto& r : refs) {
    check_name(r.utt_id, "wer_report: utterance id");
    check_name(r.group_tag, "wer_report: group tag");
    if (r.words.empty())
      throw std::invalid_argument("wer_report: empty reference for utterance " + r.utt_id);
    if (!ids.insert(r.utt_id).second)
      throw std::invalid_argument("wer_report: duplicate utterance id " + r.utt_id);
  }
  for (const auto& [id, words] : hyps) {
    (void)words;
    if (!ids.count(id))
      throw std::invalid_argument("wer_report: hypothesis for unknown utterance " + id);
  }

  WERReport report;
  std::map<std::string, GroupStats> groups;
  report.all.tag = "All";
  for (const auto& r : refs) {
    UtteranceScore u;
    u.utt_id = r.utt_id;
    u.group_tag = r.group_tag;
    u.ref_len = static_cast<int64_t>(r.words.size());
    auto it = hyps.find(r.utt_id);
    if (it == hyps.end()) {
      u.missing = true;
      u.deletions = static_cast<int>(r.words.size());
      report.missing_utts.push_back(r.utt_id);
    } else {
      Alignment a = align_wer(r.words, it->second);
      u.substitutions = a.substitutions;
      u.deletions = a.deletions;
      u.insertions = a.insertions;
    }
    GroupStats& g = groups[r.group_tag];
    g.tag = r.group_tag;
    accumulate(g, u);
    accumulate(report.all, u);
    report.per_utt.push_back(std::move(u));
  }
  for (auto& [tag, g] : groups) {
    (void)tag;
    finish(g);
    report.groups.push_back(g);
  }
  finish(report.all);
  return report;
}

std::string format_wer_table(const WERReport& report) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"group", "utts", "ref", "sub", "del", "ins", "wer%"});
  auto row = [&rows](const GroupStats& g) {
    rows.push_back({g.tag, std::to_string(g.utterances), std::to_string(g.ref_len),
                    std::to_string(g.substitutions), std::to_string(g.deletions),
                    std::to_string(g.insertions), wer_str(g.wer_percent)});
  };
  for (const auto& g : report.groups) row(g);
  row(report.all);

  std::vector<size_t> width(rows[0].size(), 0);
  for (const auto& r : rows)
    for (size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());

  std::ostringstream os;
  for (const auto& r : rows) {
    os << pad_right(r[0], width[0]);
    for (size_t c = 1; c < r.size(); ++c) os << "  " << pad_left(r[c], width[c]);
    os << '\n';
  }
  if (!report.missing_utts.empty()) {
    os << "missing hypotheses (" << report.missing_utts.size() << "):";
    for (const auto& id : report.missing_utts) os << ' ' << id;
    os << '\n';
  }
  return os.str();
}

std::string format_wer_kv(const WERReport& report) {
  std::ostringstream os;
  auto emit = [&os](const std::string& prefix, const GroupStats& g) {
    os << prefix << ".utterances=" << g.utterances << '\n';
    os << prefix << ".ref=" << g.ref_len << '\n';
    os << prefix << ".sub=" << g.substitutions << '\n';
    os << prefix << ".del=" << g.deletions << '\n';
    os << prefix << ".ins=" << g.insertions << '\n';
    os << prefix << ".wer=" << format_double(g.wer_percent) << '\n';
  };
  os << "utterances=" << report.per_utt.size() << '\n';
  os << "groups=" << report.groups.size() << '\n';
  for (const auto& g : report.groups) emit("group." + g.tag, g);
  emit("all", report.all);
  for (const auto& u : report.per_utt) {
    const std::string prefix = "utt." + u.utt_id;
    os << prefix << ".group=" << u.group_tag << '\n';
    os << prefix << ".ref=" << u.ref_len << '\n';
    os << prefix << ".sub=" << u.substitutions << '\n';
    os << prefix << ".del=" << u.deletions << '\n';
    os << prefix << ".ins=" << u.insertions << '\n';
    os << prefix << ".missing=" << (u.missing ? 1 : 0) << '\n';
  }
  os << "missing=" << report.missing_utts.size() << '\n';
  for (size_t i = 0; i < report.missing_utts.size(); ++i)
    os << "missing." << i << '=' << report.missing_utts[i] << '\n';
  return os.str();
}

double two_sided_normal_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("two_sided_normal_critical: alpha must lie in (0, 1)");
  const double sqrt2 = std::sqrt(2.0);
  double lo = 0.0, hi = 40.0;
  while (hi - lo > 1e-13) {
    double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / sqrt2) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

MAPSSWEResult mapsswe(const std::vector<int>& errors_a, const std::vector<int>& errors_b,
                      double alpha) {
  if (errors_a.size() != errors_b.size())
    throw std::invalid_argument("mapsswe: error vectors must be paired over the same utterances");
  if (errors_a.size() < 2) throw std::invalid_argument("mapsswe: need at least 2 segments");
  for (size_t i = 0; i < errors_a.size(); ++i) {
    if (errors_a[i] < 0 || errors_b[i] < 0)
      throw std::invalid_argument("mapsswe: error counts must be non-negative");
  }

  MAPSSWEResult r;
  r.alpha = alpha;
  r.critical = two_sided_normal_critical(alpha);
  r.n = static_cast<int64_t>(errors_a.size());
  double sum = 0.0;
  for (size_t i = 0; i < errors_a.size(); ++i) {
    r.diffs.push_back(errors_a[i] - errors_b[i]);
    sum += r.diffs.back();
  }
  r.mean_diff = sum / static_cast<double>(r.n);
  double sq = 0.0;
  for (int d : r.diffs) {
    double c = d - r.mean_diff;
    sq += c * c;
  }
  r.variance = sq / static_cast<double>(r.n - 1);

  const double sqrt2 = std::sqrt(2.0);
  if (r.variance == 0.0) {
    r.degenerate_variance = true;
    if (r.mean_diff == 0.0) {
      r.z = 0.0;
      r.p_value = 1.0;
      r.significant = false;
    } else {
      r.z = std::copysign(std::numeric_limits<double>::infinity(), r.mean_diff);
      r.p_value = 0.0;
      r.significant = true;
    }
  } else {
    r.z = r.mean_diff / std::sqrt(r.variance / static_cast<double>(r.n));
    r.p_value = std::erfc(std::abs(r.z) / sqrt2);
    r.significant = std::abs(r.z) > r.critical;
  }
  return r;
}

}  // namespace asrlab
