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

#include "asrlab/decode.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "asrlab/array.hpp"

namespace asrlab {

namespace {

// w=0 and w=1 must not touch the other term; 0 * -inf would poison the mix.
double mix_scores(double att, double ctc, double w) {
  if (w == 0.0) return att;
  if (w == 1.0) return ctc;
  return (1.0 - w) * att + w * ctc;
}

bool hyp_ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.combined_score != b.combined_score) return a.combined_score > b.combined_score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

void sort_hyps(NBestList& list, const char* op) {
  for (const auto& h : list.hyps)
    if (std::isnan(h.combined_score))
      throw std::logic_error(std::string(op) + ": combined_score is NaN");
  std::sort(list.hyps.begin(), list.hyps.end(), hyp_ranks_before);
}

void require_distinct(const NBestList& list, const char* op) {
  std::set<std::vector<std::string>> seen;
  for (const auto& h : list.hyps)
    if (!seen.insert(h.tokens).second)
      throw std::invalid_argument(std::string(op) + ": duplicate token sequence in input list");
}

// Alignment-prefix bookkeeping over per-frame log distributions. r_b[t] /
// r_nb[t] carry the mass of paths over the first t frames that collapse to
// the prefix and end in blank / in its last symbol; prefix_logprob carries
// the mass of all label sequences that extend the prefix.
struct CtcPrefixState {
  std::vector<double> r_b, r_nb;
  double prefix_logprob = 0.0;
};

CtcPrefixState ctc_empty_prefix(const Array& lp, int blank) {
  int64_t T = lp.rows();
  CtcPrefixState s;
  s.r_b.assign(static_cast<size_t>(T + 1), kNegInf);
  s.r_nb.assign(static_cast<size_t>(T + 1), kNegInf);
  s.r_b[0] = 0.0;
  for (int64_t t = 1; t <= T; ++t)
    s.r_b[static_cast<size_t>(t)] = s.r_b[static_cast<size_t>(t - 1)] + lp.at(t - 1, blank);
  return s;
}

CtcPrefixState ctc_extend(const Array& lp, int blank, const CtcPrefixState& s, int last, int c) {
  int64_t T = lp.rows();
  CtcPrefixState out;
  out.r_b.assign(static_cast<size_t>(T + 1), kNegInf);
  out.r_nb.assign(static_cast<size_t>(T + 1), kNegInf);
  double first_emit = kNegInf;
  for (int64_t t = 1; t <= T; ++t) {
    size_t ti = static_cast<size_t>(t);
    double phi = c == last ? s.r_b[ti - 1] : log_add(s.r_b[ti - 1], s.r_nb[ti - 1]);
    out.r_nb[ti] = lp.at(t - 1, c) + log_add(out.r_nb[ti - 1], phi);
    out.r_b[ti] = lp.at(t - 1, blank) + log_add(out.r_b[ti - 1], out.r_nb[ti - 1]);
    first_emit = log_add(first_emit, phi + lp.at(t - 1, c));
  }
  out.prefix_logprob = first_emit;
  return out;
}

double ctc_complete(const CtcPrefixState& s) { return log_add(s.r_b.back(), s.r_nb.back()); }

}  // namespace

double ctc_full_logprob(const Array& log_probs, int blank, const std::vector<int>& ids) {
  int64_t T = log_probs.rows();
  int64_t V = log_probs.cols();
  if (blank < 0 || blank >= V) throw std::invalid_argument("ctc_full_logprob: blank id out of range");
  for (int id : ids)
    if (id < 0 || id >= V || id == blank)
      throw std::invalid_argument("ctc_full_logprob: label id " + std::to_string(id) + " out of range");
  if (ids.empty()) {
    double s = 0.0;
    for (int64_t t = 0; t < T; ++t) s += log_probs.at(t, blank);
    return s;
  }
  if (T == 0) return kNegInf;

  int64_t L = static_cast<int64_t>(ids.size());
  int64_t S = 2 * L + 1;
  auto label = [&](int64_t si) { return si % 2 == 0 ? blank : ids[static_cast<size_t>(si / 2)]; };
  std::vector<double> alpha(static_cast<size_t>(S), kNegInf), next(static_cast<size_t>(S), kNegInf);
  alpha[0] = log_probs.at(0, blank);
  alpha[1] = log_probs.at(0, ids[0]);
  for (int64_t t = 1; t < T; ++t) {
    for (int64_t si = 0; si < S; ++si) {
      double a = alpha[static_cast<size_t>(si)];
      if (si >= 1) a = log_add(a, alpha[static_cast<size_t>(si - 1)]);
      if (si >= 2 && label(si) != blank && label(si) != label(si - 2))
        a = log_add(a, alpha[static_cast<size_t>(si - 2)]);
      next[static_cast<size_t>(si)] = a + log_probs.at(t, label(si));
    }
    std::swap(alpha, next);
  }
  return S >= 2 ? log_add(alpha[static_cast<size_t>(S - 1)], alpha[static_cast<size_t>(S - 2)])
                : alpha[static_cast<size_t>(S - 1)];
}

NBestList beam_search_nbest(const Model& m, const Vocab& vocab, const std::string& utt_id, const Array& features,
                            int beam, int n_best, double ctc_decode_weight) {
  if (beam < 1) throw std::invalid_argument("beam_search_nbest: beam must be >= 1, got " + std::to_string(beam));
  if (n_best < 1) throw std::invalid_argument("beam_search_nbest: n_best must be >= 1, got " + std::to_string(n_best));
  if (!(ctc_decode_weight >= 0.0 && ctc_decode_weight <= 1.0))
    throw std::invalid_argument("beam_search_nbest: ctc_decode_weight must lie in [0, 1], got " +
                                format_double(ctc_decode_weight));
  if (vocab.size() != m.config.vocab_size)
    throw std::invalid_argument("beam_search_nbest: vocabulary size " + std::to_string(vocab.size()) +
                                " does not match model vocab_size " + std::to_string(m.config.vocab_size));
  const double w = ctc_decode_weight;
  const int V = static_cast<int>(m.config.vocab_size);
  const int blank = blank_of(V), sos = sos_of(V), eos = eos_of(V);

  Array enc_arr, lp;
  {
    Graph g;
    Tensor enc = encode(g, m, features);
    enc_arr = g.array(enc);
    lp = g.array(ctc_log_probs(g, m, enc));
  }
  const int64_t T = lp.rows();

  struct BeamHyp {
    std::vector<int> ids;
    double att = 0.0;
    CtcPrefixState ctc;
  };
  std::vector<BeamHyp> live(1);
  live[0].ctc = ctc_empty_prefix(lp, blank);

  NBestList out;
  out.utt_id = utt_id;
  std::set<std::vector<int>> finished;

  // Hypothesis length never exceeds the frame count: longer sequences have
  // no alignment, and with w=0 the cap keeps pure attention search finite.
  for (int64_t step = 0; step <= T; ++step) {
    Graph g;
    Tensor enc_c = g.constant(enc_arr);
    std::vector<std::vector<double>> rows;
    rows.reserve(live.size());
    for (const auto& h : live) {
      std::vector<int> input;
      input.reserve(h.ids.size() + 1);
      input.push_back(sos);
      input.insert(input.end(), h.ids.begin(), h.ids.end());
      Array a = g.array(g.log_softmax_rows(decoder_logits(g, m, enc_c, input)));
      std::vector<double> row(static_cast<size_t>(V));
      for (int vid = 0; vid < V; ++vid) row[static_cast<size_t>(vid)] = a.at(a.rows() - 1, vid);
      rows.push_back(std::move(row));
    }

    for (size_t i = 0; i < live.size(); ++i) {
      const BeamHyp& h = live[i];
      Hypothesis hyp;
      hyp.att_logprob = h.att + rows[i][static_cast<size_t>(eos)];
      hyp.ctc_logprob = ctc_complete(h.ctc);
      hyp.combined_score = mix_scores(hyp.att_logprob, hyp.ctc_logprob, w);
      if (hyp.combined_score == kNegInf) continue;
      hyp.tokens.reserve(h.ids.size());
      for (int id : h.ids) hyp.tokens.push_back(vocab.symbols[static_cast<size_t>(id)]);
      if (!finished.insert(h.ids).second)
        throw std::logic_error("beam_search_nbest: duplicate finished sequence");
      out.hyps.push_back(std::move(hyp));
    }
    if (step == T) break;

    struct Cand {
      size_t src;
      int c;
      double att;
      CtcPrefixState st;
      double prune;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < live.size(); ++i) {
      const BeamHyp& h = live[i];
      int last = h.ids.empty() ? -1 : h.ids.back();
      for (int c = 0; c < V; ++c) {
        if (c == blank || c == sos || c == eos) continue;
        CtcPrefixState st = ctc_extend(lp, blank, h.ctc, last, c);
        double att_n = h.att + rows[i][static_cast<size_t>(c)];
        double joint = mix_scores(att_n, st.prefix_logprob, w);
        if (joint == kNegInf) continue;
        double prune = joint / static_cast<double>(h.ids.size() + 1);
        cands.push_back(Cand{i, c, att_n, std::move(st), prune});
      }
    }
    if (cands.empty()) break;
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.prune != b.prune) return a.prune > b.prune;
      if (a.src != b.src) return a.src < b.src;
      return a.c < b.c;
    });
    if (static_cast<int>(cands.size()) > beam) cands.resize(static_cast<size_t>(beam));
    std::vector<BeamHyp> next;
    next.reserve(cands.size());
    for (auto& cd : cands) {
      BeamHyp nh;
      nh.ids = live[cd.src].ids;
      nh.ids.push_back(cd.c);
      nh.att = cd.att;
      nh.ctc = std::move(cd.st);
      next.push_back(std::move(nh));
    }
    live = std::move(next);
  }

  sort_hyps(out, "beam_search_nbest");
  if (static_cast<int>(out.hyps.size()) > n_best) out.hyps.resize(static_cast<size_t>(n_best));
  return out;
}

std::vector<std::string> tokens_to_words(const std::vector<std::string>& tokens) {
  std::vector<std::string> words;
  std::string cur;
  for (const auto& t : tokens) {
    if (t == "<spc>") {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += t;
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

NBestList lm_rescore(const NBestList& nbest, const NGramLM& lm, double lm_weight) {
  if (!std::isfinite(lm_weight) || lm_weight < 0.0)
    throw std::invalid_argument("lm_rescore: lm_weight must be finite and >= 0, got " + format_double(lm_weight));
  require_distinct(nbest, "lm_rescore");
  NBestList out = nbest;
  for (auto& h : out.hyps) {
    h.lm_logprob = lm.sentence_logprob(tokens_to_words(h.tokens));
    h.combined_score += lm_weight * h.lm_logprob;
  }
  sort_hyps(out, "lm_rescore");
  return out;
}

ModelRescorer::ModelRescorer(const Model& m, const Vocab& vocab, const Array& features, double ctc_weight)
    : m_(&m), vocab_(&vocab), ctc_weight_(ctc_weight) {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0))
    throw std::invalid_argument("ModelRescorer: ctc_weight must lie in [0, 1], got " + format_double(ctc_weight));
  if (vocab.size() != m.config.vocab_size)
    throw std::invalid_argument("ModelRescorer: vocabulary size does not match model vocab_size");
  Graph g;
  Tensor enc = encode(g, m, features);
  enc_ = g.array(enc);
  log_probs_ = g.array(ctc_log_probs(g, m, enc));
}

double ModelRescorer::score(const std::vector<std::string>& tokens) const {
  const int V = static_cast<int>(m_->config.vocab_size);
  const int blank = blank_of(V), sos = sos_of(V), eos = eos_of(V);
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    int id = vocab_->find(t);
    if (id < 0 || id == blank || id == sos || id == eos)
      throw std::invalid_argument("ModelRescorer: token '" + t + "' is not a plain output symbol");
    ids.push_back(id);
  }
  Graph g;
  std::vector<int> input;
  input.reserve(ids.size() + 1);
  input.push_back(sos);
  input.insert(input.end(), ids.begin(), ids.end());
  Array lsm = g.array(g.log_softmax_rows(decoder_logits(g, *m_, g.constant(enc_), input)));
  double att = 0.0;
  for (size_t i = 0; i < input.size(); ++i) {
    int target = i + 1 < input.size() ? input[i + 1] : eos;
    att += lsm.at(static_cast<int64_t>(i), target);
  }
  return mix_scores(att, ctc_full_logprob(log_probs_, blank, ids), ctc_weight_);
}

WeightedLmScorer::WeightedLmScorer(const NGramLM& lm, double scale) : lm_(&lm), scale_(scale) {
  if (!std::isfinite(scale) || scale <= 0.0)
    throw std::invalid_argument("WeightedLmScorer: scale must be finite and > 0, got " + format_double(scale));
}

double WeightedLmScorer::score(const std::vector<std::string>& tokens) const {
  return scale_ * lm_->sentence_logprob(tokens_to_words(tokens));
}

NBestList cross_system_combine(const NBestList& firstpass, const SequenceScorer& system_b, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("cross_system_combine: beta must lie in [0, 1], got " + format_double(beta));
  require_distinct(firstpass, "cross_system_combine");
  NBestList out = firstpass;
  for (auto& h : out.hyps) {
    double a = h.combined_score;
    double b = system_b.score(h.tokens);
    h.firstpass_logprob = a;
    h.combined_score = beta == 1.0 ? a : beta == 0.0 ? b : beta * a + (1.0 - beta) * b;
  }
  sort_hyps(out, "cross_system_combine");
  return out;
}

void save_nbest(const std::string& path, const std::vector<NBestList>& lists) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_nbest: cannot open " + path);
  auto field = [](double x) { return score_present(x) ? format_double(x) : std::string("NA"); };
  for (const auto& list : lists) {
    if (list.utt_id.empty() || list.utt_id.find_first_of(" \t\r\n") != std::string::npos)
      throw std::invalid_argument("save_nbest: bad utt_id '" + list.utt_id + "'");
    int rank = 1;
    for (const auto& h : list.hyps) {
      os << list.utt_id << '\t' << rank++ << '\t' << field(h.att_logprob) << '\t' << field(h.ctc_logprob) << '\t'
         << field(h.lm_logprob) << '\t' << field(h.firstpass_logprob) << '\t';
      for (size_t i = 0; i < h.tokens.size(); ++i) {
        const auto& t = h.tokens[i];
        if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
          throw std::invalid_argument("save_nbest: bad token '" + t + "'");
        if (i) os << ' ';
        os << t;
      }
      os << '\n';
    }
  }
  if (!os) throw std::runtime_error("save_nbest: write failed for " + path);
}

std::vector<NBestList> load_nbest(const std::string& path, double ctc_weight, double lm_weight) {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0))
    throw std::invalid_argument("load_nbest: ctc_weight must lie in [0, 1]");
  if (!std::isfinite(lm_weight) || lm_weight < 0.0)
    throw std::invalid_argument("load_nbest: lm_weight must be finite and >= 0");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_nbest: cannot open " + path);

  std::vector<NBestList> lists;
  std::set<std::string> closed_ids;
  std::set<std::vector<std::string>> seen_tokens;
  std::string line;
  size_t line_no = 0;
  auto bad = [&](const std::string& why) {
    return std::runtime_error("load_nbest: " + path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> f;
    size_t start = 0;
    for (int i = 0; i < 6; ++i) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) throw bad("expected 7 tab-separated fields");
      f.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    f.push_back(line.substr(start));
    if (f[0].empty()) throw bad("empty utt_id");

    auto score_field = [&](const std::string& s, bool required) {
      if (s == "NA") {
        if (required) throw bad("missing acoustic score");
        return score_na();
      }
      try {
        return parse_double(s);
      } catch (const std::invalid_argument&) {
        throw bad("bad score field '" + s + "'");
      }
    };

    Hypothesis h;
    h.att_logprob = score_field(f[2], true);
    h.ctc_logprob = score_field(f[3], true);
    h.lm_logprob = score_field(f[4], false);
    h.firstpass_logprob = score_field(f[5], false);
    h.combined_score = mix_scores(h.att_logprob, h.ctc_logprob, ctc_weight);
    if (score_present(h.lm_logprob)) h.combined_score += lm_weight * h.lm_logprob;

    if (!f[6].empty()) {
      size_t p = 0;
      while (p <= f[6].size()) {
        size_t sp = f[6].find(' ', p);
        std::string tok = f[6].substr(p, sp == std::string::npos ? std::string::npos : sp - p);
        if (tok.empty()) throw bad("empty token");
        h.tokens.push_back(tok);
        if (sp == std::string::npos) break;
        p = sp + 1;
      }
    }

    if (lists.empty() || lists.back().utt_id != f[0]) {
      if (!closed_ids.insert(f[0]).second) throw bad("utterance '" + f[0] + "' is not contiguous");
      lists.push_back(NBestList{f[0], {}});
      seen_tokens.clear();
    }
    int rank = 0;
    try {
      rank = static_cast<int>(parse_double(f[1]));
    } catch (const std::invalid_argument&) {
      throw bad("bad rank '" + f[1] + "'");
    }
    if (rank != static_cast<int>(lists.back().hyps.size()) + 1)
      throw bad("rank " + f[1] + " out of order");
    if (!seen_tokens.insert(h.tokens).second) throw bad("duplicate token sequence");
    lists.back().hyps.push_back(std::move(h));
  }
  return lists;
}

}  // namespace asrlab
