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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "asrlab/decode.hpp"
#include "asrlab/model.hpp"
#include "asrlab/ngram.hpp"

using namespace asrlab;

namespace {

Array random_features(int64_t t, int64_t f, uint64_t seed) {
  Rng rng(seed);
  Array a = Array::zeros({t, f});
  for (auto& x : a.v) x = rng.gaussian() * 0.5;
  return a;
}

Model tiny_model(int n_real, uint64_t seed) {
  Vocab vocab = Vocab::sized(n_real);
  ModelConfig cfg = ModelConfig::toy(1, 8, 8, 1, 1, 1);
  cfg.vocab_size = vocab.size();
  return build_model(cfg, seed);
}

struct BruteHyp {
  std::vector<int> ids;
  double att = 0.0;
  double ctc = 0.0;
  double combined = 0.0;
};

// Scores one candidate sequence without the search machinery: teacher-forced
// attention from a single decoder pass, alignment likelihood from the graph
// loss (all-blank mass for the empty sequence).
BruteHyp brute_score(const Model& m, const Array& enc_arr, const Array& lp, const std::vector<int>& ids, double w) {
  const int V = static_cast<int>(m.config.vocab_size);
  const int sos = sos_of(V), eos = eos_of(V), blank = blank_of(V);
  BruteHyp out;
  out.ids = ids;

  Graph g;
  std::vector<int> input;
  input.push_back(sos);
  input.insert(input.end(), ids.begin(), ids.end());
  Array lsm = g.array(g.log_softmax_rows(decoder_logits(g, m, g.constant(enc_arr), input)));
  for (size_t i = 0; i < input.size(); ++i) {
    int target = i + 1 < input.size() ? input[i + 1] : eos;
    out.att += lsm.at(static_cast<int64_t>(i), target);
  }

  if (ids.empty()) {
    for (int64_t t = 0; t < lp.rows(); ++t) out.ctc += lp.at(t, blank);
  } else {
    try {
      Graph g2;
      Tensor loss = g2.ctc_loss(ctc_log_probs(g2, m, g2.constant(enc_arr)), ids, blank);
      out.ctc = -g2.scalar(loss);
    } catch (const std::exception&) {
      out.ctc = kNegInf;
    }
  }
  out.combined = w == 0.0 ? out.att : w == 1.0 ? out.ctc : (1.0 - w) * out.att + w * out.ctc;
  return out;
}

void enumerate_sequences(int n_real, int max_len, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  out.push_back(cur);
  if (static_cast<int>(cur.size()) == max_len) return;
  for (int c = 0; c < n_real; ++c) {
    cur.push_back(c);
    enumerate_sequences(n_real, max_len, cur, out);
    cur.pop_back();
  }
}

bool brute_ranks_before(const BruteHyp& a, const BruteHyp& b) {
  if (a.combined != b.combined) return a.combined > b.combined;
  if (a.ids.size() != b.ids.size()) return a.ids.size() < b.ids.size();
  return a.ids < b.ids;
}

std::vector<int> token_ids(const Vocab& vocab, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  for (const auto& t : tokens) ids.push_back(vocab.find(t));
  return ids;
}

void check_sorted_distinct(const NBestList& list) {
  std::set<std::vector<std::string>> seen;
  for (size_t i = 0; i < list.hyps.size(); ++i) {
    if (i) CHECK(list.hyps[i - 1].combined_score >= list.hyps[i].combined_score);
    CHECK(seen.insert(list.hyps[i].tokens).second);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// scripted second-pass scorer for combination unit tests
struct TableScorer : SequenceScorer {
  std::map<std::vector<std::string>, double> table;
  double scale = 1.0;
  double score(const std::vector<std::string>& tokens) const override { return scale * table.at(tokens); }
};

NBestList hand_list() {
  NBestList a;
  a.utt_id = "utt0";
  Hypothesis h1;
  h1.tokens = {"a"};
  h1.att_logprob = -1.0;
  h1.ctc_logprob = -1.2;
  h1.combined_score = -1.0;
  Hypothesis h2;
  h2.tokens = {"b"};
  h2.att_logprob = -2.0;
  h2.ctc_logprob = -2.5;
  h2.combined_score = -2.0;
  Hypothesis h3;
  h3.tokens = {"a", "b"};
  h3.att_logprob = -3.0;
  h3.ctc_logprob = -3.5;
  h3.combined_score = -3.0;
  a.hyps = {h1, h2, h3};
  return a;
}

}  // namespace

TEST_CASE("beam search rejects out-of-contract arguments") {
  Model m = tiny_model(2, 5);
  Vocab vocab = Vocab::sized(2);
  Array feats = random_features(8, m.config.feature_dim, 3);

  CHECK_THROWS_AS(beam_search_nbest(m, vocab, "u", feats, 0, 5, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(beam_search_nbest(m, vocab, "u", feats, -2, 5, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(beam_search_nbest(m, vocab, "u", feats, 4, 0, 0.3), std::invalid_argument);
  CHECK_THROWS_AS(beam_search_nbest(m, vocab, "u", feats, 4, 5, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(beam_search_nbest(m, vocab, "u", feats, 4, 5, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(beam_search_nbest(m, Vocab::sized(3), "u", feats, 4, 5, 0.3), std::invalid_argument);
}

TEST_CASE("single real symbol vocabulary decodes deterministically") {
  Model m = tiny_model(1, 11);
  Vocab vocab = Vocab::sized(1);
  Array feats = random_features(8, m.config.feature_dim, 7);

  NBestList one = beam_search_nbest(m, vocab, "u0", feats, 1, 1, 0.3);
  REQUIRE(one.hyps.size() == 1);
  NBestList again = beam_search_nbest(m, vocab, "u0", feats, 1, 1, 0.3);
  CHECK(one.hyps[0].tokens == again.hyps[0].tokens);
  CHECK(one.hyps[0].combined_score == again.hyps[0].combined_score);
  CHECK(one.hyps[0].att_logprob == again.hyps[0].att_logprob);
  CHECK(one.hyps[0].ctc_logprob == again.hyps[0].ctc_logprob);
  CHECK_FALSE(score_present(one.hyps[0].lm_logprob));
  CHECK_FALSE(score_present(one.hyps[0].firstpass_logprob));

  NBestList all = beam_search_nbest(m, vocab, "u0", feats, 3, 100, 0.3);
  check_sorted_distinct(all);
  // two frames after subsampling: "a a" would need an alignment of three
  // frames, so only the empty sequence and "a" stay alignable
  CHECK(all.hyps.size() <= 2);
}

TEST_CASE("full-width beam reproduces exhaustive scoring rank for rank") {
  const double w = 0.3;
  for (int s = 0; s < 6; ++s) {
    int n_real = 2 + s % 2;
    Vocab vocab = Vocab::sized(n_real);
    Model m = tiny_model(n_real, 1000 + static_cast<uint64_t>(s));
    Array feats = random_features(8 + (s % 2) * 4, m.config.feature_dim, 77 + static_cast<uint64_t>(s));

    Array enc_arr, lp;
    {
      Graph g;
      Tensor enc = encode(g, m, feats);
      enc_arr = g.array(enc);
      lp = g.array(ctc_log_probs(g, m, enc));
    }
    const int64_t T = lp.rows();
    REQUIRE(T <= 3);

    std::vector<std::vector<int>> seqs;
    std::vector<int> cur;
    enumerate_sequences(n_real, static_cast<int>(T), cur, seqs);
    std::vector<BruteHyp> brute;
    for (const auto& ids : seqs) {
      BruteHyp b = brute_score(m, enc_arr, lp, ids, w);
      if (b.combined != kNegInf) brute.push_back(b);
    }
    std::sort(brute.begin(), brute.end(), brute_ranks_before);

    int beam = 1;
    for (int64_t i = 0; i < T; ++i) beam *= n_real;
    NBestList nb =
        beam_search_nbest(m, vocab, "u" + std::to_string(s), feats, beam, static_cast<int>(brute.size()), w);

    INFO("model seed ", s, " frames ", T);
    REQUIRE(nb.hyps.size() == brute.size());
    for (size_t i = 0; i < brute.size(); ++i) {
      CHECK(token_ids(vocab, nb.hyps[i].tokens) == brute[i].ids);
      CHECK(nb.hyps[i].combined_score == doctest::Approx(brute[i].combined).epsilon(1e-9));
      CHECK(nb.hyps[i].att_logprob == doctest::Approx(brute[i].att).epsilon(1e-9));
      CHECK(nb.hyps[i].ctc_logprob == doctest::Approx(brute[i].ctc).epsilon(1e-9));
    }
  }
}

TEST_CASE("stored scores stay unnormalized and a second pass reproduces them") {
  Model m = tiny_model(3, 21);
  Vocab vocab = Vocab::sized(3);
  Array feats = random_features(12, m.config.feature_dim, 9);

  NBestList nb = beam_search_nbest(m, vocab, "u0", feats, 5, 5, 0.3);
  check_sorted_distinct(nb);
  CHECK(nb.hyps.size() == 5);

  ModelRescorer self(m, vocab, feats, 0.3);
  for (const auto& h : nb.hyps) {
    CHECK(h.att_logprob <= 0.0);
    CHECK(h.ctc_logprob <= 0.0);
    CHECK(h.combined_score == 0.7 * h.att_logprob + 0.3 * h.ctc_logprob);
    // teacher-forced rescoring of the same model reproduces the search score
    CHECK(self.score(h.tokens) == doctest::Approx(h.combined_score).epsilon(1e-9));
  }
}

TEST_CASE("full-sequence alignment scorer agrees with the graph loss") {
  Model m = tiny_model(2, 31);
  Array feats = random_features(20, m.config.feature_dim, 4);
  const int blank = blank_of(m.config.vocab_size);

  Array lp;
  {
    Graph g;
    lp = g.array(ctc_log_probs(g, m, encode(g, m, feats)));
  }

  for (const std::vector<int>& ids :
       {std::vector<int>{0}, {1}, {0, 1}, {1, 1}, {0, 0, 1}, {1, 0, 1, 0}, {0, 0, 0}}) {
    Graph g;
    Tensor loss = g.ctc_loss(ctc_log_probs(g, m, encode(g, m, feats)), ids, blank);
    INFO("target length ", ids.size());
    CHECK(ctc_full_logprob(lp, blank, ids) == doctest::Approx(-g.scalar(loss)).epsilon(1e-9));
  }

  // too long to align: closed form -inf where the graph loss refuses
  std::vector<int> too_long(static_cast<size_t>(lp.rows()) + 1, 0);
  for (size_t i = 0; i < too_long.size(); ++i) too_long[i] = static_cast<int>(i % 2);
  CHECK(ctc_full_logprob(lp, blank, too_long) == kNegInf);
  Graph g;
  Tensor clp = ctc_log_probs(g, m, encode(g, m, feats));
  CHECK_THROWS_AS(g.ctc_loss(clp, too_long, blank), std::invalid_argument);

  CHECK_THROWS_AS(ctc_full_logprob(lp, blank, {blank}), std::invalid_argument);
  CHECK_THROWS_AS(ctc_full_logprob(lp, blank, {99}), std::invalid_argument);

  double all_blank = 0.0;
  for (int64_t t = 0; t < lp.rows(); ++t) all_blank += lp.at(t, blank);
  CHECK(ctc_full_logprob(lp, blank, {}) == doctest::Approx(all_blank).epsilon(1e-12));
}

TEST_CASE("token sequences split into words at the space symbol") {
  CHECK(tokens_to_words({}) == std::vector<std::string>{});
  CHECK(tokens_to_words({"a", "b"}) == std::vector<std::string>{"ab"});
  CHECK(tokens_to_words({"a", "<spc>", "b"}) == std::vector<std::string>{"a", "b"});
  CHECK(tokens_to_words({"<spc>", "a", "<spc>", "<spc>", "b", "<spc>"}) == std::vector<std::string>{"a", "b"});
  CHECK(tokens_to_words({"'", "a"}) == std::vector<std::string>{"'a"});
}

TEST_CASE("lm rescoring fills scores, prefers in-domain order, and is idempotent") {
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 8; ++i) corpus.push_back({"bb", "aa"});
  corpus.push_back({"aa"});
  corpus.push_back({"bb"});
  NGramLM lm = train_kn_lm(corpus, 2);

  NBestList nb;
  nb.utt_id = "u0";
  Hypothesis in_domain;
  in_domain.tokens = {"b", "b", "<spc>", "a", "a"};
  in_domain.att_logprob = -2.0;
  in_domain.ctc_logprob = -2.0;
  in_domain.combined_score = -2.0;
  Hypothesis out_domain;
  out_domain.tokens = {"a", "a", "<spc>", "b", "b"};
  out_domain.att_logprob = -2.0;
  out_domain.ctc_logprob = -2.0;
  out_domain.combined_score = -2.0;
  nb.hyps = {out_domain, in_domain};  // equal scores; lexicographic order

  NBestList flat = lm_rescore(nb, lm, 0.0);
  REQUIRE(flat.hyps.size() == 2);
  CHECK(flat.hyps[0].tokens == out_domain.tokens);
  CHECK(flat.hyps[0].combined_score == -2.0);
  CHECK(score_present(flat.hyps[0].lm_logprob));

  NBestList scored = lm_rescore(nb, lm, 1.0);
  CHECK(scored.hyps[0].tokens == in_domain.tokens);
  CHECK(scored.hyps[0].lm_logprob > scored.hyps[1].lm_logprob);
  CHECK(scored.hyps[0].combined_score ==
        -2.0 + lm.sentence_logprob(std::vector<std::string>{"bb", "aa"}));
  check_sorted_distinct(scored);

  NBestList twice = lm_rescore(scored, lm, 0.0);
  REQUIRE(twice.hyps.size() == scored.hyps.size());
  for (size_t i = 0; i < twice.hyps.size(); ++i) {
    CHECK(twice.hyps[i].tokens == scored.hyps[i].tokens);
    CHECK(twice.hyps[i].combined_score == scored.hyps[i].combined_score);
    CHECK(twice.hyps[i].lm_logprob == scored.hyps[i].lm_logprob);
  }

  CHECK_THROWS_AS(lm_rescore(nb, lm, -0.5), std::invalid_argument);

  NBestList oov = nb;
  oov.hyps[0].tokens = {"c", "c"};
  CHECK_THROWS_AS(lm_rescore(oov, lm, 1.0), std::invalid_argument);

  NBestList dup = nb;
  dup.hyps[1].tokens = dup.hyps[0].tokens;
  CHECK_THROWS_AS(lm_rescore(dup, lm, 1.0), std::invalid_argument);
}

TEST_CASE("cross system combination respects the interpolation identities") {
  NBestList a = hand_list();

  TableScorer b;
  b.table[{"a"}] = -4.0;       // worst under B
  b.table[{"b"}] = -0.5;       // best under B
  b.table[{"a", "b"}] = -1.0;  // second under B

  CHECK_THROWS_AS(cross_system_combine(a, b, -0.01), std::invalid_argument);
  CHECK_THROWS_AS(cross_system_combine(a, b, 1.01), std::invalid_argument);

  NBestList keep_a = cross_system_combine(a, b, 1.0);
  REQUIRE(keep_a.hyps.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(keep_a.hyps[i].tokens == a.hyps[i].tokens);
    CHECK(keep_a.hyps[i].combined_score == a.hyps[i].combined_score);
    CHECK(keep_a.hyps[i].firstpass_logprob == a.hyps[i].combined_score);
  }

  NBestList pure_b = cross_system_combine(a, b, 0.0);
  CHECK(pure_b.hyps[0].tokens == std::vector<std::string>{"b"});
  CHECK(pure_b.hyps[1].tokens == std::vector<std::string>{"a", "b"});
  CHECK(pure_b.hyps[2].tokens == std::vector<std::string>{"a"});
  CHECK(pure_b.hyps[0].combined_score == -0.5);
  CHECK(pure_b.hyps[0].firstpass_logprob == -2.0);

  NBestList half = cross_system_combine(a, b, 0.5);
  for (const auto& h : half.hyps) {
    double expect = 0.5 * h.firstpass_logprob + 0.5 * b.table.at(h.tokens);
    CHECK(h.combined_score == doctest::Approx(expect).epsilon(1e-12));
  }
  check_sorted_distinct(half);

  // scaling both systems by k > 0 cannot change any ranking
  for (double k : {0.1, 3.7, 42.0}) {
    NBestList a_scaled = a;
    for (auto& h : a_scaled.hyps) h.combined_score *= k;
    TableScorer b_scaled = b;
    b_scaled.scale = k;
    for (double beta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      NBestList base = cross_system_combine(a, b, beta);
      NBestList scaled = cross_system_combine(a_scaled, b_scaled, beta);
      REQUIRE(base.hyps.size() == scaled.hyps.size());
      for (size_t i = 0; i < base.hyps.size(); ++i) CHECK(base.hyps[i].tokens == scaled.hyps[i].tokens);
    }
  }

  NBestList dup = a;
  dup.hyps[1].tokens = dup.hyps[0].tokens;
  CHECK_THROWS_AS(cross_system_combine(dup, b, 0.5), std::invalid_argument);
}

TEST_CASE("weighted lm scorer is a usable stand-in first pass") {
  NGramLM lm = train_kn_lm({{"aa", "bb"}, {"aa", "bb"}, {"bb"}}, 2);
  CHECK_THROWS_AS(WeightedLmScorer(lm, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(WeightedLmScorer(lm, -1.0), std::invalid_argument);
  WeightedLmScorer scorer(lm, 2.5);
  std::vector<std::string> tokens = {"a", "a", "<spc>", "b", "b"};
  CHECK(scorer.score(tokens) == doctest::Approx(2.5 * lm.sentence_logprob({"aa", "bb"})).epsilon(1e-12));
}

TEST_CASE("nbest exchange format round trips byte-stably") {
  Model m = tiny_model(3, 41);
  Vocab vocab = Vocab::sized(3);
  std::vector<NBestList> lists;
  lists.push_back(beam_search_nbest(m, vocab, "utt-a", random_features(12, m.config.feature_dim, 1), 4, 5, 0.3));
  lists.push_back(beam_search_nbest(m, vocab, "utt-b", random_features(8, m.config.feature_dim, 2), 4, 3, 0.3));

  const std::string path = "nbest_roundtrip.tsv";
  save_nbest(path, lists);
  std::vector<NBestList> loaded = load_nbest(path, 0.3);
  REQUIRE(loaded.size() == 2);
  for (size_t li = 0; li < lists.size(); ++li) {
    CHECK(loaded[li].utt_id == lists[li].utt_id);
    REQUIRE(loaded[li].hyps.size() == lists[li].hyps.size());
    for (size_t i = 0; i < lists[li].hyps.size(); ++i) {
      const Hypothesis& orig = lists[li].hyps[i];
      const Hypothesis& back = loaded[li].hyps[i];
      CHECK(back.tokens == orig.tokens);
      CHECK(back.att_logprob == orig.att_logprob);
      CHECK(back.ctc_logprob == orig.ctc_logprob);
      CHECK_FALSE(score_present(back.lm_logprob));
      CHECK_FALSE(score_present(back.firstpass_logprob));
      CHECK(back.combined_score == orig.combined_score);
    }
  }

  const std::string path2 = "nbest_roundtrip_resave.tsv";
  save_nbest(path2, loaded);
  CHECK(read_file(path) == read_file(path2));

  // rescored lists round trip the lm column the same way; the unknown class
  // absorbs whatever words the untrained decoder happened to produce
  NGramLM lm = train_kn_lm({{"aab"}, {"ab"}, {"aab", "ab"}, {"b"}, {"<unk>"}}, 2);
  std::vector<NBestList> rescored;
  for (const auto& l : lists) rescored.push_back(lm_rescore(l, lm, 0.4));
  save_nbest(path, rescored);
  std::vector<NBestList> loaded2 = load_nbest(path, 0.3, 0.4);
  for (size_t li = 0; li < rescored.size(); ++li) {
    REQUIRE(loaded2[li].hyps.size() == rescored[li].hyps.size());
    for (size_t i = 0; i < rescored[li].hyps.size(); ++i) {
      CHECK(loaded2[li].hyps[i].lm_logprob == rescored[li].hyps[i].lm_logprob);
      CHECK(loaded2[li].hyps[i].combined_score == rescored[li].hyps[i].combined_score);
    }
  }

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("combined lists keep their stored rank order on reload") {
  NBestList a = hand_list();
  TableScorer b;
  b.table[{"a"}] = -9.0;
  b.table[{"b"}] = -0.25;
  b.table[{"a", "b"}] = -8.0;
  NBestList combined = cross_system_combine(a, b, 0.5);
  // B's strong preference reorders the list against the acoustic mix
  CHECK(combined.hyps[0].tokens == std::vector<std::string>{"b"});

  const std::string path = "nbest_combined.tsv";
  save_nbest(path, {combined});
  std::vector<NBestList> loaded = load_nbest(path, 0.3);
  REQUIRE(loaded.size() == 1);
  REQUIRE(loaded[0].hyps.size() == combined.hyps.size());
  for (size_t i = 0; i < combined.hyps.size(); ++i) {
    CHECK(loaded[0].hyps[i].tokens == combined.hyps[i].tokens);
    CHECK(loaded[0].hyps[i].firstpass_logprob == combined.hyps[i].firstpass_logprob);
  }
  std::remove(path.c_str());
}

TEST_CASE("nbest loader rejects malformed files") {
  auto write_file = [](const std::string& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    os << body;
  };
  const std::string path = "nbest_malformed.tsv";

  write_file(path, "u1\t1\t-1\t-2\tNA\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // field count

  write_file(path, "u1\t2\t-1\t-2\tNA\tNA\ta b\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // rank must start at 1

  write_file(path, "u1\t1\t-1\t-2\tNA\tNA\ta\nu1\t3\t-1\t-2\tNA\tNA\tb\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // rank gap

  write_file(path, "u1\t1\t-1\t-2\tNA\tNA\ta\nu1\t2\t-1\t-2\tNA\tNA\ta\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // duplicate sequence

  write_file(path, "u1\t1\t-1\t-2\tNA\tNA\ta\nu2\t1\t-1\t-2\tNA\tNA\ta\nu1\t1\t-1\t-2\tNA\tNA\tb\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // non-contiguous utterance

  write_file(path, "u1\t1\tNA\t-2\tNA\tNA\ta\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // missing acoustic score

  write_file(path, "u1\t1\tbogus\t-2\tNA\tNA\ta\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // not a number

  write_file(path, "u1\t1\t-1\t-2\tNA\tNA\ta  b\n");
  CHECK_THROWS_AS(load_nbest(path), std::runtime_error);  // empty token

  CHECK(std::remove(path.c_str()) == 0);

  CHECK_THROWS_AS(load_nbest("does_not_exist.tsv"), std::runtime_error);
  CHECK_THROWS_AS(load_nbest(path, 1.5), std::invalid_argument);

  NBestList bad_id = hand_list();
  bad_id.utt_id = "has space";
  CHECK_THROWS_AS(save_nbest(path, {bad_id}), std::invalid_argument);
}
