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

#ifndef ASRLAB_NGRAM_HPP_
#define ASRLAB_NGRAM_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace asrlab {

// Interpolated modified Kneser-Ney word n-gram model. Sentences are padded
// with the reserved markers "<s>" (context only, never predicted) and "</s>"
// (predicted, part of the vocabulary). If the training corpus contains the
// literal word "<unk>" it doubles as the unknown-word class; without it,
// queries for out-of-vocabulary words are rejected.
struct NGramLM {
  int order = 4;
  std::vector<std::string> vocab;  // sorted; includes "</s>", excludes "<s>"

  // Fully interpolated probabilities, linear domain. probs[k-1] maps
  // space-joined k-grams to p(last word | preceding k-1). backoffs[len-1]
  // maps observed contexts of `len` words to the mass reserved for the
  // next-lower order.
  std::vector<std::map<std::string, double>> probs;
  std::vector<std::map<std::string, double>> backoffs;

  // Estimation byproducts kept for inspection; the exchange format does not
  // carry them, so load_arpa leaves them empty.
  std::vector<std::map<std::string, int64_t>> adjusted_counts;
  std::vector<std::array<double, 3>> discounts;  // {D1, D2, D3+} per order

  bool in_vocab(const std::string& word) const;

  // Natural-log p(word | context). `context` may include "<s>" and is
  // truncated to the last order-1 entries. Unknown words (in either slot)
  // map to "<unk>" when available; an unknown predicted word without that
  // class is rejected.
  double word_logprob(const std::vector<std::string>& context, const std::string& word) const;

  // Natural-log probability of the word sequence followed by "</s>",
  // starting from "<s>".
  double sentence_logprob(const std::vector<std::string>& words) const;
};

// Estimates discounts D1/D2/D3+ per order from count-of-count statistics
// (Y = n1/(n1+2*n2), clamped to [0.05, k]), replaces lower-order counts by
// continuation counts (left-extension type counts; sentence-initial n-grams
// keep raw counts), and interpolates every order down to a uniform 1/|V|
// floor under the unigram. Sentences are plain word sequences; boundary
// markers are added here. Rejects empty corpora, orders < 1, words that
// contain whitespace or collide with the reserved markers, and corpora with
// fewer than two distinct words.
NGramLM train_kn_lm(const std::vector<std::vector<std::string>>& corpus, int order = 4);

// Textual back-off exchange format: a count header, then per order one
// "log10prob<TAB>ngram<TAB>log10backoff" line per entry (backoff column only
// where a context reserves mass). "<s>" appears with the conventional -99
// probability placeholder. Writing uses shortest round-trip decimals, so
// identical models serialize byte-identically.
void save_arpa(const std::string& path, const NGramLM& lm);
NGramLM load_arpa(const std::string& path);

}  // namespace asrlab

#endif  // ASRLAB_NGRAM_HPP_
