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

#include "asrlab/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "asrlab/array.hpp"

namespace asrlab {

namespace {

constexpr const char* kBos = "<s>";
constexpr const char* kEos = "</s>";
constexpr const char* kUnk = "<unk>";

std::string join(const std::vector<std::string>& words, size_t begin, size_t end) {
  std::string out;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += words[i];
  }
  return out;
}

int count_class(int64_t c) { return c >= 3 ? 2 : static_cast<int>(c) - 1; }

bool bos_initial(const std::string& key) {
  return key == kBos || key.rfind(std::string(kBos) + " ", 0) == 0;
}

int parse_int(const std::string& s) {
  return static_cast<int>(parse_double(s));
}

}  // namespace

bool NGramLM::in_vocab(const std::string& word) const {
  return std::binary_search(vocab.begin(), vocab.end(), word);
}

namespace {

std::string map_word(const NGramLM& lm, const std::string& w, bool is_context) {
  if (w == kBos) {
    if (is_context) return w;
    throw std::invalid_argument("NGramLM: '<s>' cannot be predicted");
  }
  if (lm.in_vocab(w)) return w;
  if (lm.in_vocab(kUnk)) return kUnk;
  if (is_context) return w;
  throw std::invalid_argument("NGramLM: out-of-vocabulary word '" + w + "' and no <unk> class");
}

}  // namespace

double NGramLM::word_logprob(const std::vector<std::string>& context, const std::string& word) const {
  std::string w = map_word(*this, word, false);
  size_t len = std::min(context.size(), static_cast<size_t>(order - 1));
  std::vector<std::string> ctx(context.end() - static_cast<ptrdiff_t>(len), context.end());
  for (auto& c : ctx) c = map_word(*this, c, true);

  double acc = 0.0;
  for (size_t use = ctx.size() + 1; use >= 1; --use) {
    std::string key = join(ctx, ctx.size() - (use - 1), ctx.size());
    if (!key.empty()) key += ' ';
    key += w;
    const auto& table = probs[use - 1];
    auto it = table.find(key);
    if (it != table.end()) return acc + std::log(it->second);
    if (use >= 2) {
      const auto& bo = backoffs[use - 2];
      auto bit = bo.find(join(ctx, ctx.size() - (use - 1), ctx.size()));
      if (bit != bo.end()) acc += std::log(bit->second);
    }
  }
  throw std::logic_error("NGramLM: missing unigram entry for '" + w + "'");
}

double NGramLM::sentence_logprob(const std::vector<std::string>& words) const {
  std::vector<std::string> ctx = {kBos};
  double total = 0.0;
  for (const auto& w : words) {
    total += word_logprob(ctx, w);
    ctx.push_back(w);
  }
  total += word_logprob(ctx, kEos);
  return total;
}

NGramLM train_kn_lm(const std::vector<std::vector<std::string>>& corpus, int order) {
  if (order < 1) throw std::invalid_argument("train_kn_lm: order must be >= 1, got " + std::to_string(order));
  if (corpus.empty()) throw std::invalid_argument("train_kn_lm: corpus is empty");

  std::set<std::string> word_set;
  for (const auto& sent : corpus) {
    for (const auto& w : sent) {
      if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos)
        throw std::invalid_argument("train_kn_lm: malformed word '" + w + "'");
      if (w == kBos || w == kEos)
        throw std::invalid_argument("train_kn_lm: corpus words may not use the reserved marker " + w);
      word_set.insert(w);
    }
  }
  if (word_set.size() < 2)
    throw std::invalid_argument("train_kn_lm: vocabulary must contain at least 2 distinct words, got " +
                                std::to_string(word_set.size()));

  NGramLM lm;
  lm.order = order;
  lm.vocab.assign(word_set.begin(), word_set.end());
  lm.vocab.push_back(kEos);
  std::sort(lm.vocab.begin(), lm.vocab.end());

  // Raw windowed counts over <s>-padded, </s>-terminated sentences.
  std::vector<std::map<std::string, int64_t>> raw(static_cast<size_t>(order));
  for (const auto& sent : corpus) {
    std::vector<std::string> seq;
    seq.reserve(sent.size() + 2);
    seq.push_back(kBos);
    seq.insert(seq.end(), sent.begin(), sent.end());
    seq.push_back(kEos);
    for (int k = 1; k <= order; ++k)
      for (size_t i = 0; i + static_cast<size_t>(k) <= seq.size(); ++i)
        ++raw[static_cast<size_t>(k - 1)][join(seq, i, i + static_cast<size_t>(k))];
  }

  // Lower orders use left-extension type counts; sentence-initial n-grams
  // have no left extension and keep their raw counts.
  lm.adjusted_counts.assign(static_cast<size_t>(order), {});
  lm.adjusted_counts[static_cast<size_t>(order - 1)] = raw[static_cast<size_t>(order - 1)];
  for (int k = order - 1; k >= 1; --k) {
    std::map<std::string, int64_t> cont;
    for (const auto& [key, c] : raw[static_cast<size_t>(k)]) {
      (void)c;
      ++cont[key.substr(key.find(' ') + 1)];
    }
    for (const auto& [key, c] : raw[static_cast<size_t>(k - 1)]) {
      int64_t adj = bos_initial(key) ? c : (cont.count(key) ? cont.at(key) : 0);
      if (adj > 0) lm.adjusted_counts[static_cast<size_t>(k - 1)][key] = adj;
    }
  }

  lm.discounts.assign(static_cast<size_t>(order), {0.0, 0.0, 0.0});
  for (int k = 1; k <= order; ++k) {
    std::array<int64_t, 4> n = {0, 0, 0, 0};
    for (const auto& [key, c] : lm.adjusted_counts[static_cast<size_t>(k - 1)]) {
      if (k == 1 && key == kBos) continue;
      if (c >= 1 && c <= 4) ++n[static_cast<size_t>(c - 1)];
    }
    double y = (n[0] + 2 * n[1]) > 0 ? static_cast<double>(n[0]) / static_cast<double>(n[0] + 2 * n[1]) : 0.5;
    auto d = [&](int j) {
      double r = n[static_cast<size_t>(j - 1)] > 0
                     ? j - (j + 1) * y * static_cast<double>(n[static_cast<size_t>(j)]) /
                               static_cast<double>(n[static_cast<size_t>(j - 1)])
                     : j * y;
      return std::min(std::max(r, 0.05), static_cast<double>(j));
    };
    lm.discounts[static_cast<size_t>(k - 1)] = {d(1), d(2), d(3)};
  }

  lm.probs.assign(static_cast<size_t>(order), {});
  lm.backoffs.assign(static_cast<size_t>(order > 1 ? order - 1 : 0), {});

  {
    const auto& D = lm.discounts[0];
    int64_t total = 0;
    std::array<int64_t, 3> nclass = {0, 0, 0};
    for (const auto& [w, c] : lm.adjusted_counts[0]) {
      if (w == kBos) continue;
      total += c;
      ++nclass[static_cast<size_t>(count_class(c))];
    }
    double gamma = (D[0] * static_cast<double>(nclass[0]) + D[1] * static_cast<double>(nclass[1]) +
                    D[2] * static_cast<double>(nclass[2])) /
                   static_cast<double>(total);
    double uniform = 1.0 / static_cast<double>(lm.vocab.size());
    for (const auto& [w, c] : lm.adjusted_counts[0]) {
      if (w == kBos) continue;
      lm.probs[0][w] =
          std::max(static_cast<double>(c) - D[static_cast<size_t>(count_class(c))], 0.0) / static_cast<double>(total) +
          gamma * uniform;
    }
    if (lm.probs[0].size() != lm.vocab.size())
      throw std::logic_error("train_kn_lm: unigram table does not cover the vocabulary");
  }

  for (int k = 2; k <= order; ++k) {
    const auto& D = lm.discounts[static_cast<size_t>(k - 1)];
    std::map<std::string, std::vector<std::pair<std::string, int64_t>>> by_ctx;
    for (const auto& [key, c] : lm.adjusted_counts[static_cast<size_t>(k - 1)]) {
      size_t sp = key.rfind(' ');
      by_ctx[key.substr(0, sp)].emplace_back(key.substr(sp + 1), c);
    }
    for (const auto& [ctx, entries] : by_ctx) {
      int64_t total = 0;
      std::array<int64_t, 3> nclass = {0, 0, 0};
      for (const auto& [w, c] : entries) {
        (void)w;
        total += c;
        ++nclass[static_cast<size_t>(count_class(c))];
      }
      double gamma = (D[0] * static_cast<double>(nclass[0]) + D[1] * static_cast<double>(nclass[1]) +
                      D[2] * static_cast<double>(nclass[2])) /
                     static_cast<double>(total);
      size_t sp = ctx.find(' ');
      std::string low_ctx = sp == std::string::npos ? std::string() : ctx.substr(sp + 1);
      for (const auto& [w, c] : entries) {
        std::string low_key = low_ctx.empty() ? w : low_ctx + " " + w;
        double p_low = lm.probs[static_cast<size_t>(k - 2)].at(low_key);
        lm.probs[static_cast<size_t>(k - 1)][ctx + " " + w] =
            std::max(static_cast<double>(c) - D[static_cast<size_t>(count_class(c))], 0.0) /
                static_cast<double>(total) +
            gamma * p_low;
      }
      lm.backoffs[static_cast<size_t>(k - 2)][ctx] = gamma;
    }
  }
  return lm;
}

void save_arpa(const std::string& path, const NGramLM& lm) {
  for (size_t len = 1; len + 1 <= static_cast<size_t>(lm.order); ++len) {
    for (const auto& [key, g] : lm.backoffs[len - 1]) {
      (void)g;
      if (!(len == 1 && key == kBos) && !lm.probs[len - 1].count(key))
        throw std::logic_error("save_arpa: backoff context '" + key + "' has no probability entry");
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_arpa: cannot open " + path);
  os << "\\data\\\n";
  for (int k = 1; k <= lm.order; ++k)
    os << "ngram " << k << "=" << lm.probs[static_cast<size_t>(k - 1)].size() + (k == 1 ? 1 : 0) << "\n";
  for (int k = 1; k <= lm.order; ++k) {
    os << "\n\\" << k << "-grams:\n";
    auto bow_of = [&](const std::string& key) -> const double* {
      if (k >= lm.order) return nullptr;
      const auto& bo = lm.backoffs[static_cast<size_t>(k - 1)];
      auto it = bo.find(key);
      return it == bo.end() ? nullptr : &it->second;
    };
    if (k == 1) {
      os << "-99\t" << kBos;
      if (const double* b = bow_of(kBos)) os << "\t" << format_double(std::log10(*b));
      os << "\n";
    }
    for (const auto& [key, p] : lm.probs[static_cast<size_t>(k - 1)]) {
      os << format_double(std::log10(p)) << "\t" << key;
      if (const double* b = bow_of(key)) os << "\t" << format_double(std::log10(*b));
      os << "\n";
    }
  }
  os << "\n\\end\\\n";
  if (!os) throw std::runtime_error("save_arpa: write failed for " + path);
}

NGramLM load_arpa(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_arpa: cannot open " + path);
  std::string line;
  auto next_line = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  while (next_line() && line.empty()) {
  }
  if (line != "\\data\\") throw std::runtime_error("load_arpa: missing \\data\\ header in " + path);
  std::vector<size_t> counts;
  while (next_line() && !line.empty()) {
    size_t eq = line.find('=');
    if (line.rfind("ngram ", 0) != 0 || eq == std::string::npos)
      throw std::runtime_error("load_arpa: bad count line '" + line + "'");
    int k = parse_int(line.substr(6, eq - 6));
    if (k != static_cast<int>(counts.size()) + 1)
      throw std::runtime_error("load_arpa: non-consecutive order " + std::to_string(k));
    counts.push_back(static_cast<size_t>(parse_int(line.substr(eq + 1))));
  }
  if (counts.empty()) throw std::runtime_error("load_arpa: no order counts in " + path);

  NGramLM lm;
  lm.order = static_cast<int>(counts.size());
  lm.probs.assign(counts.size(), {});
  lm.backoffs.assign(counts.size() - 1, {});
  for (int k = 1; k <= lm.order; ++k) {
    while (next_line() && line.empty()) {
    }
    std::string want = "\\" + std::to_string(k) + "-grams:";
    if (line != want) throw std::runtime_error("load_arpa: expected '" + want + "', got '" + line + "'");
    for (size_t seen = 0; seen < counts[static_cast<size_t>(k - 1)]; ++seen) {
      if (!next_line() || line.empty())
        throw std::runtime_error("load_arpa: truncated " + std::to_string(k) + "-gram section");
      size_t t1 = line.find('\t');
      if (t1 == std::string::npos) throw std::runtime_error("load_arpa: bad entry '" + line + "'");
      size_t t2 = line.find('\t', t1 + 1);
      std::string key = t2 == std::string::npos ? line.substr(t1 + 1) : line.substr(t1 + 1, t2 - t1 - 1);
      if (key.empty()) throw std::runtime_error("load_arpa: bad entry '" + line + "'");
      if (k == 1 && key == kBos) {
        // context-only marker; probability column is a placeholder
      } else {
        lm.probs[static_cast<size_t>(k - 1)][key] = std::pow(10.0, parse_double(line.substr(0, t1)));
      }
      if (t2 != std::string::npos) {
        if (k == lm.order) throw std::runtime_error("load_arpa: backoff weight on highest order");
        lm.backoffs[static_cast<size_t>(k - 1)][key] = std::pow(10.0, parse_double(line.substr(t2 + 1)));
      }
    }
  }
  while (next_line() && line.empty()) {
  }
  if (line != "\\end\\") throw std::runtime_error("load_arpa: missing \\end\\ in " + path);

  for (const auto& [w, p] : lm.probs[0]) {
    (void)p;
    lm.vocab.push_back(w);
  }
  return lm;
}

}  // namespace asrlab
