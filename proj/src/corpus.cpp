// Copyright 2026 The fedsim Authors. All Rights Reserved.
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

#include "fedsim/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fedsim/rng.hpp"

namespace fedsim {

std::vector<std::string> tokenize(const std::string& line, TokenizerKind kind) {
  std::vector<std::string> out;
  if (kind == TokenizerKind::kWhitespace) {
    std::string cur;
    for (char c : line) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
  } else {
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
  }
  return out;
}

namespace {

const char* kSyllables[20] = {"ka", "ro", "mi", "ta", "su", "ne", "lo", "vi", "pe", "da",
                              "ru", "mo", "sa", "ki", "te", "no", "ba", "li", "go", "fu"};

std::string type_name(Index i) {
  std::string s = kSyllables[i % 20];
  s += kSyllables[(i / 20) % 20];
  if (i >= 400) s += kSyllables[(i / 400) % 20];
  return s;
}

// Cumulative Zipf(s) distribution over ranks 0..n-1.
std::vector<double> zipf_cdf(Index n, double s) {
  std::vector<double> cdf(n);
  double total = 0;
  for (Index r = 0; r < n; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), s);
    cdf[r] = total;
  }
  for (double& c : cdf) c /= total;
  return cdf;
}

Index sample_rank(const std::vector<double>& cdf, RngStream& rng) {
  const double u = rng.next_double();
  return static_cast<Index>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

std::vector<Index> keyed_permutation(Index n, std::uint64_t seed, std::uint64_t tag,
                                     std::uint64_t which) {
  std::vector<Index> perm(n);
  for (Index i = 0; i < n; ++i) perm[i] = i;
  RngStream rng = RngStream::keyed({seed, tag, which});
  for (Index i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.next_below(static_cast<std::uint64_t>(i + 1))]);
  return perm;
}

}  // namespace

RawCorpus generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_clients < 1) throw Error("generate_synthetic: n_clients must be >= 1");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw Error("generate_synthetic: alpha must be in [0,1]");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    throw Error("generate_synthetic: bad sentence length range");

  const Index v = cfg.vocab_types;
  const std::vector<double> cdf = zipf_cdf(v, cfg.zipf_s);
  const std::vector<Index> init_perm = keyed_permutation(v, seed, fnv1a64("init"), 0);
  std::unordered_map<Index, std::vector<Index>> chain;  // per-state successor permutation
  auto successors = [&](Index state) -> const std::vector<Index>& {
    auto it = chain.find(state);
    if (it == chain.end())
      it = chain.emplace(state, keyed_permutation(v, seed, fnv1a64("chain"),
                                                  static_cast<std::uint64_t>(state))).first;
    return it->second;
  };

  RawCorpus corpus;
  for (Index c = 0; c < cfg.n_clients; ++c) {
    const std::vector<Index> client_perm =
        keyed_permutation(v, seed, fnv1a64("client"), static_cast<std::uint64_t>(c));
    RngStream rng = RngStream::keyed({seed, fnv1a64("text"), static_cast<std::uint64_t>(c)});
    char id[32];
    std::snprintf(id, sizeof id, "client_%05lld", static_cast<long long>(c));
    std::vector<std::string>& lines = corpus[id];
    lines.reserve(cfg.sentences_per_client);
    for (Index s = 0; s < cfg.sentences_per_client; ++s) {
      const Index len =
          cfg.min_len + static_cast<Index>(rng.next_below(
                            static_cast<std::uint64_t>(cfg.max_len - cfg.min_len + 1)));
      std::string line;
      Index prev = -1;
      for (Index t = 0; t < len; ++t) {
        Index tok;
        if (prev >= 0 && rng.next_double() < cfg.alpha) {
          tok = client_perm[sample_rank(cdf, rng)];
        } else if (prev >= 0) {
          tok = successors(prev)[sample_rank(cdf, rng)];
        } else {
          tok = init_perm[sample_rank(cdf, rng)];
        }
        if (t) line += ' ';
        line += type_name(tok);
        prev = tok;
      }
      lines.push_back(std::move(line));
    }
  }
  return corpus;
}

RawCorpus load_partitioned(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_partitioned: cannot open '" + path + "'");
  RawCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("load_partitioned: line " + std::to_string(line_no) +
                  ": missing tab separator");
    if (tab == 0)
      throw Error("load_partitioned: line " + std::to_string(line_no) + ": empty client id");
    corpus[line.substr(0, tab)].push_back(line.substr(tab + 1));
  }
  if (corpus.empty()) throw Error("load_partitioned: '" + path + "' holds no examples");
  return corpus;
}

Vocab build_vocab(const RawCorpus& corpus, Index v, TokenizerKind kind) {
  if (v <= 3) throw Error("build_vocab: vocabulary size must exceed the 3 reserved ids");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& [client, lines] : corpus)
    for (const std::string& line : lines)
      for (std::string& tok : tokenize(line, kind)) ++counts[tok];
  if (counts.empty()) throw Error("build_vocab: corpus has no tokens");

  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // ties break lexicographically
  });

  Vocab vocab;
  vocab.tokens = {"<pad>", "<eos>", "<oov>"};
  const Index keep = std::min<Index>(v - 3, static_cast<Index>(ranked.size()));
  for (Index i = 0; i < keep; ++i) vocab.tokens.push_back(ranked[i].first);
  for (int i = 0; i < vocab.size(); ++i) vocab.to_id[vocab.tokens[i]] = i;
  return vocab;
}

std::vector<int> encode(const std::string& line, const Vocab& vocab, Index max_seq_len,
                        TokenizerKind kind) {
  if (max_seq_len < 2) throw Error("encode: max_seq_len must be >= 2");
  std::vector<int> ids;
  ids.reserve(max_seq_len);
  for (const std::string& tok : tokenize(line, kind)) {
    if (static_cast<Index>(ids.size()) >= max_seq_len) break;
    ids.push_back(vocab.id_of(tok));
  }
  if (static_cast<Index>(ids.size()) < max_seq_len) ids.push_back(Vocab::kEos);
  ids.resize(max_seq_len, Vocab::kPad);
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id == Vocab::kEos || id == Vocab::kPad) break;
    out.push_back(id >= 0 && id < vocab.size() ? vocab.tokens[id] : "<oov>");
  }
  return out;
}

FederatedDataset encode_corpus(const RawCorpus& corpus, const Vocab& vocab, Index max_seq_len,
                               TokenizerKind kind) {
  FederatedDataset ds;
  for (const auto& [client, lines] : corpus) {
    std::vector<std::vector<int>> seqs;
    for (const std::string& line : lines) {
      std::vector<int> ids = encode(line, vocab, max_seq_len, kind);
      Index non_pad = 0;
      for (int id : ids) non_pad += id != Vocab::kPad;
      if (non_pad >= 2) seqs.push_back(std::move(ids));
    }
    if (!seqs.empty()) ds.clients[client] = std::move(seqs);
  }
  if (ds.clients.empty()) throw Error("encode_corpus: no usable sequences");
  return ds;
}

DatasetSplit split_holdout(const FederatedDataset& ds) {
  DatasetSplit split;
  const Index n = static_cast<Index>(ds.clients.size());
  Index i = 0;
  for (const auto& [id, seqs] : ds.clients) {
    const bool held_out = (n >= 10) ? (i % 10 == 9) : (n >= 2 && i == n - 1);
    (held_out ? split.eval : split.train).clients[id] = seqs;
    ++i;
  }
  // A lone client serves both roles.
  if (split.eval.clients.empty()) split.eval = split.train;
  return split;
}

}  // namespace fedsim
