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

#ifndef FEDSIM_CORPUS_HPP_
#define FEDSIM_CORPUS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

// Token ids 0..2 are reserved; everything else is frequency-ranked corpus
// vocabulary.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kOov = 2;

  std::vector<std::string> tokens;  // by id; [0..2] are "<pad>", "<eos>", "<oov>"
  std::unordered_map<std::string, int> to_id;

  int size() const { return static_cast<int>(tokens.size()); }
  int id_of(const std::string& tok) const {
    auto it = to_id.find(tok);
    return it == to_id.end() ? kOov : it->second;
  }
};

enum class TokenizerKind { kWhitespace, kChar };

// Whitespace: split on blanks. Char: every non-blank character is a token.
std::vector<std::string> tokenize(const std::string& line, TokenizerKind kind);

// Raw text per client, client ids in sorted order.
using RawCorpus = std::map<std::string, std::vector<std::string>>;

struct SynthConfig {
  Index n_clients = 100;
  Index sentences_per_client = 30;
  Index vocab_types = 120;    // distinct word types in the generator
  double alpha = 0.3;         // heterogeneity: 0 = iid, 1 = fully client-specific
  Index min_len = 3;
  Index max_len = 18;
  double zipf_s = 1.2;        // rank-frequency exponent
};

// Seeded synthetic federated corpus: a shared first-order chain over pseudo
// word types, mixed per token with a client-specific unigram distribution
// with probability alpha.
RawCorpus generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

// One example per line, `client_id<TAB>text`. Lines for the same client
// append in file order.
RawCorpus load_partitioned(const std::string& path);

Vocab build_vocab(const RawCorpus& corpus, Index v, TokenizerKind kind);

// Tokens to ids (unknown -> OOV), EOS appended, truncated to max_seq_len
// (dropping EOS if truncation hits it), padded with PAD to max_seq_len.
std::vector<int> encode(const std::string& line, const Vocab& vocab, Index max_seq_len,
                        TokenizerKind kind);

// In-vocab tokens back from ids; stops at EOS/PAD, OOV renders as "<oov>".
std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab);

// Encoded sequences per client. Construction drops sequences with fewer than
// two non-pad positions (nothing to predict) and clients left empty by that.
struct FederatedDataset {
  std::map<std::string, std::vector<std::vector<int>>> clients;

  std::vector<std::string> client_ids() const {
    std::vector<std::string> ids;
    ids.reserve(clients.size());
    for (const auto& [id, seqs] : clients) ids.push_back(id);
    return ids;
  }
  Index total_sequences() const {
    Index n = 0;
    for (const auto& [id, seqs] : clients) n += static_cast<Index>(seqs.size());
    return n;
  }
};

FederatedDataset encode_corpus(const RawCorpus& corpus, const Vocab& vocab, Index max_seq_len,
                               TokenizerKind kind);

// Holds out every 10th client (sorted order) for evaluation. Small
// populations keep at least one client on each side when possible.
struct DatasetSplit {
  FederatedDataset train;
  FederatedDataset eval;
};
DatasetSplit split_holdout(const FederatedDataset& ds);

}  // namespace fedsim

#endif  // FEDSIM_CORPUS_HPP_
