// Synthetic topical language: a vocabulary of function words plus per-topic
// content words, sentence/pair/corpus samplers, and corpus-derived frequency
// ranks. Two sentences are "related" when they draw from the same topic pool.
#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "collider/core.hpp"
#include "collider/toy_models.hpp"

namespace collider::synth {

struct Config {
  int topics = 10;
  int words_per_topic = 12;
  int filler_count = 30;
  int sentence_min = 5;
  int sentence_max = 9;
  double filler_prob = 0.35;
  std::uint64_t seed = 7;
};

class Generator {
 public:
  explicit Generator(Config cfg) : cfg_(cfg) {
    static const std::array<const char*, 30> kFillers = {
        "the", "of",  "and",  "a",    "to",   "in",   "is",  "it",
        "that", "for", "on",  "with", "as",   "at",   "by",  "from",
        "this", "was", "are", "be",   "or",   "an",   "but", "not",
        "they", "his", "her", "its",  "we",   "you"};
    if (cfg_.filler_count < 1 ||
        cfg_.filler_count > static_cast<int>(kFillers.size()))
      throw std::invalid_argument("filler_count out of range");
    if (cfg_.topics < 2 || cfg_.words_per_topic < 2)
      throw std::invalid_argument("need >= 2 topics and >= 2 words each");

    std::vector<std::string> tokens = {"<s>", "<pad>"};
    for (int f = 0; f < cfg_.filler_count; ++f) {
      filler_ids_.push_back(static_cast<int>(tokens.size()));
      tokens.emplace_back(kFillers[static_cast<std::size_t>(f)]);
    }
    topic_words_.resize(cfg_.topics);
    for (int i = 0; i < cfg_.topics; ++i) {
      for (int j = 0; j < cfg_.words_per_topic; ++j) {
        topic_words_[i].push_back(static_cast<int>(tokens.size()));
        tokens.push_back("t" + std::to_string(i) + "w" + std::to_string(j));
      }
    }
    vocab_ = Vocabulary::from_tokens(std::move(tokens), /*start=*/0,
                                     /*pad=*/1);

    // frequency ranks from a fixed sample of the sentence distribution
    std::mt19937_64 rng(cfg_.seed ^ 0x5bd1e995u);
    std::vector<long long> counts(vocab_.size(), 0);
    for (int s = 0; s < 2000; ++s) {
      for (int id : sentence(topic_of(s), rng).ids) ++counts[id];
    }
    std::vector<int> ids(vocab_.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      return counts[a] != counts[b] ? counts[a] > counts[b] : a < b;
    });
    std::vector<int> ranks(vocab_.size());
    for (int r = 0; r < vocab_.size(); ++r) ranks[ids[r]] = r + 1;
    vocab_.set_frequency_ranks(std::move(ranks));
  }

  const Config& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  int topics() const { return cfg_.topics; }
  const std::vector<int>& filler_ids() const { return filler_ids_; }
  const std::vector<int>& topic_words(int topic) const {
    return topic_words_.at(static_cast<std::size_t>(topic));
  }

  /// Function words plus the special tokens; the stopword list handed to the
  /// unrelatedness filter.
  std::vector<int> stopword_ids() const {
    std::vector<int> out = filler_ids_;
    out.push_back(vocab_.start_id());
    out.push_back(vocab_.pad_id());
    return out;
  }

  TokenSequence sentence(int topic, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> len(cfg_.sentence_min,
                                           cfg_.sentence_max);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    TokenSequence out;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      if (coin(rng) < cfg_.filler_prob)
        out.ids.push_back(zipf_pick(filler_ids_, rng));
      else
        out.ids.push_back(zipf_pick(topic_words_[topic], rng));
    }
    return out;
  }

  /// Compact query: 2-4 topic words, no fillers.
  TokenSequence query(int topic, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> len(2, 4);
    TokenSequence out;
    const int n = len(rng);
    for (int i = 0; i < n; ++i)
      out.ids.push_back(zipf_pick(topic_words_[topic], rng));
    return out;
  }

  std::vector<LabeledPair> pairs(int count, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> topic(0, cfg_.topics - 1);
    std::vector<LabeledPair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      LabeledPair p;
      int ta = topic(rng);
      if (i % 2 == 0) {
        p.label = 1;
        p.a = sentence(ta, rng);
        p.b = sentence(ta, rng);
      } else {
        p.label = 0;
        int tb = topic(rng);
        while (tb == ta) tb = topic(rng);
        p.a = sentence(ta, rng);
        p.b = sentence(tb, rng);
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<TokenSequence> lm_corpus(int count, std::mt19937_64& rng) const {
    std::vector<TokenSequence> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
      out.push_back(sentence(topic_of(i), rng));
    return out;
  }

 private:
  int topic_of(int i) const { return i % cfg_.topics; }

  // Zipf-ish pick: weight 1/(k+1) over the pool order.
  int zipf_pick(const std::vector<int>& pool, std::mt19937_64& rng) const {
    double total = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k)
      total += 1.0 / static_cast<double>(k + 1);
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    for (std::size_t k = 0; k < pool.size(); ++k) {
      r -= 1.0 / static_cast<double>(k + 1);
      if (r <= 0.0) return pool[k];
    }
    return pool.back();
  }

  Config cfg_;
  Vocabulary vocab_;
  std::vector<int> filler_ids_;
  std::vector<std::vector<int>> topic_words_;
};

}  // namespace collider::synth
