// Shared lazily-trained fixtures so the unit suites pay each training cost
// once per binary.
#pragma once

#include <random>

#include "collider/synth.hpp"
#include "collider/toy_models.hpp"

namespace fixtures {

inline const collider::synth::Generator& gen() {
  static collider::synth::Generator g{collider::synth::Config{}};
  return g;
}

inline const std::vector<collider::LabeledPair>& train_pairs() {
  static std::vector<collider::LabeledPair> pairs = [] {
    std::mt19937_64 rng(101);
    return gen().pairs(3000, rng);
  }();
  return pairs;
}

inline const collider::TransformerScorer& concat_scorer() {
  static collider::TransformerScorer s = collider::train_toy_similarity(
      gen().vocab(), train_pairs(), collider::SimilarityScorer::Kind::Concat,
      /*h=*/32, /*epochs=*/25, /*seed=*/11);
  return s;
}

inline const collider::TransformerScorer& dual_scorer() {
  static collider::TransformerScorer s = collider::train_toy_similarity(
      gen().vocab(), train_pairs(),
      collider::SimilarityScorer::Kind::DualEncoder,
      /*h=*/32, /*epochs=*/25, /*seed=*/13);
  return s;
}

inline const collider::BigramLM& lm() {
  static collider::BigramLM m = [] {
    std::mt19937_64 rng(77);
    return collider::train_toy_lm(gen().vocab(), gen().lm_corpus(1500, rng),
                                  /*h=*/24, /*epochs=*/8, /*seed=*/5);
  }();
  return m;
}

inline const collider::BigramLM& eval_lm() {
  static collider::BigramLM m = [] {
    std::mt19937_64 rng(78);
    return collider::train_toy_lm(gen().vocab(), gen().lm_corpus(1500, rng),
                                  /*h=*/24, /*epochs=*/8, /*seed=*/6);
  }();
  return m;
}

}  // namespace fixtures
