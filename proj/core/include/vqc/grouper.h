#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vqc/corpus.h"

namespace vqc {

struct SamplingSpec {
  std::size_t n_pairs = 0;
  std::size_t n_triples = 0;
  std::size_t n_quads = 0;
  std::uint64_t seed = 0;

  std::size_t count_for(std::size_t group_size) const;
};

struct GroupSet {
  std::vector<ImageGroup> groups;
  SamplingSpec spec;

  std::size_t count_of_size(std::size_t group_size) const;
};

// C(n, k), saturating at UINT64_MAX.
std::uint64_t combinations_available(std::size_t n, std::size_t k);

// Uniform sampling of distinct unordered member sets per size. Member order
// within a group is the order the members were drawn in. Streams for each
// size are derived from spec.seed, so the output is a pure function of
// (images, spec). Groups are emitted pairs first, then triples, then quads.
//
// Engine: std::mt19937_64 with vqc::Rng's rejection-based bounded draws.
GroupSet sample_groups(const std::vector<ImageRef>& images, const SamplingSpec& spec);
GroupSet sample_groups(const std::vector<std::string>& image_ids, const SamplingSpec& spec);

}  // namespace vqc
