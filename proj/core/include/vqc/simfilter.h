#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "vqc/corpus.h"
#include "vqc/embedding.h"
#include "vqc/grouper.h"

namespace vqc {

struct FilterReport {
  GroupSet kept;
  GroupSet removed;
  double tau = 1.0;
  // group size -> kept / (kept + removed) among groups of that size
  std::map<std::size_t, double> retention_by_size;
  // Max pairwise similarity of each input group, in input order.
  std::vector<double> max_similarity;
};

// Max cosine similarity over all unordered member pairs. `texts` holds one
// description per member, in member order.
double max_pair_similarity(const std::vector<std::string>& texts, EmbeddingProvider& provider);

// Looks member descriptions up in the corpus; a missing one raises
// Error(kNotFound) naming the image id.
double max_pair_similarity(const ImageGroup& group, const Corpus& descs,
                           EmbeddingProvider& provider);

// Max pair similarity of every group, embedding each distinct description
// once. Provider failures are rethrown with the affected group range.
std::vector<double> group_similarities(const std::vector<ImageGroup>& groups, const Corpus& descs,
                                       EmbeddingProvider& provider);

// A group is removed iff its max pair similarity exceeds tau.
FilterReport filter_groups(const GroupSet& groups, const Corpus& descs,
                           EmbeddingProvider& provider, double tau);

// Same rule on precomputed scores (one per group).
FilterReport filter_by_similarity(const GroupSet& groups, const std::vector<double>& similarities,
                                  double tau);

// Threshold whose keep rule (similarity <= tau) retains the fraction of
// `similarities` closest to target_retention. When the cut falls between
// two distinct values, tau is their midpoint; target 1.0 gives the maximum.
double calibrate_from_similarities(std::vector<double> similarities, double target_retention);

double calibrate_threshold(const GroupSet& pair_groups, const Corpus& descs,
                           EmbeddingProvider& provider, double target_retention);

}  // namespace vqc
