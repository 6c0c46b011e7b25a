#pragma once

#include "alasca/dataset.hpp"

namespace alasca {

// L unit-variance Gaussian clusters whose means sit on a centered regular
// simplex with pairwise distance `separation`. Labels balanced within +-1.
// separation == 0 collapses all means to the origin (chance-level task).
NoisyDataset make_gaussian_dataset(std::size_t n, std::size_t dim, std::size_t classes,
                                   double separation, std::uint64_t seed);

// Each instance flips with probability epsilon; the flipped label is drawn
// uniformly from the other L-1 classes (or from all L when allow_self_flip).
NoisyDataset inject_symmetric(const NoisyDataset& ds, double epsilon, std::uint64_t seed,
                              bool allow_self_flip = false);

// Instances of mapped classes flip to mapping(class) with probability epsilon.
NoisyDataset inject_asymmetric(const NoisyDataset& ds, double epsilon,
                               const std::map<int, int>& mapping, std::uint64_t seed);

// 9->1, 2->0, 4->7, 3->5 (truck/bird/deer/cat style pairs).
std::map<int, int> cifar10_style_mapping();

// Each class maps to the next one inside its super-class of `group_size`
// consecutive classes, wrapping within the group.
std::map<int, int> cyclic_superclass_mapping(std::size_t classes, std::size_t group_size);

// Per-instance flip rate rho_i ~ TruncNormal(epsilon, 0.1^2, [0,1]); class
// scores x_i^T W with W ~ N(0,1)^{D x L}; a flipping instance draws its new
// label from the softmax of its non-true-class scores.
NoisyDataset inject_instance_dependent(const NoisyDataset& ds, double epsilon,
                                       std::uint64_t seed);

// Rejection sampler for N(mu, sigma^2) truncated to [lo, hi].
double truncated_normal_sample(Rng& rng, double mu, double sigma, double lo, double hi);

}  // namespace alasca
