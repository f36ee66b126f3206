// Randomized property suites shared by the unit tests and the acceptance
// checks. Every suite is deterministic for a given seed.
#pragma once

#include "npa/algebra.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace npa::props {

struct Outcome {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string firstFailure;

  bool ok() const { return cases > 0 && failures == 0; }
  void fail(const std::string &what);
  void merge(const Outcome &other);
  std::string summary() const;
};

using Rng = std::mt19937_64;
using ElementGen = std::function<Element(Rng &)>;

/// A domain under test with a generator of valid elements and the
/// conditions its cond operator understands.
struct DomainFixture {
  std::string label;
  std::shared_ptr<OmegaPma> dom;
  ElementGen element;
  std::vector<std::string> conditions;
  std::vector<std::string> actions;
};

/// reals, pair, bayes over b1/b2, expinv over x/y, moment:2.
std::vector<DomainFixture> standardFixtures();

/// Semiring, choice, subtraction and monotonicity laws of one domain.
Outcome checkAlgebraLaws(const DomainFixture &fx, std::size_t cases, std::uint64_t seed);

/// f(ν) ⊕ Df|ν(Δ) ⊑ f(ν ⊕ Δ) for random μ-free systems of two procedures.
Outcome checkUnderApproximation(const DomainFixture &fx, std::size_t cases, std::uint64_t seed);

/// Normalization plus the strategy agree with direct iteration of every μ
/// binder on random closed linear expressions.
Outcome checkNormalization(const DomainFixture &fx, std::size_t cases, std::uint64_t seed);

/// The elimination result of a random control-flow hyper-graph with at most
/// six nodes agrees with Kleene iteration of its node equations.
Outcome checkElimination(const DomainFixture &fx, std::size_t cases, std::uint64_t seed);

/// The simplex solver agrees with vertex enumeration on random bounded
/// programs with at most four variables.
Outcome checkSimplex(std::size_t cases, std::uint64_t seed);

} // namespace npa::props
