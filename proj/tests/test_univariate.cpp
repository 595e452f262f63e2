#include <doctest.h>

#include <stdexcept>

#include "ktraj/stats/tests.hpp"
#include "oracles.hpp"

using namespace ktraj::stats;

namespace {

using Groups = std::vector<std::vector<double>>;

const Groups kThree = {{1, 2, 3, 3, 5}, {2, 4, 6, 6, 7, 8}, {9, 9, 10, 1}};

}  // namespace

TEST_CASE("Kruskal-Wallis") {
  // Reference values from an independent statistics package.
  const auto r = kruskal_wallis(kThree);
  CHECK(r.statistic == doctest::Approx(4.421351351351359).epsilon(1e-12));
  CHECK(r.df == 2);
  CHECK(r.p == doctest::Approx(0.10962655149130064).epsilon(1e-10));

  const Groups same = {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  const auto s = kruskal_wallis(same);
  CHECK(s.statistic == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.p == doctest::Approx(1.0));

  const Groups constant = {{4, 4}, {4, 4, 4}};
  CHECK(kruskal_wallis(constant).p == 1.0);
  CHECK_THROWS(kruskal_wallis(Groups{{1, 2, 3}}));
}

TEST_CASE("one-way ANOVA") {
  const auto r = anova_oneway(kThree);
  CHECK(r.statistic == doctest::Approx(3.236919459141682).epsilon(1e-12));
  CHECK(r.df == 2);
  CHECK(r.df2 == 12);
  CHECK(r.p == doctest::Approx(0.07511809424931654).epsilon(1e-10));
  const Groups same = {{1, 5, 9}, {1, 5, 9}};
  CHECK(anova_oneway(same).p == doctest::Approx(1.0));
}

TEST_CASE("Pearson chi-square") {
  const auto r = chi_square({{10, 20, 30}, {15, 5, 25}});
  CHECK(r.statistic == doctest::Approx(8.484848484848484).epsilon(1e-12));
  CHECK(r.df == 2);
  CHECK(r.p == doctest::Approx(0.014372706649902672).epsilon(1e-10));
  // An empty column does not add a degree of freedom.
  const auto z = chi_square({{10, 0, 20, 30}, {15, 0, 5, 25}});
  CHECK(z.df == 2);
  CHECK(z.statistic == doctest::Approx(r.statistic));
  CHECK(min_expected_count({{10, 20, 30}, {15, 5, 25}}) == doctest::Approx(75.0 / 7));
}

TEST_CASE("Fisher exact test equals full enumeration") {
  const auto r = fisher_exact({{3, 1}, {1, 3}});
  CHECK(r.p == doctest::Approx(oracle::fisher_two_sided(3, 1, 1, 3)).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(34.0 / 70).epsilon(1e-12));

  CHECK(fisher_exact({{0, 0}, {4, 6}}).p == 1.0);
  CHECK(fisher_exact({{3, 0}, {5, 0}}).p == 1.0);

  int checked = 0;
  for (int n = 1; n <= 40; ++n) {
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; a + b <= n; ++b) {
        for (int c = 0; a + b + c <= n; c += 3) {
          const int d = n - a - b - c;
          const double got = fisher_exact({{double(a), double(b)}, {double(c), double(d)}}).p;
          REQUIRE(got == doctest::Approx(oracle::fisher_two_sided(a, b, c, d)).epsilon(1e-9));
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 10000);
  CHECK_THROWS_AS(fisher_exact({{1, 2, 3}, {4, 5, 6}}), std::invalid_argument);
}

TEST_CASE("Bonferroni") {
  const std::vector<double> p = {0.01, 0.04};
  const auto adj = bonferroni(p, 2);
  CHECK(adj[0] == doctest::Approx(0.02));
  CHECK(adj[1] == doctest::Approx(0.08));
  CHECK(bonferroni(std::vector<double>{0.9}, 3)[0] == 1.0);
  CHECK(bonferroni(std::vector<double>{0.3}, 1)[0] == 0.3);
  CHECK_THROWS_AS(bonferroni(std::vector<double>{1.2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(bonferroni(std::vector<double>{0.1, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("descriptive helpers") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  CHECK(stddev(v) == doctest::Approx(1.2909944487358056));
  CHECK(quantile(v, 0.25) == 1.75);
  CHECK(quantile(v, 0.5) == 2.5);
  CHECK(quantile({7}, 0.75) == 7);
}
