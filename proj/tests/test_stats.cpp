#include <algorithm>
#include <cfloat>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "dscpmd/error.hpp"
#include "dscpmd/stats.hpp"
#include "test_util.hpp"

using namespace dscpmd;

namespace {

using OptRows = std::vector<std::vector<std::optional<double>>>;

// Column-major helper: build subject rows from per-feature columns.
OptRows rows_from_columns(
    const std::vector<std::vector<std::optional<double>>>& cols) {
  OptRows rows;
  if (cols.empty()) return rows;
  const std::size_t n = cols[0].size();
  rows.assign(n, std::vector<std::optional<double>>(cols.size()));
  for (std::size_t f = 0; f < cols.size(); ++f) {
    REQUIRE(cols[f].size() == n);
    for (std::size_t s = 0; s < n; ++s) rows[s][f] = cols[f][s];
  }
  return rows;
}

// The normal-approximation two-sided p with continuity correction, for
// comparing against the exact enumeration on tie-free data.
double normal_rank_sum_p(int n1, int n2, double w) {
  const int big_n = n1 + n2;
  const double mean = n1 * (big_n + 1) / 2.0;
  if (w == mean) return 1.0;
  const double var = static_cast<double>(n1) * n2 * (big_n + 1) / 12.0;
  const double shifted = w > mean ? w - 0.5 : w + 0.5;
  const double z = (shifted - mean) / std::sqrt(var);
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

}  // namespace

TEST_CASE("wilcoxon rank-sum exact hand case") {
  const RankSumResult r = wilcoxon_rank_sum({1.0, 2.0}, {3.0, 4.0});
  CHECK(r.w == 3.0);
  CHECK(r.exact);
  CHECK(r.p == 0.33333333333333331);

  SUBCASE("swapping the samples keeps the p-value") {
    const RankSumResult s = wilcoxon_rank_sum({3.0, 4.0}, {1.0, 2.0});
    CHECK(s.w == 7.0);
    CHECK(s.exact);
    CHECK(s.p == r.p);
  }
}

TEST_CASE("wilcoxon rank-sum path selection") {
  SUBCASE("ties force the normal approximation") {
    const RankSumResult r = wilcoxon_rank_sum({1.0, 2.0, 2.0}, {2.0, 3.0, 4.0});
    CHECK_FALSE(r.exact);
    CHECK(r.p > 0.0);
    CHECK(r.p <= 1.0);
  }
  SUBCASE("samples beyond 12 use the normal approximation") {
    std::vector<double> a(13), b(5);
    std::iota(a.begin(), a.end(), 0.0);
    std::iota(b.begin(), b.end(), 100.0);
    CHECK_FALSE(wilcoxon_rank_sum(a, b).exact);
  }
  SUBCASE("identical tied samples give p == 1") {
    const RankSumResult r =
        wilcoxon_rank_sum({5.0, 5.0, 5.0}, {5.0, 5.0, 5.0});
    CHECK(r.p == 1.0);
  }
  SUBCASE("empty samples are rejected") {
    CHECK_THROWS_AS(wilcoxon_rank_sum({}, {1.0}), validation_error);
    CHECK_THROWS_AS(wilcoxon_rank_sum({1.0}, {}), validation_error);
  }
}

TEST_CASE("wilcoxon exact and normal paths agree within 0.02 at n=12") {
  std::mt19937_64 rng(4242);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(12), b(12);
    for (auto& x : a) x = std::uniform_real_distribution<>(0, 1)(rng);
    for (auto& x : b) x = std::uniform_real_distribution<>(0.05, 1.05)(rng);
    const RankSumResult r = wilcoxon_rank_sum(a, b);
    REQUIRE(r.exact);  // tie-free continuous draws
    const double p_norm = normal_rank_sum_p(12, 12, r.w);
    CAPTURE(rep);
    CAPTURE(r.w);
    CHECK(std::abs(r.p - p_norm) <= 0.02);
  }
}

TEST_CASE("wilcoxon exact p matches a Monte Carlo permutation estimate") {
  std::mt19937_64 rng(31337);
  std::vector<double> a(10), b(10);
  for (auto& x : a) x = std::uniform_real_distribution<>(0, 1)(rng);
  for (auto& x : b) x = std::uniform_real_distribution<>(0.3, 1.3)(rng);
  const RankSumResult r = wilcoxon_rank_sum(a, b);
  REQUIRE(r.exact);

  // Permute group labels over the fixed ranks 1..20 and recompute the
  // rank-sum of the first ten slots.
  std::vector<double> ranks(20);
  std::iota(ranks.begin(), ranks.end(), 1.0);
  int le = 0, ge = 0;
  const int reps = 20000;
  for (int rep = 0; rep < reps; ++rep) {
    std::shuffle(ranks.begin(), ranks.end(), rng);
    const double w = std::accumulate(ranks.begin(), ranks.begin() + 10, 0.0);
    if (w <= r.w) ++le;
    if (w >= r.w) ++ge;
  }
  const double p_mc =
      std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(reps));
  CHECK(std::abs(p_mc - r.p) <= 0.02);
}

TEST_CASE("cohens_d") {
  CHECK(cohens_d({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}) == -3.0);
  CHECK(cohens_d({4.0, 5.0, 6.0}, {1.0, 2.0, 3.0}) == 3.0);
  CHECK(cohens_d({2.0, 2.0}, {2.0, 2.0}) == 0.0);
  CHECK(cohens_d({3.0, 3.0}, {1.0, 1.0}) ==
        std::numeric_limits<double>::infinity());
  CHECK(cohens_d({1.0, 1.0}, {3.0, 3.0}) ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(cohens_d({}, {1.0}), validation_error);
}

TEST_CASE("bonferroni") {
  CHECK(bonferroni(0.0004, 113) == 0.045200000000000004);
  CHECK(bonferroni(0.02, 113) == 1.0);
  CHECK(bonferroni(0.0, 5) == 0.0);
  CHECK(bonferroni(1.0, 1) == 1.0);
}

TEST_CASE("screen_features") {
  const std::vector<std::string> names = {"fa", "fb", "fc", "fd", "fe"};
  // Five subjects per group; columns: fa strong A>B, fb weak, fc mostly
  // missing in A (skipped), fd and fe identical strong B>A (an |d| tie).
  const OptRows ga = rows_from_columns({
      {10.0, 11.0, 12.0, 13.0, 14.0},                                  // fa
      {1.0, 2.0, 3.0, 4.0, 5.0},                                       // fb
      {1.0, std::nullopt, std::nullopt, std::nullopt, std::nullopt},   // fc
      {1.0, 2.0, 3.0, 4.0, 5.0},                                       // fd
      {1.0, 2.0, 3.0, 4.0, 5.0},                                       // fe
  });
  const OptRows gb = rows_from_columns({
      {0.0, 1.0, 2.0, 3.0, 4.0},
      {1.1, 2.2, 2.9, 4.2, 4.8},
      {1.0, 2.0, 3.0, 4.0, 5.0},
      {6.0, 7.0, 8.0, 9.0, 10.0},
      {6.0, 7.0, 8.0, 9.0, 10.0},
  });

  const ScreenResult res = screen_features(names, ga, gb);

  SUBCASE("skips, multiplicity, and ordering") {
    REQUIRE(res.skipped.size() == 1);
    CHECK(res.skipped[0] == "fc");
    CHECK(res.n_tests == 4);
    REQUIRE(res.rows.size() == 4);
    CHECK(res.rows[0].feature == "fa");
    CHECK(res.rows[1].feature == "fd");  // |d| tie with fe -> name order
    CHECK(res.rows[2].feature == "fe");
    CHECK(res.rows[3].feature == "fb");
    CHECK(std::abs(res.rows[1].d) == std::abs(res.rows[2].d));
  }

  SUBCASE("row contents") {
    const ScreenRow& fa = res.rows[0];
    CHECK(fa.n_a == 5);
    CHECK(fa.n_b == 5);
    CHECK(fa.mean_a == 12.0);
    CHECK(fa.mean_b == 2.0);
    CHECK(fa.exact);
    // Perfect separation of 5 vs 5: p = 2 / C(10,5).
    CHECK(fa.p == doctest::Approx(2.0 / 252.0).epsilon(1e-12));
    CHECK(fa.p_adjusted == doctest::Approx(4.0 * 2.0 / 252.0).epsilon(1e-12));
    CHECK(fa.d > 0.3);
    CHECK(fa.significant);

    const ScreenRow& fd = res.rows[1];
    CHECK(fd.d < -0.3);
    CHECK(fd.significant);

    const ScreenRow& fb = res.rows[3];
    CHECK_FALSE(fb.significant);
  }

  SUBCASE("an explicit multiplicity overrides the screened count") {
    const ScreenResult wide = screen_features(names, ga, gb, 100);
    CHECK(wide.n_tests == 100);
    for (const auto& row : wide.rows) {
      CHECK(row.p_adjusted == std::min(1.0, 100.0 * row.p));
      CHECK_FALSE(row.significant);  // 100 * (2/252) > 0.05
    }
  }

  SUBCASE("row width mismatch is rejected") {
    OptRows bad = ga;
    bad[0].pop_back();
    CHECK_THROWS_AS(screen_features(names, bad, gb), validation_error);
  }
}

TEST_CASE("screen output files") {
  testutil::TempDir dir("stats");
  const std::vector<std::string> names = {"fa", "fz"};
  // fz has zero pooled SD with distinct means: d is +infinity.
  const OptRows ga = rows_from_columns({
      {10.0, 11.0, 12.0, 13.0, 14.0},
      {5.0, 5.0, 5.0, 5.0, 5.0},
  });
  const OptRows gb = rows_from_columns({
      {0.0, 1.0, 2.0, 3.0, 4.0},
      {1.0, 1.0, 1.0, 1.0, 1.0},
  });
  const ScreenResult res = screen_features(names, ga, gb);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].feature == "fz");  // |inf| ranks first
  CHECK(std::isinf(res.rows[0].d));

  SUBCASE("csv") {
    const std::string path = dir.file("screen.csv");
    save_screen_csv(res, path);
    const std::string text = testutil::read_text(path);
    CHECK(text.rfind("feature,n_a,n_b,mean_a,mean_b,p,p_adjusted,d,exact,"
                     "significant\n",
                     0) == 0);
    CHECK(text.find("\nfz,5,5,5,1,") != std::string::npos);
    CHECK(text.find(",inf,") != std::string::npos);
  }

  SUBCASE("json clamps infinite effect sizes") {
    const std::string path = dir.file("screen.json");
    save_screen_json(res, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j["n_tests"] == 2);
    CHECK(j["skipped"].empty());
    REQUIRE(j["rows"].size() == 2);
    CHECK(j["rows"][0]["feature"] == "fz");
    CHECK(j["rows"][0]["d"].get<double>() == DBL_MAX);
    CHECK(j["rows"][1]["feature"] == "fa");
    CHECK(j["rows"][1]["exact"] == true);
  }

  SUBCASE("boxplot data lists group samples for the top rows") {
    const std::string path = dir.file("box.dat");
    save_boxplot_data(res, names, ga, gb, 1, path);
    const std::string text = testutil::read_text(path);
    // Top feature fz: five group-1 and five group-2 lines, no fa lines.
    CHECK(text.find("1 1 5 fz\n") != std::string::npos);
    CHECK(text.find("1 2 1 fz\n") != std::string::npos);
    CHECK(text.find("fa") == std::string::npos);
    std::size_t lines = 0;
    for (char ch : text) {
      if (ch == '\n') ++lines;
    }
    CHECK(lines == 2 + 10);  // two comment lines + 5 + 5 samples
  }
}
