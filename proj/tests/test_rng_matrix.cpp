#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "pvvolt/matrix.hpp"
#include "pvvolt/rng.hpp"

using namespace pvvolt;

TEST_CASE("derive_seed separates streams and is reproducible") {
    const auto a = derive_seed(42, {1, 2, hash_label("load")});
    const auto b = derive_seed(42, {1, 2, hash_label("load")});
    const auto c = derive_seed(42, {1, 2, hash_label("cloud")});
    const auto d = derive_seed(42, {2, 1, hash_label("load")});
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a != d);
}

TEST_CASE("Rng streams are deterministic per seed") {
    Rng r1(7), r2(7), r3(8);
    bool all_equal = true;
    bool any_differs = false;
    for (int i = 0; i < 1000; ++i) {
        const double u1 = r1.uniform01();
        all_equal = all_equal && u1 == r2.uniform01();
        any_differs = any_differs || u1 != r3.uniform01();
        CHECK(u1 >= 0.0);
        CHECK(u1 < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_differs);
}

TEST_CASE("uniform_open01 avoids the endpoints") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform_open01();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("normal draws have the expected first moments") {
    Rng rng(11);
    KahanAccumulator sum, sum_sq;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum.add(z);
        sum_sq.add(z * z);
    }
    CHECK(std::fabs(sum.value() / n) < 0.01);
    CHECK(std::fabs(sum_sq.value() / n - 1.0) < 0.02);
}

TEST_CASE("categorical follows the row probabilities") {
    Rng rng(3);
    const std::vector<double> probs{0.2, 0.5, 0.3};
    std::vector<int> counts(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[rng.categorical(probs)];
    CHECK(std::fabs(counts[0] / double(n) - 0.2) < 0.01);
    CHECK(std::fabs(counts[1] / double(n) - 0.5) < 0.01);
    CHECK(std::fabs(counts[2] / double(n) - 0.3) < 0.01);

    const std::vector<double> degenerate{1.0};
    CHECK(rng.categorical(degenerate) == 0);
}

TEST_CASE("matrix kernels match hand values") {
    Matrix h = Matrix::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    const std::vector<double> y{1.0, 0.0, -1.0};
    const auto hy = h.matvec(y);
    REQUIRE(hy.size() == 2);
    CHECK(hy[0] == Catch::Approx(-2.0));
    CHECK(hy[1] == Catch::Approx(-2.0));

    const std::vector<double> x{1.0, -1.0};
    const auto htx = h.tmatvec(x);
    REQUIRE(htx.size() == 3);
    CHECK(htx[0] == Catch::Approx(-3.0));
    CHECK(htx[1] == Catch::Approx(-3.0));
    CHECK(htx[2] == Catch::Approx(-3.0));

    CHECK(h.frobenius_sq() == Catch::Approx(91.0));

    const auto sums = h.column_sums();
    CHECK(sums[0] == Catch::Approx(5.0));
    CHECK(sums[2] == Catch::Approx(9.0));

    CHECK_THROWS_AS(h.matvec(x), ShapeError);
}

TEST_CASE("subtract_outer removes a rank-one term exactly") {
    Matrix h = Matrix::from_rows({{2.0, 4.0}, {6.0, 8.0}});
    const std::vector<double> x{1.0, 2.0};
    const std::vector<double> y{1.0, 1.0};
    h.subtract_outer(2.0, x, y);
    CHECK(h(0, 0) == Catch::Approx(0.0));
    CHECK(h(0, 1) == Catch::Approx(2.0));
    CHECK(h(1, 0) == Catch::Approx(2.0));
    CHECK(h(1, 1) == Catch::Approx(4.0));
}

TEST_CASE("kahan summation keeps cancellation error small") {
    KahanAccumulator acc;
    double plain = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        acc.add(1e-8);
        acc.add(1.0);
        acc.add(-1.0);
        plain += 1e-8;
        plain += 1.0;
        plain -= 1.0;
    }
    // Compensated error stays within Kahan's 2*eps*sum|x| bound.
    CHECK(std::fabs(acc.value() - n * 1e-8) < 1e-10);
    CHECK(std::fabs(acc.value() - n * 1e-8) <= std::fabs(plain - n * 1e-8));
}
