#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drmdel/hypothesis.hpp"
#include "drmdel/infer.hpp"

using namespace drmdel;

TEST_CASE("equal:all is full equality of all populations") {
    const ConstraintSpec c = parse_hypothesis("equal:all", 2, 2);
    CHECK(c.q() == 4);
    CHECK(c.A == Matrix::Identity(4, 4));
    CHECK(c.b == Vector::Zero(4));
}

TEST_CASE("equal pairs stack one block row per pair") {
    // beta_1 = beta_2 and beta_3 = beta_4 with d = 1
    const ConstraintSpec c = parse_hypothesis("equal:1,2;3,4", 4, 1);
    CHECK(c.q() == 2);
    Matrix expect = Matrix::Zero(2, 4);
    expect(0, 0) = 1;
    expect(0, 1) = -1;
    expect(1, 2) = 1;
    expect(1, 3) = -1;
    CHECK(c.A == expect);
    CHECK(c.b == Vector::Zero(2));
}

TEST_CASE("equal pair with d = 2 produces identity blocks") {
    const ConstraintSpec c = parse_hypothesis("equal:1,2", 2, 2);
    CHECK(c.q() == 2);
    CHECK(c.A.block(0, 0, 2, 2) == Matrix::Identity(2, 2));
    CHECK(c.A.block(0, 2, 2, 2) == -Matrix::Identity(2, 2));
}

TEST_CASE("zero and fix pin a single block") {
    const ConstraintSpec z = parse_hypothesis("zero:2", 3, 2);
    CHECK(z.q() == 2);
    CHECK(z.A.block(0, 2, 2, 2) == Matrix::Identity(2, 2));
    CHECK(z.A.block(0, 0, 2, 2) == Matrix::Zero(2, 2));
    CHECK(z.b == Vector::Zero(2));

    const ConstraintSpec f = parse_hypothesis("fix:1=-2,2", 2, 2);
    CHECK(f.q() == 2);
    CHECK(f.A.block(0, 0, 2, 2) == Matrix::Identity(2, 2));
    CHECK(f.b[0] == -2.0);
    CHECK(f.b[1] == 2.0);
}

TEST_CASE("lincomb broadcasts scalar coefficients over blocks") {
    const ConstraintSpec c = parse_hypothesis("lincomb:2*b1-b2=0", 2, 2);
    CHECK(c.q() == 2);
    CHECK(c.A.block(0, 0, 2, 2) == 2.0 * Matrix::Identity(2, 2));
    CHECK(c.A.block(0, 2, 2, 2) == -Matrix::Identity(2, 2));
    CHECK(c.b == Vector::Zero(2));

    const ConstraintSpec s = parse_hypothesis("lincomb:b1+0.5*b2=1.5", 2, 1);
    CHECK(s.A(0, 0) == 1.0);
    CHECK(s.A(0, 1) == 0.5);
    CHECK(s.b[0] == 1.5);
}

TEST_CASE("parse errors carry a position and a message") {
    CHECK_THROWS_AS(parse_hypothesis("nonsense", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("weird:1,2", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("equal:", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("equal:1,1", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("equal:0,1", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("equal:1,5", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("zero:7", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("fix:1=1", 2, 2), parse_error);      // too few
    CHECK_THROWS_AS(parse_hypothesis("fix:1=1,2,3", 2, 2), parse_error);  // too many
    CHECK_THROWS_AS(parse_hypothesis("fix:1=a,b", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("lincomb:b1+b2", 2, 2), parse_error);  // no rhs
    CHECK_THROWS_AS(parse_hypothesis("lincomb:=0", 2, 2), parse_error);
    CHECK_THROWS_AS(parse_hypothesis("lincomb:2*x1=0", 2, 2), parse_error);

    try {
        parse_hypothesis("equal:1,5", 2, 2);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(std::string(e.what()).find("population") != std::string::npos);
    }
}

TEST_CASE("round trip through format_hypothesis") {
    const int m = 3, d = 2;
    for (const std::string spec :
         {"equal:all", "equal:1,2", "equal:1,2;2,3", "zero:2", "fix:1=-2,2",
          "fix:3=0.5,1.25"}) {
        const ConstraintSpec c = parse_hypothesis(spec, m, d);
        const std::string back = format_hypothesis(c, m, d);
        const ConstraintSpec again = parse_hypothesis(back, m, d);
        CHECK(c.A == again.A);
        CHECK(c.b == again.b);
    }
}

TEST_CASE("parsed constraints drive a real test") {
    const MultiSample data({{0.2, 1.4, -0.7, 0.9}, {0.5, -0.1, 1.2, 0.3}});
    const BasisFn basis = build_basis(BasisSpec{BasisTerm::identity()});
    const ConstraintSpec c = parse_hypothesis("equal:all", 1, 1);
    const TestResult res = delr_test(data, basis, c);
    CHECK(res.df == 1);
    CHECK(res.p_value > 0.0);
}
