#include <catch2/catch_amalgamated.hpp>

#include "labelprop/grid.hpp"
#include "labelprop/rng.hpp"

using namespace labelprop;

TEST_CASE("onehot_encode maps classes to unit vectors and ignore to zero") {
    LabelMap m(1, 1, 3);
    m.at(0, 0) = 1;
    SoftLabelMap soft = onehot_encode(m);
    CHECK(soft.at(0, 0, 0) == 0.0f);
    CHECK(soft.at(0, 0, 1) == 1.0f);
    CHECK(soft.at(0, 0, 2) == 0.0f);

    m.at(0, 0) = m.ignore_id;
    soft = onehot_encode(m);
    CHECK(soft.at(0, 0, 0) == 0.0f);
    CHECK(soft.at(0, 0, 1) == 0.0f);
    CHECK(soft.at(0, 0, 2) == 0.0f);
}

TEST_CASE("onehot_encode on a mixed 2x2 map") {
    LabelMap m(2, 2, 3);
    m.at(0, 0) = 0;
    m.at(1, 0) = 2;
    m.at(0, 1) = 1;
    m.at(1, 1) = m.ignore_id;
    const SoftLabelMap soft = onehot_encode(m);
    CHECK(soft.at(0, 0, 0) == 1.0f);
    CHECK(soft.at(1, 0, 2) == 1.0f);
    CHECK(soft.at(0, 1, 1) == 1.0f);
    for (int c = 0; c < 3; ++c) CHECK(soft.at(1, 1, c) == 0.0f);
}

TEST_CASE("argmax_decode picks the max, breaks ties low, maps zero to ignore") {
    SoftLabelMap soft(1, 1, 3);
    soft.at(0, 0, 0) = 0.2f;
    soft.at(0, 0, 1) = 0.5f;
    soft.at(0, 0, 2) = 0.3f;
    CHECK(argmax_decode(soft).at(0, 0) == 1);

    soft.at(0, 0, 0) = 0.5f;
    soft.at(0, 0, 1) = 0.5f;
    soft.at(0, 0, 2) = 0.0f;
    CHECK(argmax_decode(soft).at(0, 0) == 0); // tie toward the lowest index

    soft.at(0, 0, 0) = 0.0f;
    soft.at(0, 0, 1) = 0.0f;
    CHECK(argmax_decode(soft).at(0, 0) == kIgnoreId);
}

TEST_CASE("onehot/argmax round-trip is the identity on random maps") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        LabelMap m(8, 8, 5);
        for (auto& id : m.data) {
            const auto draw = rng.uniform_int(0, 5);
            id = draw == 5 ? m.ignore_id : static_cast<ClassId>(draw);
        }
        const LabelMap back = argmax_decode(onehot_encode(m));
        CHECK(back.data == m.data);
    }
}

TEST_CASE("argmax_decode is invariant under uniform positive scaling") {
    Rng rng(43);
    SoftLabelMap soft(6, 6, 4);
    for (auto& v : soft.data) v = rng.uniform_f(0.0f, 1.0f);
    SoftLabelMap scaled = soft;
    for (auto& v : scaled.data) v *= 3.5f;
    CHECK(argmax_decode(soft).data == argmax_decode(scaled).data);
}

TEST_CASE("pixel_distance basics") {
    Image a(1, 1, 3), b(1, 1, 3);
    CHECK(pixel_distance(a, b, 0, 0) == 0.0f);

    a.at(0, 0, 0) = 1.0f;
    CHECK(pixel_distance(a, b, 0, 0) == Catch::Approx(1.0).margin(1e-7));

    a.at(0, 0, 0) = 0.5f;
    a.at(0, 0, 1) = 0.5f;
    a.at(0, 0, 2) = 0.5f;
    b.at(0, 0, 0) = 0.1f;
    b.at(0, 0, 1) = 0.2f;
    b.at(0, 0, 2) = 0.3f;
    // sqrt(0.16 + 0.09 + 0.04) = sqrt(0.29)
    CHECK(pixel_distance(a, b, 0, 0) == Catch::Approx(0.53851648).margin(1e-6));
}

TEST_CASE("pixel_distance is symmetric and satisfies the triangle inequality") {
    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        Image a(1, 1, 3), b(1, 1, 3), c(1, 1, 3);
        for (int ch = 0; ch < 3; ++ch) {
            a.at(0, 0, ch) = rng.uniform_f(0.0f, 1.0f);
            b.at(0, 0, ch) = rng.uniform_f(0.0f, 1.0f);
            c.at(0, 0, ch) = rng.uniform_f(0.0f, 1.0f);
        }
        const float ab = pixel_distance(a, b, 0, 0);
        const float ba = pixel_distance(b, a, 0, 0);
        const float ac = pixel_distance(a, c, 0, 0);
        const float cb = pixel_distance(c, b, 0, 0);
        CHECK(ab == ba);
        CHECK(ab <= ac + cb + 1e-6f);
    }
}
