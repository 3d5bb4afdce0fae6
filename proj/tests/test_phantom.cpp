#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "anomforge/encoder.hpp"
#include "anomforge/filters.hpp"
#include "anomforge/phantom.hpp"
#include "support.hpp"

using namespace anomforge;

TEST_CASE("make_phantom is deterministic per seed") {
    const PhantomSpec spec{Dims{32, 32, 32}, 0.4, 0.8, 0.15, 11, 1};
    const Phantom a = make_phantom(spec);
    const Phantom b = make_phantom(spec);
    CHECK(a.volume == b.volume);
    CHECK(a.brain == b.brain);
    CHECK(a.wm_mask == b.wm_mask);
    PhantomSpec other = spec;
    other.seed = 12;
    CHECK(make_phantom(other).volume != a.volume);
}

TEST_CASE("phantom tissue layout") {
    const Phantom ph = make_phantom(PhantomSpec{Dims{48, 48, 48}, 0.4, 0.8, 0.15, 2, 1});
    CHECK(ph.brain == brain_mask(ph.volume));
    CHECK(ph.brain == brain_mask(ph.unsmoothed));
    for (std::size_t i = 0; i < ph.volume.size(); ++i) {
        CHECK(ph.volume[i] >= 0.0);
        CHECK(ph.volume[i] <= 1.0);
        if (!ph.brain[i]) CHECK(ph.volume[i] == 0.0);
        if (ph.wm_mask[i]) {
            CHECK(ph.brain[i]);
            CHECK(ph.unsmoothed[i] == 0.8);
        }
    }
    std::set<double> levels(ph.unsmoothed.values().begin(), ph.unsmoothed.values().end());
    CHECK(levels == std::set<double>{0.0, 0.15, 0.4, 0.8});
    const double wm_fraction = double(ph.wm_mask.count()) / double(ph.brain.count());
    CHECK(wm_fraction > 0.3);
    CHECK(wm_fraction < 0.7);
}

TEST_CASE("smoothness 0 leaves the label image") {
    const Phantom ph = make_phantom(PhantomSpec{Dims{24, 24, 24}, 0.4, 0.8, 0.15, 5, 0});
    CHECK(ph.volume == ph.unsmoothed);
}

TEST_CASE("make_phantom validation") {
    CHECK_THROWS_AS(make_phantom(PhantomSpec{Dims{8, 32, 32}}), std::invalid_argument);
    CHECK_THROWS_AS(make_phantom(PhantomSpec{Dims{32, 32, 32}, 1.2}), std::invalid_argument);
    CHECK_THROWS_AS(make_phantom(PhantomSpec{Dims{32, 32, 32}, 0.4, 0.8, 0.15, 0, -1}), std::invalid_argument);
}

TEST_CASE("mu_w heuristic tracks white matter across phantoms") {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Phantom ph = make_phantom(PhantomSpec{Dims{32, 32, 32}, 0.4, 0.8, 0.15, s, 1});
        const double mu = estimate_mu_w(ph.volume, std::nullopt, ph.brain).mu_w;
        CHECK(std::fabs(mu - 0.8) <= 0.05);
        const double mu_mask = estimate_mu_w(ph.unsmoothed, ph.wm_mask, ph.brain).mu_w;
        CHECK(mu_mask == doctest::Approx(0.8).epsilon(1e-12));
    }
}

TEST_CASE("sphere_offsets matches enumeration") {
    CHECK(sphere_offsets(1.0).size() == 7);
    for (double r : {1.5, 2.0, 3.0, 6.0}) {
        std::set<std::tuple<long, long, long>> expect;
        const long R = long(std::floor(r));
        for (long z = -R; z <= R; ++z)
            for (long y = -R; y <= R; ++y)
                for (long x = -R; x <= R; ++x)
                    if (double(x * x + y * y + z * z) <= r * r) expect.emplace(x, y, z);
        std::set<std::tuple<long, long, long>> got;
        for (const Offset3& o : sphere_offsets(r)) got.emplace(o[0], o[1], o[2]);
        CHECK(got == expect);
    }
}

TEST_CASE("make_lesion_seed stays inside the brain") {
    const Phantom ph = make_phantom(PhantomSpec{Dims{32, 32, 32}, 0.4, 0.8, 0.15, 1, 1});
    const BinaryMask3D allowed = erode(ph.brain, 4);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const LesionSeed seed = make_lesion_seed(allowed, 3.0, s);
        CHECK(seed.lesion_mask.count() == sphere_offsets(3.0).size());
        CHECK(mask_and(seed.lesion_mask, allowed) == seed.lesion_mask);
        CHECK(seed.jitter == Offset3{0, 0, 0});
    }
    CHECK(make_lesion_seed(allowed, 3.0, 4).lesion_mask == make_lesion_seed(allowed, 3.0, 4).lesion_mask);
    CHECK(make_lesion_seed(allowed, 3.0, 4).lesion_mask != make_lesion_seed(allowed, 3.0, 5).lesion_mask);
}

TEST_CASE("make_lesion_seed radius 1 and infeasible cases") {
    const Dims d{9, 9, 9};
    const BinaryMask3D brain = testing::box_mask(d, 2, 7);
    const LesionSeed s = make_lesion_seed(brain, 1.0, 3);
    CHECK(s.lesion_mask.count() == 7);
    CHECK(mask_and(s.lesion_mask, brain) == s.lesion_mask);

    // only the centre voxel of a 3-cube admits a radius-1 ball
    const BinaryMask3D tight = testing::box_mask(d, 3, 6);
    for (std::uint64_t k = 0; k < 5; ++k)
        CHECK(make_lesion_seed(tight, 1.0, k).lesion_mask == testing::ball_mask(d, 4, 4, 4, 1.0));

    CHECK_THROWS_AS(make_lesion_seed(tight, 2.0, 0), std::runtime_error);
    CHECK_THROWS_AS(make_lesion_seed(BinaryMask3D(d), 1.0, 0), std::runtime_error);
    CHECK_THROWS_AS(make_lesion_seed(brain, 0.5, 0), std::invalid_argument);
}
