#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "dscpmd/error.hpp"
#include "dscpmd/mask.hpp"
#include "dscpmd/perfusion.hpp"
#include "dscpmd/phantom.hpp"
#include "test_util.hpp"

using namespace dscpmd;
using testutil::TempDir;

namespace {

const RegionPerfusion& region_params(const PhantomSpec& spec, int id) {
  const auto it = spec.region_overrides.find(id);
  return it == spec.region_overrides.end() ? spec.default_region : it->second;
}

}  // namespace

TEST_CASE("gamma-variate arterial curve matches its analytic anchors") {
  const AifParams p;  // A=1, t0=10, alpha=3, beta=1.5
  const std::vector<double> aif = synth_aif(p, 80, 1.5);
  REQUIRE(aif.size() == 80);

  // Zero until the arrival time, positive afterwards.
  for (int i = 0; i <= 6; ++i) CHECK(aif[static_cast<std::size_t>(i)] == 0.0);
  CHECK(aif[7] > 0.0);

  // Frozen discrete values for this sampling.
  const auto peak_it = std::max_element(aif.begin(), aif.end());
  CHECK(peak_it - aif.begin() == 10);
  CHECK(*peak_it == doctest::Approx(4.4592491684065489).epsilon(1e-12));

  // Analytic peak A*(alpha*beta)^alpha*exp(-alpha) = 4.5368... at t0+alpha*beta;
  // the discrete max sits half a sample off, so allow the discretization gap.
  const double analytic_peak = std::pow(p.alpha * p.beta, p.alpha) * std::exp(-p.alpha);
  CHECK(*peak_it == doctest::Approx(analytic_peak).epsilon(0.02));

  // Riemann sum vs the analytic integral A*beta^(alpha+1)*Gamma(alpha+1).
  double sum = 0;
  for (double v : aif) sum += v;
  const double integral = std::pow(p.beta, p.alpha + 1) * std::tgamma(p.alpha + 1);
  CHECK(integral == doctest::Approx(30.375).epsilon(1e-12));
  CHECK(sum * 1.5 == doctest::Approx(30.340959891995404).epsilon(1e-12));
  CHECK(sum * 1.5 == doctest::Approx(integral).epsilon(0.002));
}

TEST_CASE("tissue curve obeys the discrete forward-model identities") {
  const std::vector<double> aif = synth_aif({}, 80, 1.5);

  SUBCASE("mtt == dt with unit cbf*dt is a pure carrier: C == aif exactly") {
    const double rate = 1.0 / 1.5;
    const std::vector<double> c = synth_tissue_curve(aif, 1.5, rate, 1.5, 0);
    REQUIRE(c.size() == aif.size());
    double max_abs = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(c[i] - aif[i]));
    }
    CHECK(max_abs == 0.0);
  }

  SUBCASE("central-volume identity: sum(C)/sum(aif) == cbf_rate * mtt") {
    // Exact up to residue truncation at the end of the window, so the
    // tolerance widens with mtt (slower decay of the geometric residue).
    const double rate = 60.0 / 6000.0;
    struct Case {
      double mtt, tol;
    };
    for (const Case k : {Case{4.0, 1e-12}, Case{8.0, 1e-5}, Case{20.0, 1e-2}}) {
      CAPTURE(k.mtt);
      const std::vector<double> c = synth_tissue_curve(aif, 1.5, rate, k.mtt, 0);
      double sc = 0, sa = 0;
      for (std::size_t i = 0; i < c.size(); ++i) {
        sc += c[i];
        sa += aif[i];
      }
      CHECK(sc / sa == doctest::Approx(rate * k.mtt).epsilon(k.tol));
    }
  }

  SUBCASE("delay shifts the curve by whole samples") {
    const std::vector<double> c0 = synth_tissue_curve(aif, 1.5, 0.01, 4.0, 0);
    const std::vector<double> c2 = synth_tissue_curve(aif, 1.5, 0.01, 4.0, 2);
    CHECK(c2[0] == 0.0);
    CHECK(c2[1] == 0.0);
    for (std::size_t i = 2; i < c2.size(); ++i) {
      CHECK(c2[i] == doctest::Approx(c0[i - 2]).epsilon(1e-14));
    }
  }

  SUBCASE("mtt below the sampling interval is rejected") {
    CHECK_THROWS_AS((void)synth_tissue_curve(aif, 1.5, 0.01, 1.0, 0),
                    validation_error);
  }
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec = default_phantom_spec();
  CHECK_NOTHROW(spec.validate());

  SUBCASE("timepoints") {
    spec.timepoints = 7;
    CHECK_THROWS_AS(spec.validate(), validation_error);
  }
  SUBCASE("mtt below tr") {
    spec.default_region.mtt = 1.0;
    CHECK_THROWS_AS(spec.validate(), validation_error);
  }
  SUBCASE("override mtt below tr") {
    spec.region_overrides[1].mtt = 0.5;
    CHECK_THROWS_AS(spec.validate(), validation_error);
  }
  SUBCASE("negative noise") {
    spec.noise_sigma = -1;
    CHECK_THROWS_AS(spec.validate(), validation_error);
  }
  SUBCASE("nonpositive tr") {
    spec.tr = 0;
    CHECK_THROWS_AS(spec.validate(), validation_error);
  }
}

TEST_CASE("phantom spec json round trip") {
  TempDir tmp("phantom_spec");
  PhantomSpec spec = default_phantom_spec();
  spec.noise_sigma = 2.5;
  spec.seed = 42;
  spec.region_overrides[9] = {77.0, 6.5, 1.5};
  save_phantom_spec(tmp.file("s.json"), spec);
  const PhantomSpec r = load_phantom_spec(tmp.file("s.json"));
  CHECK(r.grid == spec.grid);
  CHECK(r.timepoints == spec.timepoints);
  CHECK(r.tr == spec.tr);
  CHECK(r.te == spec.te);
  CHECK(r.s0 == spec.s0);
  CHECK(r.noise_sigma == spec.noise_sigma);
  CHECK(r.seed == spec.seed);
  CHECK(r.spacing == spec.spacing);
  CHECK(r.aif.amplitude == spec.aif.amplitude);
  CHECK(r.aif.t0 == spec.aif.t0);
  CHECK(r.aif.alpha == spec.aif.alpha);
  CHECK(r.aif.beta == spec.aif.beta);
  REQUIRE(r.region_overrides.size() == spec.region_overrides.size());
  for (const auto& [id, rp] : spec.region_overrides) {
    REQUIRE(r.region_overrides.count(id) == 1);
    CHECK(r.region_overrides.at(id).cbf == rp.cbf);
    CHECK(r.region_overrides.at(id).mtt == rp.mtt);
    CHECK(r.region_overrides.at(id).delay == rp.delay);
  }

  testutil::write_text(tmp.file("bad.json"), "{\"grid\": \"huge\"}");
  CHECK_THROWS_AS((void)load_phantom_spec(tmp.file("bad.json")), format_error);
  CHECK_THROWS_AS((void)load_phantom_spec(tmp.file("absent.json")), io_error);
}

TEST_CASE("default phantom: geometry, forward model, and ground truth") {
  PhantomSpec spec = default_phantom_spec();
  REQUIRE(spec.noise_sigma == 0.0);
  const PhantomResult ph = generate_phantom(spec);

  CHECK(ph.dsc.nx == 64);
  CHECK(ph.dsc.ny == 64);
  CHECK(ph.dsc.nz == 10);
  CHECK(ph.dsc.nt == 80);
  CHECK(ph.dsc.tr == spec.tr);
  CHECK(ph.dsc.te == spec.te);
  CHECK(ph.dsc.spacing == spec.spacing);

  const LabelVolume ref = make_synthetic_labels(64, 64, 10, spec.spacing);
  CHECK(ph.labels.data == ref.data);

  // Ground truth covers the whole table, carriers exactly unit CBV.
  REQUIRE(ph.truth.regions.size() == 113);
  CHECK(ph.truth.tr == spec.tr);
  CHECK(ph.truth.aif == synth_aif(spec.aif, spec.timepoints, spec.tr));
  for (const auto& rt : ph.truth.regions) {
    CAPTURE(rt.id);
    const RegionPerfusion& rp = region_params(spec, rt.id);
    CHECK(rt.cbf == rp.cbf * kCbfUnitScale);
    CHECK(rt.mtt == rp.mtt);
    CHECK(rt.cbv == rt.cbf * rt.mtt);
    CHECK(rt.cbf_input == rp.cbf);
    CHECK(rt.tmax == spec.tr * std::lround(rp.delay / spec.tr));
  }
  const auto carrier = std::find_if(ph.truth.regions.begin(),
                                    ph.truth.regions.end(),
                                    [](const RegionTruth& r) { return r.id == 57; });
  REQUIRE(carrier != ph.truth.regions.end());
  CHECK(carrier->cbv == 1.0);
  CHECK(carrier->mtt == spec.tr);
  const auto delayed = std::find_if(ph.truth.regions.begin(),
                                    ph.truth.regions.end(),
                                    [](const RegionTruth& r) { return r.id == 3; });
  REQUIRE(delayed != ph.truth.regions.end());
  CHECK(delayed->tmax == 3.0);

  // Noiseless signal equals s0 * exp(-te * C) voxel for voxel, with C from
  // the documented discrete convolution; checked on one voxel per region id
  // seen plus every background voxel at three timepoints.
  std::vector<char> seen(114, 0);
  for (int z = 0; z < ph.labels.nz; ++z) {
    for (int y = 0; y < ph.labels.ny; ++y) {
      for (int x = 0; x < ph.labels.nx; ++x) {
        const int id = ph.labels.at(x, y, z);
        if (id == 0) continue;
        if (seen[static_cast<std::size_t>(id)]) continue;
        seen[static_cast<std::size_t>(id)] = 1;
        const RegionPerfusion& rp = region_params(spec, id);
        const std::vector<double> c = synth_tissue_curve(
            ph.truth.aif, spec.tr, rp.cbf * kCbfUnitScale, rp.mtt,
            static_cast<int>(std::lround(rp.delay / spec.tr)));
        for (int t = 0; t < ph.dsc.nt; ++t) {
          const double expected =
              spec.s0 * std::exp(-spec.te * c[static_cast<std::size_t>(t)]);
          const double got = ph.dsc.at(x, y, z, t);
          REQUIRE(got ==
                  doctest::Approx(expected).epsilon(1e-5));  // float32 storage
        }
      }
    }
  }
  for (std::size_t id = 1; id < seen.size(); ++id) CHECK(seen[id] == 1);
  for (int t : {0, 40, 79}) {
    for (int y = 0; y < ph.labels.ny; ++y) {
      if (ph.labels.at(0, y, 0) == 0) {
        CHECK(ph.dsc.at(0, y, 0, t) == 0.0f);
      }
    }
  }
}

TEST_CASE("phantom noise is deterministic, seeded, and thread-invariant") {
  PhantomSpec spec = default_phantom_spec();
  spec.grid = {32, 20, 4};
  spec.timepoints = 20;
  spec.noise_sigma = 4.0;
  spec.seed = 7;

  const PhantomResult a = generate_phantom(spec);
  const PhantomResult b = generate_phantom(spec);
  CHECK(a.dsc.data == b.dsc.data);

  const PhantomResult c = generate_phantom(spec, nullptr, 4);
  CHECK(a.dsc.data == c.dsc.data);

  PhantomSpec other = spec;
  other.seed = 8;
  const PhantomResult d = generate_phantom(other);
  CHECK(a.dsc.data != d.dsc.data);

  // Background voxels stay exactly zero even with noise.
  for (int t = 0; t < a.dsc.nt; ++t) {
    for (int z = 0; z < a.labels.nz; ++z) {
      for (int y = 0; y < a.labels.ny; ++y) {
        for (int x = 0; x < a.labels.nx; ++x) {
          if (a.labels.at(x, y, z) == 0) {
            REQUIRE(a.dsc.at(x, y, z, t) == 0.0f);
          }
        }
      }
    }
  }
}

TEST_CASE("otsu threshold separates a binary volume at the midpoint") {
  Volume3D v = Volume3D::zeros(10, 10, 1);
  for (int i = 0; i < 30; ++i) v.data[static_cast<std::size_t>(i)] = 100.0f;

  const double thr = otsu_threshold(v);
  CHECK(thr == doctest::Approx(50.0).epsilon(1e-12));
  int fg = 0;
  for (float x : v.data) fg += x > thr ? 1 : 0;
  CHECK(fg == 30);

  SUBCASE("scale invariance") {
    Volume3D w = v;
    for (float& x : w.data) x *= 3.7f;
    CHECK(otsu_threshold(w) ==
          doctest::Approx(thr * 3.7).epsilon(1e-6));  // float32 inputs
  }
  SUBCASE("constant input") {
    Volume3D w = Volume3D::zeros(4, 4, 1);
    CHECK_THROWS_AS((void)otsu_threshold(w), processing_error);
  }
}

TEST_CASE("morphological mask helpers") {
  SUBCASE("largest 6-connected component wins; diagonals do not connect") {
    Mask3D m = Mask3D::full(6, 6, 2, false);
    // Blob A: 5 voxels in a row. Blob B: 2 voxels, diagonal from A's end.
    for (int x = 0; x < 5; ++x) m.set(x, 1, 0, true);
    m.set(5, 2, 0, true);
    m.set(5, 3, 0, true);
    const Mask3D keep = largest_component_6(m);
    CHECK(keep.count() == 5);
    for (int x = 0; x < 5; ++x) CHECK(keep.get(x, 1, 0));
    CHECK_FALSE(keep.get(5, 2, 0));
    CHECK_FALSE(keep.get(5, 3, 0));
  }

  SUBCASE("closing fills a single-voxel pit and keeps isolated voxels") {
    Mask3D m = Mask3D::full(7, 7, 7, false);
    for (int z = 1; z < 6; ++z) {
      for (int y = 1; y < 6; ++y) {
        for (int x = 1; x < 6; ++x) m.set(x, y, z, true);
      }
    }
    m.set(3, 3, 3, false);  // interior pit
    const Mask3D closed = morphological_close_ball1(m);
    CHECK(closed.get(3, 3, 3));
    // Closing is extensive: nothing from the input disappears.
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      if (m.data[i]) CHECK(closed.data[i]);
    }

    Mask3D lone = Mask3D::full(5, 5, 5, false);
    lone.set(2, 2, 2, true);
    const Mask3D lc = morphological_close_ball1(lone);
    CHECK(lc.get(2, 2, 2));
    CHECK(lc.count() == 1);
  }

  SUBCASE("per-slice hole fill closes rings but not border notches") {
    Mask3D m = Mask3D::full(8, 8, 1, false);
    for (int y = 2; y <= 5; ++y) {
      for (int x = 2; x <= 5; ++x) m.set(x, y, 0, true);
    }
    m.set(3, 3, 0, false);  // enclosed hole
    Mask3D notched = m;
    // Carve a channel from the hole to the border: no longer enclosed.
    notched.set(3, 2, 0, false);
    notched.set(3, 3, 0, false);

    const Mask3D filled = fill_holes_per_slice(m);
    CHECK(filled.get(3, 3, 0));
    const Mask3D nf = fill_holes_per_slice(notched);
    CHECK_FALSE(nf.get(3, 3, 0));
    CHECK_FALSE(nf.get(3, 2, 0));
  }
}

TEST_CASE("brain mask covers the phantom head tightly") {
  PhantomSpec spec = default_phantom_spec();
  const PhantomResult ph = generate_phantom(spec);
  const Volume3D t0 = extract_timepoint(ph.dsc, 0);
  const Mask3D m = brain_mask(t0);

  std::size_t labeled = 0;
  std::size_t missed = 0;
  for (std::size_t i = 0; i < ph.labels.data.size(); ++i) {
    if (ph.labels.data[i] != 0) {
      ++labeled;
      if (!m.data[i]) ++missed;
    }
  }
  CHECK(missed == 0);
  // The morphological closing may add fillet voxels at concave corners, but
  // not more than a couple of percent of the head.
  CHECK(m.count() >= labeled);
  CHECK(static_cast<double>(m.count() - labeled) <=
        0.02 * static_cast<double>(labeled));
}

TEST_CASE("signal to concentration") {
  SUBCASE("noiseless phantom reproduces the tissue curves") {
    PhantomSpec spec = default_phantom_spec();
    spec.grid = {32, 20, 4};
    spec.timepoints = 40;
    const PhantomResult ph = generate_phantom(spec);
    Mask3D mask = Mask3D::full(32, 20, 4, false);
    for (std::size_t i = 0; i < ph.labels.data.size(); ++i) {
      mask.data[i] = ph.labels.data[i] != 0;
    }
    const ConcentrationResult cr =
        signal_to_concentration(ph.dsc, mask, spec.te);
    CHECK(cr.baseline_end == 6);
    CHECK(cr.bolus_index == 7);
    CHECK(cr.valid.data == mask.data);  // every labeled voxel has S0 == s0

    // Pick one voxel of the delayed region and one carrier voxel.
    for (int want : {3, 57}) {
      CAPTURE(want);
      bool found = false;
      for (int z = 0; z < ph.labels.nz && !found; ++z) {
        for (int y = 0; y < ph.labels.ny && !found; ++y) {
          for (int x = 0; x < ph.labels.nx && !found; ++x) {
            if (ph.labels.at(x, y, z) != want) continue;
            found = true;
            const RegionPerfusion& rp = region_params(spec, want);
            const std::vector<double> c = synth_tissue_curve(
                ph.truth.aif, spec.tr, rp.cbf * kCbfUnitScale, rp.mtt,
                static_cast<int>(std::lround(rp.delay / spec.tr)));
            CHECK(cr.s0.at(x, y, z) == doctest::Approx(spec.s0).epsilon(1e-6));
            for (int t = 0; t < ph.dsc.nt; ++t) {
              CHECK(cr.conc.at(x, y, z, t) ==
                    doctest::Approx(c[static_cast<std::size_t>(t)])
                        .epsilon(1e-4)
                        .scale(1.0));
            }
          }
        }
      }
      CHECK(found);
    }
  }

  SUBCASE("hand-built series: zero-baseline voxels are invalidated") {
    Volume4D v = Volume4D::zeros(2, 1, 1, 12);
    const float series[12] = {100, 100, 100, 100, 100, 100,
                              60,  50,  60,  80,  95,  100};
    for (int t = 0; t < 12; ++t) v.at(0, 0, 0, t) = series[t];
    // Voxel (1,0,0) stays identically zero but is inside the mask.
    Mask3D mask = Mask3D::full(2, 1, 1, true);
    const ConcentrationResult cr = signal_to_concentration(v, mask, 0.03);
    CHECK(cr.bolus_index == 6);
    CHECK(cr.baseline_end == 5);
    CHECK(cr.valid.get(0, 0, 0));
    CHECK_FALSE(cr.valid.get(1, 0, 0));
    for (int t = 0; t < 12; ++t) {
      CHECK(cr.conc.at(1, 0, 0, t) == 0.0f);
      const double expected = -std::log(static_cast<double>(series[t]) / 100.0) / 0.03;
      CHECK(cr.conc.at(0, 0, 0, t) ==
            doctest::Approx(expected).epsilon(1e-5).scale(1.0));
    }
  }

  SUBCASE("constant signal has no bolus") {
    Volume4D v = Volume4D::zeros(2, 1, 1, 10);
    for (int t = 0; t < 10; ++t) v.at(0, 0, 0, t) = 100.0f;
    Mask3D mask = Mask3D::full(2, 1, 1, true);
    CHECK_THROWS_AS((void)signal_to_concentration(v, mask, 0.03),
                    processing_error);
  }

  SUBCASE("too few timepoints") {
    Volume4D v = Volume4D::zeros(1, 1, 1, 5);
    Mask3D mask = Mask3D::full(1, 1, 1, true);
    CHECK_THROWS_AS((void)signal_to_concentration(v, mask, 0.03),
                    processing_error);
  }

  SUBCASE("empty mask") {
    Volume4D v = Volume4D::zeros(1, 1, 1, 10);
    Mask3D mask = Mask3D::full(1, 1, 1, false);
    CHECK_THROWS_AS((void)signal_to_concentration(v, mask, 0.03),
                    processing_error);
  }
}
