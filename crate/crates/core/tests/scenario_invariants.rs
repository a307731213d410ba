use scramblescope::evolve::uniform_grid;
use scramblescope::models::ModelSpec;
use scramblescope::scramble::{
    exact_metric_grid, shadow_control_curve, shadow_metric_curve, Metric, ScrambleScenario, SubsetPolicy,
};

fn scenario(spec: ModelSpec, la: usize, t_max: f64, n: usize) -> ScrambleScenario {
    let mut s = ScrambleScenario::new(spec, la, 7).unwrap();
    s.time_grid = uniform_grid(t_max, n).unwrap();
    s
}

#[test]
fn metric_ordering_on_every_cell() {
    for spec in [ModelSpec::tfim(8), ModelSpec::mfim(8), ModelSpec::pxp(8), ModelSpec::mbl(8).unwrap()] {
        let mut s = scenario(spec, 2, 10.0, 26);
        s.metrics = vec![Metric::Chi2, Metric::Holevo, Metric::ChiQ];
        let g = exact_metric_grid(&s).unwrap();
        assert_eq!(g.values.len(), 3);
        assert_eq!(g.values[0].len(), 26);
        assert_eq!(g.values[0][0].len(), 8);
        for (m, metric) in g.metrics.iter().enumerate() {
            for row in &g.values[m] {
                for &v in row {
                    assert!(v >= -1e-9, "{metric:?} = {v}");
                    if *metric == Metric::Holevo {
                        assert!(v <= 2f64.ln() + 1e-9);
                    }
                }
            }
        }
    }
}

/// A single flipped site is mirror-symmetric only when it is the exact
/// center, which needs an odd chain.
#[test]
fn mirror_symmetry_with_center_perturbation() {
    for spec in [ModelSpec::tfim(9), ModelSpec::mfim(9)] {
        let s = scenario(spec, 2, 8.0, 33);
        assert_eq!(s.perturbation_site, 4);
        let g = exact_metric_grid(&s).unwrap();
        for row in &g.values[0] {
            for x in 0..9 {
                assert!((row[x] - row[8 - x]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn shadow_control_stays_near_zero() {
    for la in [1, 2, 3] {
        let mut s = scenario(ModelSpec::pxp(10), la, 9.5, 20);
        s.subset_policy = SubsetPolicy::AllSubsets;
        s.shots = Some(3000);
        let rows = shadow_control_curve(&s).unwrap();
        for r in &rows {
            assert!(r.chi2_exact.abs() < 1e-12);
            assert!(r.chi2_shadow.abs() < 0.05, "L_A={la}: {r:?}");
        }
    }
}

#[test]
fn quadrupling_shots_halves_the_gap() {
    let rms = |shots: usize| {
        let mut s = scenario(ModelSpec::pxp(10), 1, 9.5, 20);
        s.subset_policy = SubsetPolicy::AllSubsets;
        s.shots = Some(shots);
        let rows = shadow_metric_curve(&s).unwrap();
        (rows.iter().map(|r| (r.chi2_shadow - r.chi2_exact).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
    };
    let ratio = rms(12_000) / rms(3000);
    assert!((0.35..=0.65).contains(&ratio), "ratio {ratio}");
}
