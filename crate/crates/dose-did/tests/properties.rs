//! Property tests and the independent dense-OLS cross-check.
//!
//! The decomposition identities and panel invariants are exercised over
//! randomized structures; the within estimator is held against a full
//! dummy-variable least-squares fit built with a dense solver.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dose_did::baseline::TwoPeriodPanel;
use dose_did::mp_decomp::{decompose_mp, twfe_beta_mp};
use dose_did::panel::{
    derive_timing, dose_mean_reconstruction_gap, DoseOnset, GridConfig, PanelDataset, PanelRecord,
    Schema,
};
use dose_did::twfe::{decompose_mechanical, decompose_wald2x2, twfe_beta_2p};

/// Full dummy-variable OLS: regress Y on exposure plus unit and period
/// dummies (one period dummy dropped), solved densely.
fn dense_twfe_beta(panel: &PanelDataset, timing: &dose_did::panel::TimingIndex) -> f64 {
    let n = panel.n_units();
    let t_max = panel.n_periods();
    let rows = n * t_max;
    let cols = 1 + n + (t_max - 1);
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for u in 0..n {
        for t in 1..=t_max {
            x[(r, 0)] = timing.exposure(panel, u, t);
            x[(r, 1 + u)] = 1.0;
            if t >= 2 {
                x[(r, 1 + n + (t - 2))] = 1.0;
            }
            y[r] = panel.outcome(u, t);
            r += 1;
        }
    }
    let svd = x.svd(true, true);
    let beta = svd.solve(&y, 1e-12).expect("least squares solve");
    beta[0]
}

/// Strategy for a random staggered panel description.
fn panel_strategy() -> impl Strategy<Value = (usize, Vec<(usize, f64)>, u64)> {
    (2usize..=6)
        .prop_flat_map(|t_max| {
            let arm = (
                2usize..=t_max,
                prop::sample::select(vec![0.5, 1.0, 2.0, 3.5]),
            );
            (Just(t_max), prop::collection::vec(arm, 2..5), any::<u64>())
        })
        .prop_map(|(t_max, mut arms, seed)| {
            // Always provide a never-treated arm so comparisons exist.
            arms.push((t_max + 1, 0.0));
            (t_max, arms, seed)
        })
}

fn build_panel(t_max: usize, arms: &[(usize, f64)], seed: u64) -> PanelDataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut unit = 0usize;
    for &(g, d) in arms {
        // 3 units per arm keeps the panels small but non-degenerate.
        for _ in 0..3 {
            let alpha: f64 = rng.random_range(-2.0..2.0);
            for t in 1..=t_max {
                let eps: f64 = rng.random_range(-1.0..1.0);
                let treated = g <= t_max && t >= g;
                records.push(PanelRecord {
                    unit: format!("u{unit}"),
                    period: t as i64,
                    dose: if treated { d } else { 0.0 },
                    outcome: alpha + 0.3 * t as f64 + if treated { 0.8 * d } else { 0.0 } + eps,
                });
            }
            unit += 1;
        }
    }
    PanelDataset::from_records(records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mp_decomposition_identity_holds((t_max, arms, seed) in panel_strategy()) {
        let panel = build_panel(t_max, &arms, seed);
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
        if let Ok(rep) = decompose_mp(&panel, &timing) {
            prop_assert!(rep.residual.abs() < 1e-8);
            prop_assert!((rep.weight_sum - 1.0).abs() < 1e-10);
            prop_assert!(rep.terms.iter().all(|t| t.weight >= 0.0));
        }
    }

    #[test]
    fn within_estimator_matches_dense_ols((t_max, arms, seed) in panel_strategy()) {
        let panel = build_panel(t_max, &arms, seed);
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
        if let Ok(beta) = twfe_beta_mp(&panel, &timing) {
            let dense = dense_twfe_beta(&panel, &timing);
            prop_assert!((beta - dense).abs() < 1e-10, "{beta} vs {dense}");
        }
    }

    #[test]
    fn group_shares_reconstruct_dose_mean((t_max, arms, seed) in panel_strategy()) {
        let panel = build_panel(t_max, &arms, seed);
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
        prop_assert!(dose_mean_reconstruction_gap(&panel, &timing) < 1e-12);
    }

    #[test]
    fn canonical_csv_round_trips((t_max, arms, seed) in panel_strategy()) {
        let panel = build_panel(t_max, &arms, seed);
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
        let mut buf = Vec::new();
        panel.emit_canonical(&timing, &mut buf).unwrap();
        let schema = Schema { dose: "exposure".into(), ..Schema::default() };
        let reloaded = PanelDataset::load_csv(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(panel, reloaded);
    }

    #[test]
    fn two_period_decompositions_share_beta(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(12..60usize);
        let atoms = [0.0, 0.5, 1.5, 3.0];
        let mut doses = Vec::with_capacity(n);
        let mut deltas = Vec::with_capacity(n);
        for i in 0..n {
            let d = if i < atoms.len() { atoms[i] } else { atoms[rng.random_range(0..atoms.len())] };
            doses.push(d);
            deltas.push(rng.random_range(-3.0..3.0) + d * rng.random_range(0.0..2.0));
        }
        let panel = TwoPeriodPanel::from_columns(doses, deltas, GridConfig::default()).unwrap();
        let beta = twfe_beta_2p(&panel).unwrap();
        let mech = decompose_mechanical(&panel).unwrap();
        let wald = decompose_wald2x2(&panel).unwrap();
        prop_assert!((mech.beta_twfe - wald.beta_twfe).abs() < 1e-8);
        prop_assert!(mech.residual.abs() < 1e-8);
        prop_assert!(wald.residual.abs() < 1e-8);
        prop_assert_eq!(beta, mech.beta_twfe);
    }

    #[test]
    fn exposure_paths_are_step_functions((t_max, arms, seed) in panel_strategy()) {
        let panel = build_panel(t_max, &arms, seed);
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
        for u in 0..panel.n_units() {
            let g = timing.group_of(u);
            let d = panel.unit_dose(u);
            for t in 1..=panel.n_periods() {
                let expect = if t >= g { d } else { 0.0 };
                prop_assert_eq!(panel.exposure(u, t), expect);
            }
        }
    }
}

#[test]
fn two_period_beta_matches_dense_ols_on_stacked_panel() {
    // The first-difference slope equals the full two-way dummy fit.
    let (panel, _) =
        dose_did::simlab::generate(&dose_did::simlab::DgpSpec::two_period_exponential(99)).unwrap();
    let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure).unwrap();
    let two = TwoPeriodPanel::new(&panel, GridConfig::default()).unwrap();
    let beta = twfe_beta_2p(&two).unwrap();
    let dense = dense_twfe_beta(&panel, &timing);
    assert!((beta - dense).abs() < 1e-10, "{beta} vs {dense}");
}
