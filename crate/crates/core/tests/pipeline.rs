//! End-to-end behaviour through the public API.

use actiscan_core::agent::{
    reliability_score, score_all_candidates, select_topk_in_range, ConstantScorer, CountingScorer,
    OracleScorer, SelectionState,
};
use actiscan_core::metrics::MetricReport;
use actiscan_core::phantom::{off_center_suite, render_phantom, rescale_unit, shepp_logan};
use actiscan_core::policy::{
    EpisodeRunner, MeasurementSource, NoiseConfig, PolicyConfig, PolicyKind,
};
use actiscan_core::projector::{backproject, forward_project, forward_project_all};
use actiscan_core::recon::{Reconstructor, SartConfig};
use actiscan_core::{angular_distance, AngleSet, Geometry, Image, Sinogram};
use proptest::prelude::*;

fn geom(n: usize, t: usize) -> Geometry {
    Geometry::new(n, n, t, 180.0).unwrap().scaled(2.0 / n as f64).unwrap()
}

fn fast_recon() -> Reconstructor {
    Reconstructor {
        sart: SartConfig {
            num_iterations: 8,
            ..SartConfig::default()
        },
        ..Reconstructor::default()
    }
}

#[test]
fn noisy_scan_reconstructs_worse_than_clean() {
    let g = geom(32, 60);
    let img = shepp_logan(32, 32).unwrap();
    let r = fast_recon();
    let angles = AngleSet::new((0..60).step_by(3).collect(), 60).unwrap();
    let psnr_at = |noise| {
        let src = MeasurementSource::simulate(&img, &g, noise).unwrap();
        let rec = r.reconstruct(&src.measure_set(&angles).unwrap(), &g).unwrap();
        MetricReport::evaluate(&img, &rec, None).unwrap().psnr
    };
    let clean = psnr_at(None);
    let l1 = psnr_at(Some(NoiseConfig { photons: 5e5, seed: 1 }));
    let low = psnr_at(Some(NoiseConfig { photons: 2e2, seed: 1 }));
    assert!(clean > 15.0, "{clean}");
    assert!(l1 > low + 1.0, "L1 {l1} vs 200 photons {low}");
    assert!(clean >= l1 - 0.05, "clean {clean} vs L1 {l1}");
}

#[test]
fn every_policy_respects_the_budget() {
    let g = geom(24, 36);
    let img = rescale_unit(&render_phantom(&off_center_suite(1)[0], 24, 24).unwrap());
    let src = MeasurementSource::simulate(&img, &g, None).unwrap();
    let r = fast_recon();
    let oracle = OracleScorer::new(src.clean_rows());
    for kind in PolicyKind::ALL {
        let cfg = PolicyConfig {
            k0: 3,
            k_max: 7,
            ..PolicyConfig::with_kind(kind)
        };
        let trace = EpisodeRunner::new(&r, &oracle).run(&src, &cfg).unwrap();
        assert_eq!(trace.angles.len(), 7, "{kind}");
        assert_eq!(trace.picks.len(), 7, "{kind}");
        let mut seen: Vec<usize> = trace.picks.iter().map(|p| p.angle).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 7, "{kind} resampled an angle");
        assert!(trace.final_metrics().is_some());
    }
}

#[test]
fn active_episode_scores_once_per_active_step() {
    let g = geom(16, 24);
    let img = shepp_logan(16, 16).unwrap();
    let src = MeasurementSource::simulate(&img, &g, None).unwrap();
    let r = fast_recon();
    let scorer = CountingScorer::new(ConstantScorer(0.5));
    let cfg = PolicyConfig {
        k0: 4,
        k: 2,
        k_max: 10,
        ..PolicyConfig::with_kind(PolicyKind::Sas)
    };
    EpisodeRunner::new(&r, &scorer).run(&src, &cfg).unwrap();
    assert_eq!(scorer.calls(), 3);
}

#[test]
fn oracle_scores_are_perfect_on_ground_truth() {
    let g = geom(16, 20);
    let img = shepp_logan(16, 16).unwrap();
    let rows = forward_project_all(&img, &g).unwrap();
    let scores = score_all_candidates(&img, &OracleScorer::new(rows), &g).unwrap();
    assert!(scores.iter().all(|&s| s == 1.0));
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed | 1;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projector_adjointness(seed in any::<u64>(), n in 4usize..12, t in 1usize..16) {
        let g = geom(n, t);
        let x = Image::from_vec(n, n, pseudo_random(n * n, seed)).unwrap();
        let mut y = Sinogram::empty(g);
        for a in 0..t {
            y.insert_row(a, pseudo_random(g.num_detectors, seed ^ (a as u64 + 1) * 0x9e37)).unwrap();
        }
        let ax = forward_project(&x, &g, &g.all_angles()).unwrap();
        let aty = backproject(&y, &g).unwrap();
        let lhs = ax.dot(&y);
        let rhs = x.dot(&aty);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn reliability_in_unit_interval(a in proptest::collection::vec(-1e3f64..1e3, 1..40), shift in -5.0f64..5.0) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let s = reliability_score(&a, &b).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
        prop_assert_eq!(s == 1.0, shift == 0.0 || a.iter().zip(&b).all(|(x, y)| x == y));
    }

    #[test]
    fn selection_stays_in_window(
        scores in proptest::collection::vec(0.0f64..1.0, 36),
        sampled in proptest::collection::btree_set(0usize..36, 1..30),
        p in 0.0f64..20.0,
        span in 0.0f64..40.0,
        k in 1usize..4,
    ) {
        let g = geom(8, 36);
        let q = (p + span).min(90.0);
        let sampled: Vec<usize> = sampled.into_iter().collect();
        let last = sampled[sampled.len() / 2];
        let mut state = SelectionState::new(AngleSet::new(sampled.clone(), 36).unwrap(), (p, q), &g).unwrap();
        state.last_selected = Some(last);
        match select_topk_in_range(&scores, &state, k, &g) {
            Ok(sel) => {
                prop_assert_eq!(sel.picks.len(), k);
                for (a, _) in &sel.picks {
                    prop_assert!(!sampled.contains(a));
                    let d = angular_distance(*a, last, &g).unwrap();
                    prop_assert!(d >= sel.window.0 - 1e-9 && d <= sel.window.1 + 1e-9);
                }
                prop_assert_eq!(sel.fallback, sel.window != (p, q));
                for w in sel.picks.windows(2) {
                    prop_assert!(w[0].1 >= w[1].1);
                }
            }
            Err(e) => prop_assert!(36 - sampled.len() < k, "{e}"),
        }
    }
}
