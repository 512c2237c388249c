use proptest::prelude::*;
use qrt_core::experiments::ConfusionCounts;
use qrt_core::raw_readout::{calibrate, classify, evaluate_labeled, population};
use qrt_core::signal::Eigenstate;
use qrt_core::{seed, IqPoint};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

fn cloud(center: IqPoint, s: f64, n: usize, seed_value: u64) -> Vec<IqPoint> {
    let mut rng = seed::rng(seed_value);
    let d = Normal::new(0.0, s).unwrap();
    (0..n)
        .map(|_| IqPoint::new(center.i + d.sample(&mut rng), center.q + d.sample(&mut rng)))
        .collect()
}

fn fidelity_on(
    ground: &[IqPoint],
    excited: &[IqPoint],
    test_g: &[IqPoint],
    test_e: &[IqPoint],
) -> f64 {
    let d = calibrate(ground, excited).unwrap();
    let mut pts = test_g.to_vec();
    pts.extend_from_slice(test_e);
    let mut labels = vec![Eigenstate::Ground; test_g.len()];
    labels.extend(vec![Eigenstate::Excited; test_e.len()]);
    evaluate_labeled(&d, &pts, &labels).unwrap().assignment_fidelity().unwrap()
}

#[test]
fn gaussian_overlap_matches_closed_form() {
    let phi = StdNormal::new(0.0, 1.0).unwrap();
    let n = 10_000;
    for (k, (d, s)) in [(2.0, 1.0), (1.0, 1.0), (3.0, 0.8)].into_iter().enumerate() {
        let k = k as u64 * 10;
        // centroids placed off-axis so the discriminant has to find the direction
        let g = IqPoint::new(0.3, -0.2);
        let e = IqPoint::new(0.3 + d * 0.6, -0.2 + d * 0.8);
        let fa = fidelity_on(
            &cloud(g, s, n, k),
            &cloud(e, s, n, k + 1),
            &cloud(g, s, n, k + 2),
            &cloud(e, s, n, k + 3),
        );
        let expected = phi.cdf(d / (2.0 * s));
        assert!((fa - expected).abs() <= 0.01, "d={d} s={s}: {fa} vs {expected}");
    }
}

#[test]
fn jittered_pair_gives_unit_axis_and_midpoint() {
    let g = [IqPoint::new(0.0, 1e-9), IqPoint::new(0.0, -1e-9)];
    let e = [IqPoint::new(2.0, 1e-9), IqPoint::new(2.0, -1e-9)];
    let d = calibrate(&g, &e).unwrap();
    assert!((d.axis.i - 1.0).abs() < 1e-12 && d.axis.q.abs() < 1e-12);
    assert!((d.threshold - 1.0).abs() < 1e-12);
    assert_eq!(classify(&d, &d.mu_e), Eigenstate::Excited);
    assert_eq!(classify(&d, &d.mu_g), Eigenstate::Ground);
    assert_eq!(classify(&d, &IqPoint::new(1.0, 5.0)), Eigenstate::Ground);

    let swapped = calibrate(&e, &g).unwrap();
    assert!((swapped.axis.i + 1.0).abs() < 1e-12);
    for x in [0.2, 0.9, 1.1, 1.8] {
        let p = IqPoint::new(x, 0.3);
        assert_eq!(classify(&d, &p), classify(&swapped, &p).flipped());
    }
}

#[test]
fn coincident_centroids_rejected() {
    let pts = [IqPoint::new(1.0, 1.0), IqPoint::new(1.0, 1.0)];
    assert!(calibrate(&pts, &pts).is_err());
    assert!(calibrate(&pts[..1], &[IqPoint::new(2.0, 0.0); 2]).is_err());
}

#[test]
fn population_cases() {
    let g = cloud(IqPoint::new(0.0, 0.0), 0.1, 50, 1);
    let e = cloud(IqPoint::new(2.0, 0.0), 0.1, 50, 2);
    let d = calibrate(&g, &e).unwrap();
    assert_eq!(population(&d, &vec![d.mu_e; 20]).unwrap().mean, 1.0);
    let mut half = vec![d.mu_g; 10];
    half.extend(vec![d.mu_e; 10]);
    assert_eq!(population(&d, &half).unwrap().mean, 0.5);
    assert!(population(&d, &[]).is_err());

    let mut rng = seed::rng(77);
    let pts: Vec<IqPoint> = (0..600)
        .map(|_| if rng.random::<f64>() < 0.3 { d.mu_e } else { d.mu_g })
        .collect();
    let est = population(&d, &pts).unwrap();
    assert!((est.mean - 0.3).abs() <= 0.04, "{}", est.mean);
    assert!(est.variance > 0.0);
}

fn assignments(g: &[IqPoint], e: &[IqPoint], test: &[IqPoint]) -> Vec<Eigenstate> {
    let d = calibrate(g, e).unwrap();
    test.iter().map(|p| classify(&d, p)).collect()
}

fn transform(pts: &[IqPoint], f: impl Fn(&IqPoint) -> IqPoint) -> Vec<IqPoint> {
    pts.iter().map(f).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rigid_and_scale_invariance(
        angle in -3.1..3.1f64,
        tx in -5.0..5.0f64,
        ty in -5.0..5.0f64,
        scale in 0.1..10.0f64,
        seed_value in 0u64..1000,
    ) {
        let g = cloud(IqPoint::new(0.0, 0.0), 0.7, 40, seed_value);
        let e = cloud(IqPoint::new(1.5, 0.5), 0.7, 40, seed_value + 1);
        let test = cloud(IqPoint::new(0.75, 0.25), 1.0, 200, seed_value + 2);
        let base = assignments(&g, &e, &test);

        let d = calibrate(&g, &e).unwrap();
        // drop points too close to the boundary for rounding to matter
        let margin = |p: &IqPoint| (p.dot(&d.axis) - d.threshold).abs() > 1e-9;
        let keep: Vec<usize> = (0..test.len()).filter(|&i| margin(&test[i])).collect();

        let rigid = |p: &IqPoint| { let r = p.rotate(angle); IqPoint::new(r.i + tx, r.q + ty) };
        let moved = assignments(&transform(&g, rigid), &transform(&e, rigid), &transform(&test, rigid));
        let scaled_fn = |p: &IqPoint| IqPoint::new(p.i * scale, p.q * scale);
        let scaled = assignments(&transform(&g, scaled_fn), &transform(&e, scaled_fn), &transform(&test, scaled_fn));
        for &i in &keep {
            prop_assert_eq!(base[i], moved[i]);
            prop_assert_eq!(base[i], scaled[i]);
        }
    }

    #[test]
    fn confusion_relabel_symmetry(a in 0u64..500, b in 0u64..500, c in 0u64..500, d in 0u64..500) {
        let counts = ConfusionCounts { n_g_given_g: a + 1, n_e_given_g: b, n_g_given_e: c, n_e_given_e: d + 1 };
        let x = counts.assignment_fidelity().unwrap();
        prop_assert_eq!(x, counts.relabeled().assignment_fidelity().unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
    }
}
