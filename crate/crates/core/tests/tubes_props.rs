use hflab::grid::GridSpec;
use hflab::tubes::{
    kakeya_ratio, overlap_field, product_lq_norm, random_transversal_families, rescale_to_width_one,
    sharpness_family, transversal_grid, transversality_nu, Tube, TubeFamily,
};
use proptest::prelude::*;

fn unit_square_grid(pts: usize) -> GridSpec {
    GridSpec::new(vec![0.5, 0.5], 0.5, pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overlap_field_counts_containing_tubes(
        specs in prop::collection::vec((0.2f64..0.8, 0.2f64..0.8, -0.3f64..0.3, 0.05f64..0.3, 0.2f64..0.8), 1..6),
    ) {
        let width = specs[0].3;
        let tubes: Vec<Tube> = specs.iter()
            .map(|&(cx, cy, tilt, _, half)| Tube::new(vec![cx, cy], &[1.0, tilt], width, Some(half.max(width))).unwrap())
            .collect();
        let fam = TubeFamily::new(tubes.clone(), &[1.0, 0.0], 0.5).unwrap();
        let grid = GridSpec::new(vec![0.5, 0.5], 1.0, 40).unwrap();
        let field = overlap_field(&fam, &grid).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let x = [grid.coord(0, i), grid.coord(1, j)];
                let want = tubes.iter().filter(|t| t.contains(&x)).count() as f64;
                prop_assert_eq!(field.values[grid.flat_index(&[i, j])], want);
            }
        }
    }

    #[test]
    fn repetition_leaves_the_ratio_unchanged(seed in 0u64..1000, j in 0usize..2, q in 1.2f64..4.0) {
        let mut fams = random_transversal_families(2, 1.0 / 16.0, 0.2, seed).unwrap();
        let grid = transversal_grid(2, 128).unwrap();
        let before = kakeya_ratio(&fams, q, &grid).unwrap();
        fams[j] = fams[j].repeated(2).unwrap();
        let after = kakeya_ratio(&fams, q, &grid).unwrap();
        prop_assert!((after.lhs - 2.0 * before.lhs).abs() <= 1e-12 * after.lhs);
        prop_assert!((after.ratio - before.ratio).abs() <= 1e-12 * before.ratio);
    }

    #[test]
    fn axes_stay_in_their_caps(seed in 0u64..1000, radius in 0.0f64..0.5) {
        let fams = random_transversal_families(3, 0.125, radius, seed).unwrap();
        for (j, f) in fams.iter().enumerate() {
            for t in f.tubes() {
                let norm: f64 = t.axis().iter().map(|a| a * a).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() <= 1e-12);
                let c = t.axis()[j].abs();
                prop_assert!(c >= (1.0 - radius * radius).sqrt() - 1e-12);
            }
        }
        prop_assert!(transversality_nu(&fams).unwrap().is_valid());
    }
}

#[test]
fn sharpness_families_partition_the_unit_square() {
    for m in [4usize, 8, 16] {
        let fams = sharpness_family(2, 2, 1.0 / m as f64).unwrap();
        // 7 nodes per cell keeps every node off the tube boundaries
        let grid = unit_square_grid(7 * m);
        for f in &fams {
            let field = overlap_field(f, &grid).unwrap();
            assert!(field.values.iter().all(|&v| v == 1.0));
        }
    }
}

#[test]
fn sharpness_partition_in_three_dimensions() {
    let fams = sharpness_family(3, 3, 0.25).unwrap();
    let grid = GridSpec::new(vec![0.5; 3], 0.5, 28).unwrap();
    for f in &fams {
        assert_eq!(f.len(), 16);
        assert!(overlap_field(f, &grid).unwrap().values.iter().all(|&v| v == 1.0));
    }
}

#[test]
fn rescaling_keeps_the_ratio() {
    for seed in 1..=3 {
        for delta in [0.125, 0.0625] {
            let fams = random_transversal_families(2, delta, 0.2, seed).unwrap();
            let grid = transversal_grid(2, 256).unwrap();
            let scaled: Vec<TubeFamily> = fams.iter().map(|f| rescale_to_width_one(f).unwrap()).collect();
            let sgrid = grid.scaled(1.0 / delta).unwrap();
            for q in [2.0, 3.0] {
                let a = kakeya_ratio(&fams, q, &grid).unwrap().ratio;
                let b = kakeya_ratio(&scaled, q, &sgrid).unwrap().ratio;
                assert!((a - b).abs() <= 0.03 * a, "seed {seed} delta {delta} q {q}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn q_sweep_has_no_jumps() {
    let fams = random_transversal_families(2, 1.0 / 16.0, 0.2, 4).unwrap();
    let grid = transversal_grid(2, 256).unwrap();
    let fields: Vec<_> = fams.iter().map(|f| overlap_field(f, &grid).unwrap()).collect();
    let lhs = |q: f64| product_lq_norm(&fields, q).unwrap();
    let mut q = 1.2;
    while q < 6.0 {
        let (a, m, b) = (lhs(q), lhs(q + 0.05), lhs(q + 0.1));
        assert!((m - 0.5 * (a + b)).abs() <= 0.01 * m, "q = {q}: {a} {m} {b}");
        q += 0.1;
    }
    let inf = product_lq_norm(&fields, f64::INFINITY).unwrap();
    assert!(inf.is_finite() && inf >= 1.0);
    let r = kakeya_ratio(&fams, f64::INFINITY, &grid).unwrap();
    assert!((r.rhs - (16.0 * 16.0)).abs() < 1e-12);
}

#[test]
fn parallel_partition_hits_the_endpoint() {
    for m in [8usize, 16, 32] {
        let fams = sharpness_family(2, 2, 1.0 / m as f64).unwrap();
        let grid = unit_square_grid(512);
        let r = kakeya_ratio(&fams, 2.0, &grid).unwrap();
        assert!((r.ratio - 1.0).abs() <= 0.02, "m = {m}: {}", r.ratio);
    }
}

#[test]
fn width_one_is_a_fixed_point_of_rescaling() {
    let t = Tube::new(vec![0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 1.0, None).unwrap();
    let f = TubeFamily::new(vec![t], &[0.0, 0.0, 1.0], 0.0).unwrap();
    assert_eq!(rescale_to_width_one(&f).unwrap(), f);
}
