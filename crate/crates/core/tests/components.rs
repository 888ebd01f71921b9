mod common;

use common::*;
use pclm::{
    aggregate, build_bspline_basis, build_composition, build_difference_matrix, build_penalty, BasisSpec, GroupingSpec,
    NdArray, PenaltySpec,
};
use proptest::prelude::*;

/// Cox-de Boor recursion on equally spaced knots extended `deg` steps past each end.
fn cox_de_boor(x: f64, xmin: f64, xmax: f64, n_intervals: usize, deg: usize) -> Vec<f64> {
    let dx = (xmax - xmin) / n_intervals as f64;
    let knot = |j: usize| xmin + (j as f64 - deg as f64) * dx;
    let n_knots = n_intervals + 2 * deg + 1;
    // the closed right end belongs to the last interior interval
    let q = (((x - xmin) / dx).floor() as usize).min(n_intervals - 1) + deg;
    let mut b: Vec<f64> = (0..n_knots - 1).map(|j| if j == q { 1.0 } else { 0.0 }).collect();
    for k in 1..=deg {
        let next: Vec<f64> = (0..n_knots - 1 - k)
            .map(|j| {
                let left = (x - knot(j)) / (knot(j + k) - knot(j)) * b[j];
                let right = (knot(j + k + 1) - x) / (knot(j + k + 1) - knot(j + 1)) * b[j + 1];
                left + right
            })
            .collect();
        b = next;
    }
    b
}

#[test]
fn cubic_basis_matches_recursion() {
    let (xmin, xmax, n_int) = (0.0, 19.0, 5);
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let spec = BasisSpec::new(xmin, xmax, n_int, 3).unwrap();
    let b = build_bspline_basis(&spec, &x).unwrap();
    assert_eq!((b.rows(), b.cols()), (20, 8));
    for (i, &xi) in x.iter().enumerate() {
        let want = cox_de_boor(xi, xmin, xmax, n_int, 3);
        for j in 0..8 {
            assert!((b[(i, j)] - want[j]).abs() < 1e-12, "row {i} col {j}: {} vs {}", b[(i, j)], want[j]);
        }
    }
}

proptest! {
    #[test]
    fn basis_rows_partition_unity(
        n_int in 1usize..12,
        deg in 0usize..4,
        lo in -50.0f64..50.0,
        width in 0.5f64..100.0,
        u in prop::collection::vec(0.0f64..=1.0, 1..30),
    ) {
        let spec = BasisSpec::new(lo, lo + width, n_int, deg).unwrap();
        let x: Vec<f64> = u.iter().map(|t| lo + t * width).collect();
        let b = build_bspline_basis(&spec, &x).unwrap();
        for i in 0..x.len() {
            let row = b.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= -1e-15));
            prop_assert!(row.iter().filter(|&&v| v != 0.0).count() <= deg + 1);
        }
    }

    #[test]
    fn basis_matches_recursion_anywhere(n_int in 1usize..10, deg in 1usize..4, u in 0.0f64..=1.0) {
        let spec = BasisSpec::new(2.0, 7.0, n_int, deg).unwrap();
        let x = 2.0 + 5.0 * u;
        let b = build_bspline_basis(&spec, &[x]).unwrap();
        prop_assert!(max_abs_vec(&b.row(0), &cox_de_boor(x, 2.0, 7.0, n_int, deg)) < 1e-12);
    }

    #[test]
    fn compositions_have_unit_column_sums(m in 1usize..30, seed in any::<u64>()) {
        let mut r = rng(seed);
        let comp = random_grouping(&mut r, m, 1);
        let c = comp.matrix();
        for j in 0..m {
            prop_assert_eq!((0..c.rows()).map(|i| c[(i, j)]).sum::<f64>(), 1.0);
        }
        prop_assert!(c.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn aggregate_matches_nested_loops(seed in any::<u64>(), d in 1usize..=3) {
        let mut r = rng(seed);
        let m: Vec<usize> = (0..d).map(|k| 3 + (seed as usize >> (4 * k)) % 5).collect();
        let comps: Vec<_> = m.iter().map(|&mk| random_grouping(&mut r, mk, 1)).collect();
        let fine = random_array(&mut r, &m, 0.0, 10.0);
        let got = aggregate(&fine, &comps).unwrap();
        let n: Vec<usize> = comps.iter().map(|c| c.n_groups()).collect();
        let mut want = NdArray::zeros(n.clone()).unwrap();
        let total: usize = m.iter().product();
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            let g: Vec<usize> = idx.iter().zip(&comps).map(|(&i, c)| c.grouping().group_of(i)).collect();
            let v = want.get(&g) + fine.get(&idx);
            want.set(&g, v);
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < m[k] { break; }
                idx[k] = 0;
            }
        }
        prop_assert!(got.max_abs_diff(&want) < 1e-12);
        prop_assert!((got.sum() - fine.sum()).abs() < 1e-9);
    }

    #[test]
    fn penalty_annihilates_affine_coefficients(
        c in prop::collection::vec(3usize..7, 1..=3),
        lambdas in prop::collection::vec(0.01f64..100.0, 3),
        coef in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let d = c.len();
        let spec = PenaltySpec::new(lambdas[..d].to_vec(), 2).unwrap();
        let p = build_penalty(&c, &spec).unwrap();
        let total: usize = c.iter().product();
        prop_assert_eq!((p.rows(), p.cols()), (total, total));
        prop_assert_eq!(p.asymmetry(), 0.0);
        // affine in each index direction
        let alpha = NdArray::from_fn(c.clone(), |i| {
            coef[0] + i.iter().zip(&coef[1..]).map(|(&ik, s)| s * ik as f64).sum::<f64>()
        }).unwrap();
        let pa = matvec(&p, alpha.data());
        prop_assert!(pa.iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn penalty_is_positive_semidefinite() {
    let spec = PenaltySpec::new(vec![3.0, 0.5], 2).unwrap();
    let p = build_penalty(&[5, 4], &spec).unwrap();
    let mut r = rng(3);
    for _ in 0..50 {
        let v = random_array(&mut r, &[20], -1.0, 1.0);
        let q: f64 = matvec(&p, v.data()).iter().zip(v.data()).map(|(a, b)| a * b).sum();
        assert!(q >= -1e-12);
    }
}

#[test]
fn penalty_matches_kronecker_definition() {
    let spec = PenaltySpec::new(vec![2.0, 7.0], 2).unwrap();
    let p = build_penalty(&[4, 5], &spec).unwrap();
    let dd = |c: usize| {
        let d = build_difference_matrix(c, 2).unwrap();
        mul(&transpose(&d), &d)
    };
    let eye = |n: usize| pclm::DenseMatrix::identity(n);
    let want = add(&kron(&eye(5), &dd(4)).scale(2.0), &kron(&dd(5), &eye(4)).scale(7.0));
    assert!(max_abs(&p, &want) < 1e-12);
}

#[test]
fn grouping_round_trip_for_five_year_bands() {
    let g = GroupingSpec::uniform(95, 5).unwrap();
    assert_eq!(g.n_groups(), 19);
    let c = build_composition(&g, 95).unwrap();
    assert_eq!((c.n_groups(), c.n_fine()), (19, 95));
    assert_eq!(g.group_of(94), 18);
    assert_eq!(g.group_range(3), 15..20);
}
