use faer::Mat;
use itertools::Itertools;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mrsense::grid::GridSpec;
use mrsense::library::ModeLibrary;
use mrsense::reconstruct::{
    amplification, exhaustive_oracle, reconstruct_field, reconstruct_from_cells, sensor_readings, subset_error,
};
use mrsense::sensors::{pivoted_qr, place_sensors};
use mrsense::Error;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Greedy selection by explicit projection: at each step take the column
/// with the largest component orthogonal to the columns already chosen.
fn projection_pivots(a: &Mat<f64>, steps: usize) -> (Vec<usize>, Vec<f64>) {
    let cols: Vec<Vec<f64>> = (0..a.ncols()).map(|j| a.col(j).iter().copied().collect()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut chosen, mut norms) = (Vec::new(), Vec::new());
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    for _ in 0..steps {
        let residual = |c: &Vec<f64>| {
            let mut r = c.clone();
            // Two passes of Gram–Schmidt against the chosen directions.
            for _ in 0..2 {
                for q in &basis {
                    let s = dot(&r, q);
                    r.iter_mut().zip(q).for_each(|(x, y)| *x -= s * y);
                }
            }
            r
        };
        let (best, r) = (0..cols.len())
            .filter(|j| !chosen.contains(j))
            .map(|j| (j, residual(&cols[j])))
            .max_by(|a, b| dot(&a.1, &a.1).total_cmp(&dot(&b.1, &b.1)))
            .unwrap();
        let norm = dot(&r, &r).sqrt();
        chosen.push(best);
        norms.push(norm);
        basis.push(r.iter().map(|x| x / norm).collect());
    }
    (chosen, norms)
}

#[test]
fn pivots_of_a_known_matrix() {
    // Column 2 is longest; after removing it, column 0 keeps the most.
    let a = Mat::from_fn(3, 4, |i, j| [[1.0, 0.0, 3.0, 0.1], [0.0, 1.0, 0.0, 0.1], [2.0, 0.5, 0.0, 0.0]][i][j]);
    let qr = pivoted_qr(a.as_ref());
    assert_eq!(qr.pivots, vec![2, 0, 1]);
    assert!((qr.r_diag[0] - 3.0).abs() < 1e-15);
    assert!((qr.r_diag[1] - 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pivots_match_projection_oracle(rows in 2usize..7, cols in 2usize..12, seed in any::<u64>()) {
        let a = gaussian(rows, cols, seed);
        let steps = rows.min(cols);
        let qr = pivoted_qr(a.as_ref());
        let (want, norms) = projection_pivots(&a, steps);
        prop_assert_eq!(&qr.pivots, &want);
        for (got, want) in qr.r_diag.iter().zip(&norms) {
            prop_assert!((got - want).abs() <= 1e-10 * want.max(1.0));
        }
        prop_assert!(qr.r_diag.windows(2).all(|w| w[0] >= w[1] * (1.0 - 1e-12)));
    }

    #[test]
    fn fields_in_the_span_are_recovered_exactly(n in 6usize..40, r in 1usize..6, m in 1usize..5, seed in any::<u64>()) {
        prop_assume!(r <= n);
        let library = ModeLibrary::from_basis(gaussian(n, r, seed)).unwrap();
        let grid = GridSpec::full(1, n, 1.0).unwrap();
        let sensors = place_sensors(&library, &grid, r).unwrap();
        let coeffs = gaussian(r, m, seed ^ 0x5eed);
        let x = library.basis() * &coeffs;
        let rec = reconstruct_field(&library, &sensors, sensor_readings(x.as_ref(), &sensors.pivots).as_ref()).unwrap();
        prop_assert_eq!(rec.rank, r);
        prop_assert!((&rec.fields - &x).norm_l2() <= 1e-8 * x.norm_l2().max(1e-300));
    }

    #[test]
    fn oracle_never_loses_to_the_pivots(n in 3usize..10, r in 1usize..4, seed in any::<u64>()) {
        prop_assume!(r <= n);
        let psi = ModeLibrary::from_basis(gaussian(n, r, seed)).unwrap();
        let psi = psi.basis();
        let test = psi * gaussian(r, 6, seed + 1) + gaussian(n, 6, seed + 2) * faer::Scale(0.1);
        let pivots = pivoted_qr(psi.transpose()).pivots;
        let oracle = exhaustive_oracle(psi.as_ref(), r, Some(test.as_ref())).unwrap();
        prop_assert_eq!(oracle.subsets_evaluated, (0..n).combinations(r).count());
        let (_, best_amp) = &oracle.best_amplification;
        prop_assert!(*best_amp <= amplification(psi.as_ref(), &pivots).unwrap() * (1.0 + 1e-12));
        let (best_set, best_err) = oracle.best_test_error.unwrap();
        // Absolute slack: with p = n both errors are rounding noise.
        prop_assert!(best_err <= subset_error(psi.as_ref(), &pivots, test.as_ref()).unwrap() * (1.0 + 1e-12) + 1e-12);
        prop_assert!((subset_error(psi.as_ref(), &best_set, test.as_ref()).unwrap() - best_err).abs() < 1e-12);
    }
}

#[test]
fn fewer_sensors_than_modes_is_refused() {
    let basis = gaussian(10, 3, 1);
    let y = Mat::<f64>::zeros(2, 1);
    assert!(matches!(
        reconstruct_from_cells(basis.as_ref(), &[0, 1], y.as_ref()),
        Err(Error::Underdetermined { .. })
    ));
}

#[test]
fn oracle_enforces_its_bounds() {
    let big = gaussian(17, 2, 1);
    assert!(exhaustive_oracle(big.as_ref(), 2, None).is_err());
    let wide = gaussian(10, 5, 1);
    assert!(exhaustive_oracle(wide.as_ref(), 5, None).is_err());
    let ok = gaussian(10, 2, 1);
    assert!(exhaustive_oracle(ok.as_ref(), 0, None).is_err());
}

#[test]
fn more_sensors_than_cells_is_refused() {
    let library = ModeLibrary::from_basis(gaussian(5, 5, 2)).unwrap();
    let grid = GridSpec::full(1, 5, 1.0).unwrap();
    assert!(matches!(place_sensors(&library, &grid, 6), Err(Error::TooManySensors { .. })));
    let sensors = place_sensors(&library, &grid, 5).unwrap();
    assert_eq!(sensors.pivots.iter().sorted().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
}
