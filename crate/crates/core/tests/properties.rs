use affine_recur::{
    ifs, log_phi, log_sum_phi, ordinary_pressure, singular_values, AffineSystem, CylinderMeasure, LengthSchedule,
    Matrix, TargetPoint, Word,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn matrix_strategy(d: usize, scale: f64) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-scale..scale, d * d).prop_map(move |e| Matrix::new(d, e).unwrap())
}

fn contraction_strategy(d: usize) -> impl Strategy<Value = Matrix<f64>> {
    // Entries below 0.45/d keep every column norm, hence σ₁, under 0.45.
    matrix_strategy(d, 0.45 / d as f64).prop_filter("invertible", |m| m.determinant().abs() > 1e-4)
}

/// `Q₁ · diag(σ) · Q₂` with `σᵢ ∈ [0.25, 0.45]`, so long products stay
/// well conditioned and the oracle SVD resolves every singular value.
fn conditioned_strategy(d: usize) -> impl Strategy<Value = Matrix<f64>> {
    (
        prop::collection::vec(-1.0..1.0f64, d * d),
        prop::collection::vec(-1.0..1.0f64, d * d),
        prop::collection::vec(0.25..0.45f64, d),
    )
        .prop_filter_map("degenerate draw", move |(a, b, sv)| {
            let qa = DMatrix::from_row_slice(d, d, &a).qr().q();
            let qb = DMatrix::from_row_slice(d, d, &b).qr().q();
            let m = qa * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sv)) * qb;
            let row_major: Vec<f64> = m.transpose().iter().copied().collect();
            Matrix::new(d, row_major).ok().filter(|m| m.determinant().abs() > 1e-6)
        })
}

fn conditioned_system(d: usize, max_maps: usize) -> impl Strategy<Value = AffineSystem<f64>> {
    prop::collection::vec(conditioned_strategy(d), 2..=max_maps).prop_map(|ms| AffineSystem::from_linear(ms).unwrap())
}

fn system_strategy(d: usize, max_maps: usize) -> impl Strategy<Value = AffineSystem<f64>> {
    prop::collection::vec(contraction_strategy(d), 2..=max_maps).prop_map(|ms| AffineSystem::from_linear(ms).unwrap())
}

fn oracle_singular_values(m: &Matrix<f64>) -> Vec<f64> {
    let d = m.dim();
    let mut sv: Vec<f64> = DMatrix::from_row_slice(d, d, m.entries()).singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn oracle_phi(t: f64, m: &Matrix<f64>) -> f64 {
    let sv = oracle_singular_values(m);
    let whole = t.floor() as usize;
    let frac = t - whole as f64;
    let mut phi: f64 = sv[..whole.min(sv.len())].iter().product();
    if whole < sv.len() && frac > 0.0 {
        phi *= sv[whole].powf(frac);
    }
    phi
}

/// `log Σ_{|w|=k} φᵗ(T_w T_suffix)` by forming every product explicitly.
fn oracle_log_sum_phi(sys: &AffineSystem<f64>, t: f64, k: usize, suffix: &Word) -> f64 {
    let m = sys.len();
    let d = sys.dim();
    let to_na = |a: &Matrix<f64>| DMatrix::from_row_slice(d, d, a.entries());
    let mut tail = DMatrix::identity(d, d);
    for &l in suffix.letters() {
        tail *= to_na(sys.linear(l));
    }
    let mut total = 0.0;
    for index in 0..(m as u64).pow(k as u32) {
        let w = Word::from_index(index, k, m);
        let mut p = DMatrix::identity(d, d);
        for &l in w.letters() {
            p *= to_na(sys.linear(l));
        }
        p *= &tail;
        let row_major: Vec<f64> = p.transpose().iter().copied().collect();
        total += oracle_phi(t, &Matrix::new(d, row_major).unwrap());
    }
    total.ln()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn singular_values_match_oracle(m in (1usize..=4).prop_flat_map(|d| matrix_strategy(d, 3.0))) {
        let ours = singular_values(&m);
        let oracle = oracle_singular_values(&m);
        let scale = oracle[0].max(1e-300);
        for (a, b) in ours.values().iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{:?} vs {:?}", ours, oracle);
        }
    }

    #[test]
    fn phi_between_extreme_singular_values(
        (m, t) in (1usize..=3).prop_flat_map(|d| (contraction_strategy(d), 0.0..=d as f64)),
    ) {
        let sv = singular_values(&m);
        let lp = log_phi(t, &m).unwrap();
        let tol = 1e-9 * lp.abs().max(1.0);
        prop_assert!(t * sv.smallest().ln() <= lp + tol);
        prop_assert!(lp <= t * sv.largest().ln() + tol);
        prop_assert!((lp.exp() - oracle_phi(t, &m)).abs() <= 1e-9 * lp.exp());
    }

    #[test]
    fn phi_is_submultiplicative(
        (a, b, t) in (1usize..=3).prop_flat_map(|d| (contraction_strategy(d), contraction_strategy(d), 0.0..=d as f64)),
    ) {
        let ab = affine_recur::matrix_product(&a, &b).unwrap();
        let lhs = log_phi(t, &ab).unwrap();
        let rhs = log_phi(t, &a).unwrap() + log_phi(t, &b).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn sum_ratio_between_sigma_powers(
        (ms, t, delta) in (1usize..=3).prop_flat_map(|d| (
            prop::collection::vec(contraction_strategy(d), 1..6),
            0.0..(d as f64 - 0.05),
            0.0..0.05f64,
        )),
    ) {
        let num: f64 = ms.iter().map(|m| log_phi(t + delta, m).unwrap().exp()).sum();
        let den: f64 = ms.iter().map(|m| log_phi(t, m).unwrap().exp()).sum();
        let lo = ms.iter().map(|m| singular_values(m).smallest().powf(delta)).fold(f64::INFINITY, f64::min);
        let hi = ms.iter().map(|m| singular_values(m).largest().powf(delta)).fold(0.0, f64::max);
        let ratio = num / den;
        prop_assert!(lo * (1.0 - 1e-9) <= ratio && ratio <= hi * (1.0 + 1e-9));
    }

    #[test]
    fn cocycle_composes(sys in system_strategy(2, 3), a in prop::collection::vec(0usize..2, 0..6), b in prop::collection::vec(0usize..2, 0..6)) {
        let wa = Word::new(a, sys.len()).unwrap();
        let wb = Word::new(b, sys.len()).unwrap();
        let joined = sys.word_cocycle(&wa.concat(&wb).unwrap()).unwrap();
        let split = affine_recur::matrix_product(&sys.word_cocycle(&wa).unwrap(), &sys.word_cocycle(&wb).unwrap()).unwrap();
        for (x, y) in joined.entries().iter().zip(split.entries()) {
            prop_assert!((x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn log_sum_phi_matches_brute_force(
        sys in (1usize..=3).prop_flat_map(|d| conditioned_system(d, 3)),
        k in 1usize..=6,
        t_frac in 0.0..=1.0f64,
        suffix in prop::collection::vec(0usize..2, 0..3),
    ) {
        let t = t_frac * sys.dim() as f64;
        let suffix = Word::new(suffix, sys.len()).unwrap();
        let ours = log_sum_phi(&sys, t, k, &suffix).unwrap();
        let oracle = oracle_log_sum_phi(&sys, t, k, &suffix);
        prop_assert!((ours - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{} vs {}", ours, oracle);
    }

    #[test]
    fn bracket_is_ordered_and_refines(sys in system_strategy(2, 3), t in 0.0..=2.0f64) {
        let d = Some(1e-6);
        let shallow = ordinary_pressure(&sys, t, 4, d).unwrap();
        let deep = ordinary_pressure(&sys, t, 8, d).unwrap();
        prop_assert!(shallow.lower <= shallow.upper && deep.lower <= deep.upper);
        prop_assert!(deep.upper <= shallow.upper);
        prop_assert!(deep.lower >= shallow.lower);
    }

    #[test]
    fn pressure_strictly_decreasing(sys in system_strategy(2, 3), t in 0.0..1.9f64) {
        let a = log_sum_phi(&sys, t, 6, &Word::empty(sys.len())).unwrap();
        let b = log_sum_phi(&sys, t + 0.1, 6, &Word::empty(sys.len())).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn d_estimate_in_unit_interval(sys in system_strategy(2, 3), t in 0.0..=2.0f64) {
        let r = ifs::estimate_d(&sys, t, 3, 1 << 12).unwrap();
        prop_assert!(r.d_estimate > 0.0 && r.d_estimate <= 1.0);
        let deeper = ifs::estimate_d(&sys, t, 4, 1 << 16).unwrap();
        prop_assert!(deeper.d_estimate <= r.d_estimate + 1e-12);
    }

    #[test]
    fn projections_stay_in_invariant_ball(sys in system_strategy(2, 3), w in prop::collection::vec(0usize..2, 0..20)) {
        let w = Word::new(w, sys.len()).unwrap();
        let p = sys.project_word(&w).unwrap();
        let norm = p.point.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= sys.invariant_radius() * (1.0 + 1e-12));
    }

    #[test]
    fn schedules_are_monotone(
        kind in 0usize..4,
        param in 0.1..3.0f64,
        k in 1usize..5000,
    ) {
        let sched = match kind {
            0 => LengthSchedule::Linear { rate: param },
            1 => LengthSchedule::Power { alpha: if (param - 1.0).abs() < 1e-3 { 1.5 } else { param } },
            2 => LengthSchedule::Log { c: param },
            _ => LengthSchedule::LogCeil { c: param },
        };
        prop_assert!(sched.length(k) <= sched.length(k + 1));
        prop_assert!(sched.length(k) >= 1);
    }

    #[test]
    fn masses_are_level_consistent(
        sys in system_strategy(2, 3),
        t in 0.0..=2.0f64,
        q in prop::collection::vec(0usize..2, 0..5),
        kind in 0usize..3,
    ) {
        let m = sys.len();
        let j = TargetPoint::constant(1, m).unwrap();
        let sched = LengthSchedule::Linear { rate: 0.5 };
        let mu = match kind {
            0 => CylinderMeasure::bernoulli(&sys, vec![1.0 / m as f64; m]).unwrap(),
            1 => CylinderMeasure::normalized_phi(&sys, t, 8).unwrap(),
            _ => CylinderMeasure::recurrence_constrained(&sys, t, vec![2, 4], j, sched, 8).unwrap(),
        };
        let q = Word::new(q, m).unwrap();
        let parent = mu.mass(&q).unwrap();
        let children: f64 = (0..m)
            .map(|i| mu.mass(&q.concat(&Word::new(vec![i], m).unwrap()).unwrap()).unwrap())
            .sum();
        prop_assert!((parent - children).abs() <= 1e-9);
        prop_assert!(parent >= 0.0);
    }

    #[test]
    fn bernoulli_mass_depends_on_letter_counts(w0 in 0.05..0.95f64, letters in prop::collection::vec(0usize..2, 0..12)) {
        let sys = AffineSystem::from_linear(vec![Matrix::similarity_2d(0.3, 0.0); 2]).unwrap();
        let mu = CylinderMeasure::bernoulli(&sys, vec![w0, 1.0 - w0]).unwrap();
        let mut sorted = letters.clone();
        sorted.sort();
        let a = mu.mass(&Word::new(letters, 2).unwrap()).unwrap();
        let b = mu.mass(&Word::new(sorted, 2).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-15 * a.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 100,
        rng_seed: RngSeed::Fixed(0xd1a),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn similarity_enclosures_contain_closed_form(
        m in 2usize..=4,
        r in 0.2..0.45f64,
        theta in 0.0..std::f64::consts::TAU,
        l in prop::sample::select(vec![0.5, 1.0, 2.0]),
        seed in 0u64..1000,
    ) {
        let maps: Vec<Matrix<f64>> = (0..m).map(|i| Matrix::similarity_2d(r, theta * i as f64)).collect();
        let sys = AffineSystem::from_linear(maps).unwrap();
        let j = TargetPoint::random(seed, m).unwrap();
        let sched = LengthSchedule::Linear { rate: l };
        let res = affine_recur::solve_shrinking_target_dimension(&sys, &j, &sched, 8, None, 1e-3).unwrap();
        let s0 = (m as f64).ln() / ((1.0 + l) * (1.0 / r).ln());
        prop_assert!(res.contains(s0), "{:?} vs {}", res, s0);
    }

    #[test]
    fn doubling_depth_never_widens(sys in system_strategy(2, 2)) {
        let shallow = affine_recur::solve_affinity_dimension(&sys, 6, Some(1e-3), 1e-6).unwrap();
        let deep = affine_recur::solve_affinity_dimension(&sys, 12, Some(1e-3), 1e-6).unwrap();
        prop_assert!(deep.lower >= shallow.lower && deep.upper <= shallow.upper, "{:?} {:?}", shallow, deep);
    }

    #[test]
    fn regime_dispatch(alpha in 0.1..3.0f64, c in 0.1..4.0f64) {
        use affine_recur::Regime;
        let sys = AffineSystem::from_linear(vec![Matrix::similarity_2d(0.3, 0.0); 2]).unwrap();
        let j = TargetPoint::constant(0, 2).unwrap();
        prop_assume!((alpha - 1.0).abs() > 1e-6);
        let solve = |s: &LengthSchedule| affine_recur::solve_shrinking_target_dimension(&sys, &j, s, 6, None, 1e-2).unwrap().regime;
        let expected = if alpha < 1.0 { Regime::Sublinear } else { Regime::Superlinear };
        prop_assert_eq!(solve(&LengthSchedule::Power { alpha }), Some(expected));
        prop_assert_eq!(solve(&LengthSchedule::Log { c }), Some(Regime::Sublinear));
        prop_assert_eq!(solve(&LengthSchedule::Linear { rate: c }), Some(Regime::Linear(c)));
    }
}
