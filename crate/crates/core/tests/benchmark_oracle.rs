//! Closed-form benchmark values against quadrature, series and simulation.

use randstop::benchmark::{
    scaled_exp_sum, scaled_value_curve, truncated_exp_sum, value_at_opportunity, value_closed_form, BenchmarkParams,
    Rights,
};
use randstop::pathgen::sample_grid;
use randstop::rng::{Purpose, RngStream};
use statrs::distribution::{DiscreteCDF, Poisson};

fn row(horizon: f64, rate: f64, mu: f64, jump: f64) -> BenchmarkParams {
    BenchmarkParams::new(mu, 0.2, 2.0, 0.0, rate, jump, horizon).unwrap()
}

fn row3() -> BenchmarkParams {
    row(3.0, 1.0, 0.2, -0.05)
}

#[test]
fn reference_values_to_four_decimals() {
    let cases = [
        (row(3.0, 1.0, 0.2, -0.05), Rights::Finite(1), 1.3112),
        (row(3.0, 1.0, 0.2, -0.05), Rights::Finite(3), 1.5250),
        (row(3.0, 1.0, 0.2, -0.05), Rights::Unlimited, 1.5448),
        (row(1.0, 1.0, 0.2, -0.05), Rights::Unlimited, 0.6910),
        (row(3.0, 2.0, 0.5, -0.05), Rights::Unlimited, 6.4685),
        (row(3.0, 1.0, 0.2, 0.0), Rights::Unlimited, 1.9639),
    ];
    for (p, rights, want) in cases {
        let v = value_closed_form(&p, rights, 0.0, 1.0).unwrap();
        assert!((v - want).abs() <= 5e-5, "{rights:?}: {v} vs {want}");
    }
}

#[test]
fn homogeneous_in_the_price() {
    for rights in [Rights::Finite(1), Rights::Finite(4), Rights::Unlimited] {
        let p = row3();
        let a = value_closed_form(&p, rights, 0.0, 1.0).unwrap();
        let b = value_closed_form(&p, rights, 0.0, 2.0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(lo) > 0.0) == (f(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exercise_boundary() {
    let p = row3();
    let (a, l) = (p.alpha(), p.lambda());
    let root = bisect(|s| (l / a) * (1.0 - (-a * s).exp()) - (-a * s).exp(), 1e-9, 10.0);
    assert!((root - 1.730173).abs() < 1e-6, "{root}");
    assert!((p.s_star() - root).abs() < 1e-10);
    assert!((p.zeta() - (-a * p.s_star()).exp()).abs() < 1e-12);
    for rights in [Rights::Finite(1), Rights::Finite(2), Rights::Finite(7), Rights::Unlimited] {
        assert!((p.scaled_value(rights, p.s_star()) - 1.0).abs() < 1e-9);
        assert!(p.scaled_value(rights, 1e-12).abs() < 1e-9);
    }
}

/// Adaptive Simpson quadrature.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn refine(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        refine(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + refine(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    refine(f, a, fa, b, fb, m, fm, whole, tol, 24)
}

fn check_recursion(p: &BenchmarkParams) {
    let (a, l) = (p.alpha(), p.lambda());
    for k in 1..=3 {
        for s in [0.3, 1.0, p.s_star(), 2.2, 3.0, 4.5] {
            let integrand = |u: f64| (-a * u).exp().max(p.f(k, u));
            // split at the kink so the quadrature sees smooth pieces
            let kink = p.s_star().min(s);
            let quad = l * (integrate(&integrand, 0.0, kink, 1e-12) + integrate(&integrand, kink, s, 1e-12));
            let closed = p.f(k + 1, s);
            assert!(((closed - quad) / quad).abs() < 1e-8, "K {k} s {s}: {closed} vs {quad}");
        }
    }
}

#[test]
fn closed_form_solves_the_integral_recursion() {
    check_recursion(&row3());
    check_recursion(&row(3.0, 2.0, 0.5, -0.05));
    // positive growth rate
    check_recursion(&BenchmarkParams::new(0.8, 0.2, 2.0, 0.0, 1.0, -0.05, 3.0).unwrap());
}

#[test]
fn more_rights_never_hurt() {
    for p in [row3(), row(1.0, 1.0, 0.2, -0.05), row(3.0, 2.0, 0.5, -0.05)] {
        let unlimited = value_closed_form(&p, Rights::Unlimited, 0.0, 1.0).unwrap();
        let mut last = 0.0;
        for k in 0..=10 {
            let v = value_closed_form(&p, Rights::Finite(k), 0.0, 1.0).unwrap();
            assert!(v >= last - 1e-14 && v <= unlimited + 1e-12, "K {k}: {v}");
            last = v;
        }
        let v40 = value_closed_form(&p, Rights::Finite(40), 0.0, 1.0).unwrap();
        assert!((v40 - unlimited).abs() < 1e-8);
    }
}

#[test]
fn opportunity_value_is_exercise_or_pass() {
    let p = row3();
    for t in [0.0, 1.0, 2.5, 3.0] {
        // passing leaves one opportunity fewer ahead
        for (rights, rest) in [
            (Rights::Finite(1), Rights::Finite(0)),
            (Rights::Finite(3), Rights::Finite(2)),
            (Rights::Unlimited, Rights::Unlimited),
        ] {
            let v = value_at_opportunity(&p, rights, t, 1.2).unwrap();
            let wait = value_closed_form(&p, rest, t, 1.2).unwrap();
            assert_eq!(v, 1.2f64.powi(2).max(wait));
        }
    }
}

#[test]
fn exp_series_against_brute_force() {
    assert_eq!(truncated_exp_sum(0, 7.3).unwrap(), 1.0);
    assert!((truncated_exp_sum(2, 1.0).unwrap() - 2.5).abs() < 1e-15);
    // P(Poisson(3) <= 10) from the complementary 64-term tail
    let mut term = (-3f64).exp();
    for m in 1..=10 {
        term *= 3.0 / m as f64;
    }
    let mut tail = 0.0;
    for m in 11..11 + 64 {
        term *= 3.0 / m as f64;
        tail += term;
    }
    let cdf = (-3f64).exp() * truncated_exp_sum(10, 3.0).unwrap();
    assert!((cdf - (1.0 - tail)).abs() < 1e-12);
    assert!((scaled_exp_sum(10, 3.0).unwrap() - cdf).abs() < 1e-13);
    for (k, x) in [(50usize, 40.0), (700, 650.0), (5, 900.0)] {
        let want = Poisson::new(x).unwrap().cdf(k as u64);
        let got = scaled_exp_sum(k, x).unwrap();
        assert!((got - want).abs() < 1e-10, "k {k} x {x}: {got} vs {want}");
    }
}

#[test]
fn single_opportunity_matches_simulation() {
    let p = row3();
    let problem = p.problem(1.0).unwrap();
    let s = RngStream::new(41, Purpose::Test(10));
    let pairs: Vec<f64> = (0..50_000u64)
        .map(|i| {
            let a = sample_grid(&problem, 1, &s.path(i), false).unwrap().payoff(1);
            let b = sample_grid(&problem, 1, &s.path(i), true).unwrap().payoff(1);
            0.5 * (a + b)
        })
        .collect();
    let n = pairs.len() as f64;
    let mean = pairs.iter().sum::<f64>() / n;
    let se = (pairs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let exact = value_closed_form(&p, Rights::Finite(1), 0.0, 1.0).unwrap();
    assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn three_rights_curve_tracks_unlimited() {
    let p = row3();
    let three = scaled_value_curve(&p, Rights::Finite(3), 61).unwrap();
    let unlimited = scaled_value_curve(&p, Rights::Unlimited, 61).unwrap();
    let gap = three
        .points
        .iter()
        .zip(&unlimited.points)
        .map(|(a, b)| (a.1 - b.1).abs())
        .fold(0.0, f64::max);
    eprintln!("largest gap between the three-right and unlimited curves: {gap:.4}");
    assert!(gap < 0.05);
    assert_eq!(three.s_star, Some(p.s_star()));
}
