use rpde_core::oracle::{
    fd_diffusion_1d, fd_poisson_2d, fd_steady_diffusion_1d, mc_ensemble, Grid1D, Grid2D, OracleConfig, CG_TOLERANCE,
};
use rpde_core::problems::{build_problem, Forcing, ProblemOverrides, ProblemTag, RandomField};
use rpde_core::stats::ensemble_moments;

/// Centre value of −Δu = 1 on [−1, 1]² with u = 0 on the edge, from the double sine series.
fn square_centre_series(terms: usize) -> f64 {
    let pi4 = std::f64::consts::PI.powi(4);
    let mut u = 0.0;
    for m in (1..terms).step_by(2) {
        for n in (1..terms).step_by(2) {
            let sign = if ((m + n) / 2 - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let (m, n) = (m as f64, n as f64);
            u += sign * 64.0 / (pi4 * m * n * (m * m + n * n));
        }
    }
    u
}

fn centre_value(cells: usize) -> f64 {
    let s = fd_poisson_2d(
        &RandomField::Constant(1.0),
        &[],
        &Forcing::Constant(1.0),
        Grid2D::square(cells),
        CG_TOLERANCE,
    )
    .unwrap();
    assert!(s.relative_residual < 1e-10);
    s.u[[cells / 2, cells / 2]]
}

#[test]
fn series_oracle_value() {
    let exact = square_centre_series(401);
    assert!((exact - 0.294685).abs() < 1e-6, "{exact}");
}

#[test]
fn poisson_centre_matches_series() {
    let exact = square_centre_series(401);
    let fd = centre_value(128);
    assert!((fd - exact).abs() / exact < 5e-3);
    assert_eq!(format!("{fd:.3}"), format!("{exact:.3}"));
}

#[test]
fn poisson_second_order() {
    let exact = square_centre_series(401);
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&c| (centre_value(c) - exact).abs()).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..2.2).contains(&order), "{errs:?}");
    }
}

#[test]
fn constant_steady_diffusion_is_the_parabola() {
    let (a, c) = (0.26, 3.0);
    let u = fd_steady_diffusion_1d(&RandomField::Constant(a), &[], c, 201).unwrap();
    let mut worst = 0.0f64;
    for (i, v) in u.iter().enumerate().skip(1).take(199) {
        let x = i as f64 / 200.0;
        let exact = c / (2.0 * a) * x * (1.0 - x);
        worst = worst.max((v - exact).abs() / exact);
    }
    assert!(worst < 1e-4, "{worst}");
    assert!((u[100] - 1.442308).abs() < 1e-6);
}

/// −(a u′)′ = c with zero ends, by composite Simpson quadrature of the flux form.
fn steady_quadrature(a: impl Fn(f64) -> f64, c: f64, x: f64) -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let k = c * simpson(&|s| s / a(s), 0.0, 1.0) / simpson(&|s| 1.0 / a(s), 0.0, 1.0);
    simpson(&|s| (k - c * s) / a(s), 0.0, x)
}

#[test]
fn variable_steady_diffusion_second_order() {
    let p = [0.9, 0.1, 0.7, 0.4];
    let field = RandomField::SmoothDiffusion;
    let exact = steady_quadrature(|x| field.value(&[x], &p), 3.0, 0.5);
    let errs: Vec<f64> = [21, 41, 81, 161]
        .iter()
        .map(|&nx| (fd_steady_diffusion_1d(&field, &p, 3.0, nx).unwrap()[(nx - 1) / 2] - exact).abs())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..2.2).contains(&order), "{errs:?}");
    }
}

#[test]
fn transient_converges_in_space() {
    // fine time steps isolate the spatial error; reference from a much finer grid
    let field = RandomField::SmoothDiffusion;
    let p = [0.3, 0.8];
    let at = |nx: usize| {
        let grid = Grid1D {
            nx,
            nt: 4000,
            horizon: 0.5,
        };
        fd_diffusion_1d(&field, &p, 3.0, grid, |x| 10.0 * x * (1.0 - x))
            .unwrap()
            .at(0.5, 0.25)
    };
    let reference = at(321);
    let e1 = (at(21) - reference).abs();
    let e2 = (at(41) - reference).abs();
    assert!(e1 / e2 > 3.3, "{e1} {e2}");
}

#[test]
fn monte_carlo_error_scales_with_inverse_root_m() {
    let problem = build_problem(
        ProblemTag::DiffusionSmooth,
        &ProblemOverrides {
            d: Some(10),
            ..Default::default()
        },
    )
    .unwrap();
    let probes = vec![vec![1.0, 0.5]];
    let repeats = 24;
    let spread = |m: usize| {
        let cfg = OracleConfig {
            samples: m,
            nx: 21,
            nt: 20,
            cells: 2,
        };
        let means: Vec<f64> = (0..repeats)
            .map(|r| {
                let run = mc_ensemble(&problem, &probes, &cfg, 1000 + r as u64).unwrap();
                run.values.column(0).sum() / m as f64
            })
            .collect();
        ensemble_moments(&means).unwrap().1
    };
    let s: Vec<f64> = [100, 400, 1600].iter().map(|&m| spread(m)).collect();
    for w in s.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.3..3.0).contains(&ratio), "{s:?}");
    }
}
