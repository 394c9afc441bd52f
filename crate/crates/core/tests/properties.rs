use std::path::PathBuf;
use std::sync::Arc;

use deltacert_core::assembly::SystemAssembly;
use deltacert_core::config::GridConfig;
use deltacert_core::dae::{continuation_sweep, find_equilibrium, Classification, NewtonOptions};
use deltacert_core::devices::{linear_lag_device, pq_load, BusModel, PqLoadParams, StaticDevice};
use deltacert_core::dissipativity::{aggregate_class_k, storage_bounds, ClassKQuadratic};
use deltacert_core::linalg::SymmetricMatrix;
use deltacert_core::network::NetworkCoupling;
use deltacert_core::region::BoxRegion;
use deltacert_core::twobus::reference;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn c(v: &DVector<f64>, i: usize) -> Complex64 {
    Complex64::new(v[i], v[i + 1])
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for name in ["smsl.toml", "smsl_calibrated.toml", "scalar_lag.toml"] {
        let cfg = GridConfig::load(&configs().join(name)).unwrap();
        let again = GridConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}

// The solved operating point must satisfy the line equations and the power balance
// computed directly with complex arithmetic.
#[test]
fn two_bus_equilibrium_matches_complex_power_flow() {
    let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
    let sys = cfg.as_two_bus().unwrap();
    for s in [0.9, 1.0, 1.05] {
        let a = sys.assembly().unwrap().with_load_scale(s).unwrap();
        let eq =
            find_equilibrium(&a, &reference::EQ1.state(), &reference::EQ1.ports(), NewtonOptions::default()).unwrap();
        let v1 = c(&eq.u, 0);
        let drawn = c(&eq.u, 2);
        let v2 = c(&a.h(&eq.x, &eq.u).unwrap(), 2);
        let z = Complex64::new(sys.r, sys.x);
        let line = (v1 - v2) / z;
        assert!((line - drawn).norm() < 1e-8, "s = {s}: line current {line} vs drawn {drawn}");
        let load = Complex64::new(sys.load.p, sys.load.q) * s;
        assert!((v2 * drawn.conj() - load).norm() < 1e-8);
        let sent = v1 * line.conj();
        let losses = z * line.norm_sqr();
        assert!((sent - load - losses).norm() < 1e-8);
        assert_eq!(eq.classification, Classification::Stable);
    }
}

fn scalar_lag() -> SystemAssembly {
    let lag = linear_lag_device(1.0, 1.0).unwrap();
    let coupling = NetworkCoupling::explicit(DMatrix::from_element(1, 1, 1.0), vec![1]).unwrap();
    SystemAssembly::new(vec![BusModel::Dynamic(Arc::new(lag))], coupling).unwrap()
}

#[test]
fn scalar_lag_continuation_stays_at_origin() {
    let a = scalar_lag();
    let res =
        continuation_sweep(&a, &DVector::zeros(1), &DVector::zeros(1), (0.5, 1.5), 0.1, None, NewtonOptions::default())
            .unwrap();
    assert_eq!(res.points.len(), 11);
    for p in &res.points {
        assert!(p.equilibrium.x.norm() < 1e-12);
        assert!((p.equilibrium.max_real + 2.0).abs() < 1e-9);
    }
    assert_eq!(res.eigen_window(), Some((0.5, 1.5)));
}

#[test]
fn continuation_traces_load_dependence() {
    let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
    let a = cfg.assembly().unwrap();
    let res = continuation_sweep(
        &a,
        &reference::EQ1.state(),
        &reference::EQ1.ports(),
        (0.8, 1.2),
        0.05,
        None,
        cfg.engine.newton(),
    )
    .unwrap();
    assert_eq!(res.points.len(), 9);
    // heavier load draws more current at bus 2
    let drawn: Vec<f64> = res.points.iter().map(|p| c(&p.equilibrium.u, 2).norm()).collect();
    assert!(drawn.windows(2).all(|w| w[0] < w[1]), "{drawn:?}");
}

fn spd(entries: &[f64], n: usize) -> SymmetricMatrix {
    let r = DMatrix::from_column_slice(n, n, &entries[..n * n]);
    SymmetricMatrix::new(r.transpose() * &r + DMatrix::identity(n, n) * 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pq_load_meets_its_demand(p in -2.0..2.0f64, q in -2.0..2.0f64, ar in -3.0..3.0f64, ai in -3.0..3.0f64, s in 0.1..2.0f64) {
        prop_assume!(ar.hypot(ai) > 1e-3);
        let load = pq_load(PqLoadParams { p, q, scale: s }).unwrap();
        let u = DVector::from_vec(vec![ar, ai]);
        let v = load.h(&u).unwrap();
        prop_assert!(load.balance_residual(&u, &v) < 1e-9 * (1.0 + s * p.hypot(q)));
    }

    #[test]
    fn region_indexing_round_trips(dims in prop::collection::vec(1usize..6, 1..5), seed in 0usize..10_000) {
        let lower = vec![-1.0; dims.len()];
        let upper = vec![1.0; dims.len()];
        let region = BoxRegion::new(lower, upper, dims).unwrap();
        let k = seed % region.count() as usize;
        let idx = region.multi_index(k);
        prop_assert_eq!(region.flat_index(&idx), k);
        prop_assert!(region.contains(region.sample(k).as_slice()));
    }

    #[test]
    fn storage_is_sandwiched(entries in prop::collection::vec(-2.0..2.0f64, 9), f in prop::collection::vec(-5.0..5.0f64, 3)) {
        let p = spd(&entries, 3);
        let b = storage_bounds(&p, 0.1).unwrap();
        let f = DVector::from_vec(f);
        let r = f.norm();
        let s = p.quad_form(&f);
        prop_assert!(b.alpha.eval(r) <= s + 1e-9 * (1.0 + s));
        prop_assert!(s <= b.beta.eval(r) + 1e-9 * (1.0 + s));
    }

    #[test]
    fn aggregated_bounds_are_ordered(p in prop::collection::vec(0.1..5.0f64, 1..5), a in 0.1..3.0f64, spread in 1.0..4.0f64) {
        let n = p.len();
        let alphas: Vec<_> = (0..n).map(|i| ClassKQuadratic::new(a + i as f64 * 0.1).unwrap()).collect();
        let betas: Vec<_> = alphas.iter().map(|k| ClassKQuadratic::new(k.a * spread).unwrap()).collect();
        let (alpha, beta, gamma) = aggregate_class_k(&p, &alphas, &betas, &alphas).unwrap();
        prop_assert!(alpha.a <= beta.a);
        prop_assert_eq!(alpha, gamma);
    }
}

mod region_of_attraction {
    use super::*;
    use deltacert_core::dae::{simulate, SimOptions};
    use deltacert_core::roa::{aggregate_storage, certify_initial_condition, estimate_level, DEFAULT_LEVEL_MARGIN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Random certified starting points must stay in the region and settle.
    #[test]
    fn certified_initial_conditions_are_sound() {
        let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
        let a = cfg.assembly().unwrap();
        let pred = cfg.region_predicate().unwrap();
        let roa = cfg.roa.as_ref().unwrap();
        let grid = roa.grid.to_region().unwrap();
        let u0 = DVector::from_vec(roa.u_guess.clone());
        let weights = [1.0, 1.0];
        let opts = cfg.engine.newton();
        let level = estimate_level(&a, &pred, &weights, &grid, &u0, opts).unwrap().estimate.unwrap().l_bar;

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut starts = Vec::new();
        while starts.len() < 20 {
            let x0 = DVector::from_fn(3, |i, _| rng.random_range(grid.lower()[i]..grid.upper()[i]));
            let Ok(v) = certify_initial_condition(&a, &pred, &weights, level, &x0, &u0, DEFAULT_LEVEL_MARGIN, opts)
            else {
                continue;
            };
            if v.certified {
                starts.push((x0, v.u0));
            }
        }
        for (x0, u) in starts {
            let tr = simulate(&a, &x0, &u, SimOptions { t_end: 100.0, dt: 0.01, newton: opts }, &[]).unwrap();
            assert!(tr.completed(), "{x0}");
            for k in 0..tr.len() {
                assert!(
                    pred.holds(&a, &tr.states[k], &tr.algebraics[k]),
                    "left the region from {x0} at t = {}",
                    tr.times[k]
                );
            }
            let f = a.f(tr.last_state(), tr.algebraics.last().unwrap()).unwrap();
            assert!(f.norm() < 1e-4, "from {x0}: |f| = {}", f.norm());
        }
    }

    // The manifold and every certificate ignore ω, so membership is constant along ω.
    #[test]
    fn predicate_ignores_speed() {
        let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
        let a = cfg.assembly().unwrap();
        let pred = cfg.region_predicate().unwrap();
        let u0 = reference::EQ1.ports();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (d, e) = (rng.random_range(-0.4..0.7), rng.random_range(0.6..1.4));
            let at = |w: f64| {
                pred.eval_state(&a, &DVector::from_vec(vec![d, w, e]), &u0, cfg.engine.newton()).map(|r| r.1).ok()
            };
            let base = at(0.0);
            for w in [-1.0, -0.3, 0.5, 1.0] {
                assert_eq!(at(w), base, "(δ, E'q) = ({d}, {e}), ω = {w}");
            }
        }
    }

    #[test]
    fn storage_vanishes_only_at_equilibria() {
        let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
        let a = cfg.assembly().unwrap();
        let pred = cfg.region_predicate().unwrap();
        let eq = find_equilibrium(&a, &reference::EQ1.state(), &reference::EQ1.ports(), cfg.engine.newton()).unwrap();
        let s = aggregate_storage(&[1.0, 1.0], &pred, &a, &eq.x, &eq.u).unwrap();
        assert!(s.abs() < 1e-12, "{s}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = DVector::from_vec(vec![
                rng.random_range(-0.4..0.7),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.6..1.4),
            ]);
            if let Ok((u, _)) = pred.eval_state(&a, &x, &eq.u, cfg.engine.newton()) {
                assert!(aggregate_storage(&[1.0, 1.0], &pred, &a, &x, &u).unwrap() > 0.0);
            }
        }
    }
}

mod dissipation {
    use super::*;
    use deltacert_core::dae::{simulate, SimOptions};
    use deltacert_core::devices::{sg_flux_decay, DynamicDevice, SgParams};
    use deltacert_core::dissipativity::{
        brute_force_dissipation_check, verify_dynamic, Verdict, VerifyMode, VerifyOptions,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_mode_agrees_with_brute_force() {
        let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
        let sys = cfg.as_two_bus().unwrap();
        let sg = sg_flux_decay(SgParams::benchmark(), sys.convention).unwrap();
        let (p, x) = (reference::p1(), reference::x1());
        let opts = VerifyOptions { mode: VerifyMode::Exact, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut agree, mut passes) = (0, 0);
        for k in 0..300 {
            let z: Vec<f64> = [(-0.4, 0.7), (-1.0, 1.0), (0.6, 1.4), (0.6, 1.3), (-0.5, 0.5)]
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect();
            let region = BoxRegion::new(z.clone(), z.iter().map(|v| v + 1.0).collect(), vec![1; 5]).unwrap();
            let cert = verify_dynamic(&sg, &p, &x, 1e-6, &region, opts).unwrap();
            let (xs, us) = (DVector::from_column_slice(&z[..3]), DVector::from_column_slice(&z[3..]));
            let brute = brute_force_dissipation_check(&sg, &p, &x, 1e-6, &xs, &us, 2000, k).unwrap();
            let pass = cert.verdict == Verdict::Pass;
            passes += pass as usize;
            if pass == brute.holds {
                agree += 1;
            } else {
                panic!("{z:?}: exact {pass}, brute force {} (deficit {:e})", brute.holds, brute.worst_deficit);
            }
        }
        assert_eq!(agree, 300);
        assert!(passes > 0);
    }

    // Along the transient the generator meets Ṡ ≤ w(u̇, ẏ) − ε‖f‖² with derivatives taken by central differences.
    #[test]
    fn generator_dissipation_holds_along_transient() {
        let cfg = GridConfig::load(&configs().join("smsl_calibrated.toml")).unwrap();
        let a = cfg.assembly().unwrap();
        let sys = cfg.as_two_bus().unwrap();
        let sg = sg_flux_decay(sys.sg, sys.convention).unwrap();
        let (p, x) = (reference::p1(), reference::x1());
        let dt = 0.005;
        let x0 = DVector::from_column_slice(&reference::X0);
        let tr = simulate(
            &a,
            &x0,
            &reference::EQ1.ports(),
            SimOptions { t_end: 20.0, dt, newton: cfg.engine.newton() },
            &[],
        )
        .unwrap();
        let port = |k: usize| a.bus_port(0, &tr.algebraics[k]);
        let f = |k: usize| sg.f(&tr.states[k], &port(k));
        let y = |k: usize| sg.h(&tr.states[k], &port(k));
        let mut worst = f64::NEG_INFINITY;
        for k in 1..tr.len() - 1 {
            let s_dot = (p.quad_form(&f(k + 1)) - p.quad_form(&f(k - 1))) / (2.0 * dt);
            let u_dot = (port(k + 1) - port(k - 1)) / (2.0 * dt);
            let y_dot = (y(k + 1) - y(k - 1)) / (2.0 * dt);
            let v = DVector::from_iterator(4, u_dot.iter().chain(y_dot.iter()).copied());
            let w = x.quad_form(&v);
            let fk = f(k);
            let scale = 1.0 + fk.norm_squared() + v.norm_squared();
            worst = worst.max((s_dot - w + 1e-6 * fk.norm_squared()) / scale);
        }
        assert!(worst <= 1e-6, "relative violation {worst:e}");
    }
}
