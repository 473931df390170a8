//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Defaults throughout: omega = 1, outer boundary the sphere of radius 2,
//! cloaked-region boundary radius 1, layer constants alpha0 = beta0 =
//! gamma0 = 1 with the pull-back-consistent layer permeability, oracle
//! truncation N = 12. Run with `cargo test --test acceptance`, or the whole
//! workspace suite with `cargo test --workspace`.

use emcloak::admittance::{thdiv_norm, EnergyQuadrature, WeightedNorm};
use emcloak::bie::{assemble_magnetic_dipole, kernel_split, NearQuadrature};
use emcloak::config::Config;
use emcloak::geometry::{make_sphere_mesh_with_rule, GaussSphereGrid, SurfaceQuadrature, TriRule};
use emcloak::media::{pull_back_field, virtual_medium_spec, BlowupMap, CoreMaterial};
use emcloak::mie::expansion::{mode_index, n_modes, VshExpansion};
use emcloak::mie::{pec_scattered_wave, solve_layered_sphere, vsh_analyze, LayeredSphereSpec};
use emcloak::scattering::solve_exterior;
use emcloak::sweeps::{
    busting_scan, check_suite, corrupted_weight_control, fit_loglog, sweep_props, sweep_rho,
    PropsResult,
};
use emcloak::trace::TangentialTrace;
use emcloak::{rcross, CVec3, Vec3};
use ndarray::Array1;
use ndarray_linalg::{FactorizeInto, Norm, Solve};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

/// Serializes the memory-heavy criteria when the harness runs tests in
/// parallel.
static HEAVY: Mutex<()> = Mutex::new(());

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("[{}] {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_cubic_admittance_decay_uniform_in_content() {
    let cfg = Config::default();
    let t = Instant::now();
    let result = sweep_rho(&cfg).unwrap();
    let elapsed = t.elapsed().as_secs_f64();

    let mut all_slopes_ok = true;
    let mut worst_slope = f64::NAN;
    for c in &result.cores {
        if !(c.fit.slope > 2.7 && c.fit.slope < 3.3) {
            all_slopes_ok = false;
            worst_slope = c.fit.slope;
        }
    }
    let chats: Vec<f64> = result.cores.iter().map(|c| c.c_hat).collect();
    let cmax = chats.iter().cloned().fold(0.0f64, f64::max);
    let cmin = chats.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = cmax / cmin;
    let pass = all_slopes_ok && spread < 10.0 && elapsed < 120.0;
    report(
        "criterion 1 (cubic decay, uniform constants)",
        pass,
        &format!(
            "slopes in [2.7, 3.3] over {} cores ({}), C^ spread {spread:.2} < 10, {elapsed:.1}s < 120s",
            result.cores.len(),
            if all_slopes_ok { "yes".to_string() } else { format!("no: {worst_slope:.3}") },
        ),
    );
}

#[test]
fn criterion_2_busting_core_exists_without_layer_only() {
    let cfg = Config::default();
    let scan = busting_scan(&cfg).unwrap();
    let busted = scan.unshielded.fit.slope < 2.5
        || scan.unshielded.c_hat >= 100.0 * scan.baseline_c_hat;
    let protected = scan.shielded_worst_slope >= 2.5
        && scan.shielded_worst_c_hat < 100.0 * scan.baseline_c_hat;
    report(
        "criterion 2 (busting core without layer, none with it)",
        busted && protected,
        &format!(
            "eps* = {:.1}: unshielded slope {:.2} / C^ {:.2e} (baseline {:.2e}); \
             shielded grid worst slope {:.3}, worst C^ {:.2e}",
            scan.eps_star,
            scan.unshielded.fit.slope,
            scan.unshielded.c_hat,
            scan.baseline_c_hat,
            scan.shielded_worst_slope,
            scan.shielded_worst_c_hat
        ),
    );
}

fn props_result() -> &'static (PropsResult, f64) {
    static RESULT: OnceLock<(PropsResult, f64)> = OnceLock::new();
    RESULT.get_or_init(|| {
        let _guard = HEAVY.lock().unwrap();
        let cfg = Config::default(); // refinement 3, centroid rule
        let t = Instant::now();
        let res = sweep_props(&cfg, &NearQuadrature::default()).unwrap();
        (res, t.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_3_outer_driven_exterior_sweep_is_cubic() {
    let (res, elapsed) = props_result();
    let slope = res.psi_driven.fit.slope;
    let pass = slope > 2.7 && slope < 3.3 && *elapsed < 600.0;
    report(
        "criterion 3 (outer-data sweep cubic)",
        pass,
        &format!(
            "slope {slope:.3} in [2.7, 3.3], R^2 {:.4}, sweep pair took {elapsed:.0}s < 600s",
            res.psi_driven.fit.r_squared
        ),
    );
}

#[test]
fn criterion_4_obstacle_driven_exterior_sweep_is_quadratic() {
    let (res, _) = props_result();
    let slope = res.phi_driven.fit.slope;
    let pass = slope > 1.7 && slope < 2.3;
    report(
        "criterion 4 (obstacle-data sweep quadratic)",
        pass,
        &format!("slope {slope:.3} in [1.7, 2.3], R^2 {:.4}", res.phi_driven.fit.r_squared),
    );
}

#[test]
fn criterion_5_energy_identity_on_oracle_solutions() {
    let cfg = Config::default();
    let mut worst = 0.0f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    for &rho in &[0.2, 0.1] {
        let spec = virtual_medium_spec(
            rho,
            cfg.layer_constants(),
            CoreMaterial { eps: 10.0, mu: 1.0, sigma: 1.0 },
            cfg.geometry.r_d,
            cfg.geometry.r_omega,
            cfg.omega,
            false,
        )
        .unwrap();
        // Single-mode data.
        let single = VshExpansion::single_grad(4, cfg.geometry.r_omega, 1, 0);
        // Random band-limited data.
        let mut random = VshExpansion::zero(4, cfg.geometry.r_omega);
        for k in 0..n_modes(4) {
            random.grad[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            random.rot[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        for psi in [&single, &random] {
            let sol = solve_layered_sphere(&spec, psi).unwrap();
            let bal =
                emcloak::admittance::energy_identity_residual(&sol, EnergyQuadrature::default())
                    .unwrap();
            worst = worst.max(bal.residual);
        }
    }
    report(
        "criterion 5 (dissipation identity)",
        worst < 1e-6,
        &format!("worst relative residual {worst:.3e} < 1e-6 over rho in {{0.2, 0.1}}"),
    );
}

#[test]
fn criterion_6_far_field_cross_validation() {
    let _guard = HEAVY.lock().unwrap();
    let omega = 1.0;
    let n_max = 10;
    let einc = |x: Vec3| -> CVec3 {
        let phase = Complex64::new(0.0, omega * x.z).exp();
        CVec3::new(phase, Complex64::ZERO, Complex64::ZERO)
    };
    let grid = GaussSphereGrid::for_degree(1.0, n_max);
    let inc = TangentialTrace::from_fn(&grid, |x| rcross(&(x / x.norm()), &einc(x)));
    let psi = vsh_analyze(&inc, &grid, n_max).unwrap();
    let wave = pec_scattered_wave(&psi, omega).unwrap();

    let mesh = make_sphere_mesh_with_rule(1.0, 3, TriRule::Gauss3).unwrap();
    let phi = TangentialTrace::from_fn(&mesh, |x| {
        rcross(&(x / x.norm()), &einc(x)) * Complex64::from(-1.0)
    });
    let sol = solve_exterior(&mesh, omega, &phi, &NearQuadrature::default()).unwrap();
    let dirs = GaussSphereGrid::new(1.0, 12, 24);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&d, &w) in dirs.nodes().iter().zip(dirs.weights()) {
        let bie = sol.far_field(d).unwrap();
        let mie = wave.far_field(d);
        num += (bie - mie).norm_squared() * w;
        den += mie.norm_squared() * w;
    }
    let rel = (num / den).sqrt();
    report(
        "criterion 6 (conducting-sphere far field vs series)",
        rel < 1e-3,
        &format!("relative L2 error {rel:.3e} < 1e-3 at refinement 3"),
    );
}

/// Smallest singular value of I + M0 by inverse power iteration on the
/// normal operator, with LU solves.
fn static_sigma_min(refinement: u32) -> f64 {
    let mesh = make_sphere_mesh_with_rule(1.0, refinement, TriRule::Centroid).unwrap();
    let mut a = assemble_magnetic_dipole(&mesh, 0.0, &NearQuadrature::default()).unwrap();
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)] += Complex64::ONE;
    }
    let f = a.factorize_into().unwrap();
    let mut x = Array1::<Complex64>::from_elem(n, Complex64::new(1.0, 0.3));
    x /= Complex64::from(x.norm_l2());
    let mut sigma = f64::INFINITY;
    for _ in 0..400 {
        let y = f.solve(&x).unwrap();
        let z = f.solve_h(&y).unwrap();
        let nrm = z.norm_l2();
        let new_sigma = (1.0 / nrm).sqrt();
        x = z / Complex64::from(nrm);
        if (new_sigma - sigma).abs() < 1e-6 * new_sigma {
            sigma = new_sigma;
            break;
        }
        sigma = new_sigma;
    }
    sigma
}

#[test]
fn criterion_7_static_operator_uniformly_invertible() {
    let _guard = HEAVY.lock().unwrap();
    let s2 = static_sigma_min(2);
    let s3 = static_sigma_min(3);
    let s4 = static_sigma_min(4);
    let stable = (s2 - s4).abs() <= 0.05 * s4 && (s3 - s4).abs() <= 0.05 * s4;
    let floor = s4 * 0.95;
    let bounded = s2 >= floor && s3 >= floor && s4 >= floor;
    report(
        "criterion 7 (static operator invertibility)",
        stable && bounded,
        &format!(
            "sigma_min = {s2:.5}, {s3:.5}, {s4:.5} across refinements 2, 3, 4; \
             within 5% of finest and above {floor:.5}"
        ),
    );
}

#[test]
fn criterion_8_kernel_split_remainder_scaling() {
    // Part one: pointwise remainder density bounded uniformly in tau.
    let omega = 1.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut pairs = Vec::new();
    for _ in 0..40 {
        let a = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let b = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        if (a - b).norm() > 1e-3 {
            pairs.push((a, b));
        }
    }
    let cap = 1.2 * omega * omega / (8.0 * std::f64::consts::PI);
    let mut worst = 0.0f64;
    for &tau in &[0.1, 0.05, 0.025] {
        for &(a, b) in &pairs {
            let split = kernel_split(a, b, tau, omega).unwrap();
            let density = split.remainder_density(tau).norm() / (a - b).norm();
            worst = worst.max(density);
        }
    }
    let part_one = worst <= cap;

    // Part two: the operator remainder decays quadratically in tau.
    let mesh = make_sphere_mesh_with_rule(1.0, 1, TriRule::Gauss3).unwrap();
    let cfg = NearQuadrature::default();
    let m0 = assemble_magnetic_dipole(&mesh, 0.0, &cfg).unwrap();
    let values: Vec<CVec3> = mesh
        .normals
        .iter()
        .map(|&nu| {
            let v = CVec3::new(
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            emcloak::trace::tangential_part(v, nu)
        })
        .collect();
    let density = TangentialTrace { values, div: None };
    let comps = emcloak::bie::frame_components(&mesh, &density);
    let base = density.l2_norm(&mesh);
    let taus = [0.2, 0.1, 0.05];
    let mut norms = Vec::new();
    for &tau in &taus {
        let mt = assemble_magnetic_dipole(&mesh, omega * tau, &cfg).unwrap();
        let diff = (&mt - &m0).dot(&comps);
        let trace = emcloak::bie::trace_from_components(&mesh, &diff);
        norms.push(trace.l2_norm(&mesh) / base);
    }
    let fit = fit_loglog(&taus, &norms).unwrap();
    let part_two = fit.slope > 1.8 && fit.slope < 2.2;

    report(
        "criterion 8 (kernel split remainder)",
        part_one && part_two,
        &format!(
            "max remainder density {worst:.4e} <= {cap:.4e}; operator decay slope {:.3} in [1.8, 2.2]",
            fit.slope
        ),
    );
}

#[test]
fn criterion_9_pull_back_residual_converges() {
    // Manufactured single-mode vacuum solution pulled back through the
    // radial map; the finite-difference curl residual of the transformed
    // system must converge at first order or better over three steps.
    let omega = 1.0;
    let spec = LayeredSphereSpec::vacuum(2.0, omega).unwrap();
    let mut psi = VshExpansion::zero(2, 2.0);
    psi.grad[mode_index(1, 0)] = Complex64::ONE;
    let sol = solve_layered_sphere(&spec, &psi).unwrap();
    let map = BlowupMap::new(0.5, 1.0, 2.0).unwrap();
    let y0 = Vec3::new(1.1, 0.35, -0.4);

    let e_field = |x: Vec3| sol.eval_e(x);
    let h_field = |x: Vec3| sol.eval_h(x);
    let df = map.jacobian(y0).unwrap();
    let det = df.determinant();
    let gram = df.transpose() * df;
    let mu_pb = gram.try_inverse().unwrap() * det.abs();

    let steps = [2e-3, 1e-3, 5e-4];
    let mut residuals = Vec::new();
    for &h in &steps {
        let mut curl = CVec3::zeros();
        for (i, j, k) in [(0usize, 1usize, 2usize), (1, 2, 0), (2, 0, 1)] {
            let mut ej = Vec3::zeros();
            ej[j] = h;
            let mut ek = Vec3::zeros();
            ek[k] = h;
            let d_j = (pull_back_field(&e_field, &map, y0 + ej).unwrap()[k]
                - pull_back_field(&e_field, &map, y0 - ej).unwrap()[k])
                / Complex64::from(2.0 * h);
            let d_k = (pull_back_field(&e_field, &map, y0 + ek).unwrap()[j]
                - pull_back_field(&e_field, &map, y0 - ek).unwrap()[j])
                / Complex64::from(2.0 * h);
            curl[i] = d_j - d_k;
        }
        let hp = pull_back_field(&h_field, &map, y0).unwrap();
        let re = mu_pb * Vec3::new(hp.x.re, hp.y.re, hp.z.re);
        let im = mu_pb * Vec3::new(hp.x.im, hp.y.im, hp.z.im);
        let rhs = CVec3::new(
            Complex64::new(re.x, im.x),
            Complex64::new(re.y, im.y),
            Complex64::new(re.z, im.z),
        ) * Complex64::new(0.0, omega);
        residuals.push((curl - rhs).norm());
    }
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    let fit = fit_loglog(&steps, &residuals).unwrap();
    report(
        "criterion 9 (pull-back residual first order)",
        monotone && fit.slope >= 0.9,
        &format!("residuals {residuals:?}, slope {:.2} >= 0.9, monotone {monotone}", fit.slope),
    );
}

#[test]
fn criterion_10_full_invariant_suite() {
    let cfg = Config::default();
    let mut items = check_suite(&cfg).unwrap();
    items.push(corrupted_weight_control(&cfg).unwrap());
    let mut failures = Vec::new();
    for item in &items {
        if !item.pass {
            failures.push(format!("{} ({:.3e} vs {:.3e})", item.name, item.measured, item.threshold));
        }
    }
    report(
        "criterion 10 (invariant suite)",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("all {} checks pass (including the negative control)", items.len())
        } else {
            format!("failures: {}", failures.join(", "))
        },
    );
}

#[test]
fn weighted_and_plain_norms_give_consistent_slopes() {
    // The headline slope is insensitive to the bounded-equivalent norm
    // choice: the unweighted operator norm reproduces it.
    let mut cfg = Config::default();
    cfg.cores = emcloak::config::CoreGridConfig {
        eps: vec![1.0, 100.0],
        mu: vec![1.0],
        sigma: vec![1.0],
    };
    let result = sweep_rho(&cfg).unwrap();
    for core in cfg.core_grid() {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.core == core).collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.rho).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.diff_l2).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!(
            fit.slope > 2.7 && fit.slope < 3.3,
            "unweighted slope {:.3} for {core:?}",
            fit.slope
        );
    }
    println!("[PASS] norm-insensitivity: unweighted slopes match the weighted ones");
}

#[test]
fn layer_energy_inequality_constant_is_stable() {
    // The layer energy inequality carries a constant that must not drift
    // across the sweep (stability within a factor of three).
    let cfg = Config::default();
    let psi = VshExpansion::single_grad(6, 2.0, 1, 0);
    let mut constants = Vec::new();
    for &rho in &[0.2, 0.1, 0.05] {
        let m = emcloak::sweeps::measure_dissipation_constant(&cfg, rho, &psi).unwrap();
        constants.push(m.constant);
    }
    let max = constants.iter().cloned().fold(0.0f64, f64::max);
    let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = max / min < 3.0;
    report(
        "layer energy inequality",
        pass,
        &format!("constants {constants:?} spread {:.2} < 3", max / min),
    );
}

#[test]
fn thdiv_norm_weighted_single_mode_value() {
    // Frozen spot value: the weighted norm of a unit gradient dipole mode is
    // (1 + 2)^{1/4}.
    let w = WeightedNorm::new(2);
    let e = VshExpansion::single_grad(2, 2.0, 1, 0);
    let norm = thdiv_norm(&e, &w).unwrap();
    assert!((norm - 3.0f64.powf(0.25)).abs() < 1e-14);
    println!("[PASS] trace norm spot value 3^(1/4)");
}
