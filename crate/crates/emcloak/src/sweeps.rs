//! Parameter sweeps, slope fits, the resonance scan and the invariant check
//! suite backing both the command-line harness and the acceptance tests.

use crate::admittance::{
    admittance_diff_norm, admittance_diff_norm_l2, duality_pairing, energy_identity_residual,
    spectral_pairing, thdiv_norm, EnergyQuadrature, WeightedNorm,
};
use crate::bie::{kernel_split, radiation_defect, NearQuadrature};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{make_sphere_mesh_with_rule, GaussSphereGrid};
use crate::media::{virtual_medium_spec, CoreMaterial, LayerConstants};
use crate::mie::expansion::{mode_index, n_modes, vsh_analyze, VshExpansion};
use crate::mie::{
    admittance_sphere, free_space_admittance, is_em_eigenvalue, solve_layered_sphere,
    AdmittanceMatrix,
};
use crate::scattering::solve_lemma_crucial;
use crate::trace::TangentialTrace;
use crate::Vec3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Slope fitting
// ---------------------------------------------------------------------------

/// Least-squares fit of log(y) against log(x).
#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Per-point residuals of the log-log fit.
    pub residuals: Vec<f64>,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Validation("slope fit needs at least two points".into()));
    }
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::Numeric("slope fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean = sy / n;
    let ss_tot: f64 = ly.iter().map(|y| (y - mean) * (y - mean)).sum();
    let residuals: Vec<f64> = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r_squared, residuals })
}

// ---------------------------------------------------------------------------
// Admittance-difference sweep over rho and the core grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RhoSweepRow {
    pub rho: f64,
    pub core: CoreMaterial,
    /// Weighted operator norm of the admittance difference.
    pub diff: f64,
    /// Plain largest-singular-value difference, reported alongside.
    pub diff_l2: f64,
}

#[derive(Debug, Clone)]
pub struct CoreSummary {
    pub core: CoreMaterial,
    pub fit: SlopeFit,
    /// max over rho of diff / rho^3.
    pub c_hat: f64,
}

#[derive(Debug, Clone)]
pub struct RhoSweepResult {
    pub rows: Vec<RhoSweepRow>,
    pub cores: Vec<CoreSummary>,
    /// Gate value of the eigenvalue scan at the sweep frequency.
    pub eigenvalue_margin: f64,
}

/// Admittance difference of one virtual configuration against free space.
pub fn admittance_difference(
    rho: f64,
    consts: LayerConstants,
    core: CoreMaterial,
    cfg: &Config,
    free: &AdmittanceMatrix,
    weights: &WeightedNorm,
) -> Result<(f64, f64)> {
    let spec = virtual_medium_spec(
        rho,
        consts,
        core,
        cfg.geometry.r_d,
        cfg.geometry.r_omega,
        cfg.omega,
        cfg.medium.literal_mu_scaling,
    )?;
    let adm = admittance_sphere(&spec, cfg.n_max)?;
    Ok((
        admittance_diff_norm(&adm, free, weights)?,
        admittance_diff_norm_l2(&adm, free)?,
    ))
}

/// Oracle sweep of || Lambda_rho - Lambda_0 || over the rho list and core
/// grid, with per-core slope fits and uniformity constants.
pub fn sweep_rho(cfg: &Config) -> Result<RhoSweepResult> {
    cfg.validate()?;
    let chk = is_em_eigenvalue(cfg.omega, cfg.geometry.r_omega, cfg.n_max, 1e-6)?;
    if chk.is_eigenvalue {
        return Err(Error::Resonance(format!(
            "omega = {} is within tolerance of an interior resonance (margin {:.3e})",
            cfg.omega, chk.min_det
        )));
    }
    let free = free_space_admittance(cfg.geometry.r_omega, cfg.omega, cfg.n_max)?;
    let weights = WeightedNorm::new(cfg.n_max);
    let consts = cfg.layer_constants();
    let cores = cfg.core_grid();

    let jobs: Vec<(f64, CoreMaterial)> = cores
        .iter()
        .flat_map(|&core| cfg.sweep.rho.iter().map(move |&rho| (rho, core)))
        .collect();
    let rows: Vec<RhoSweepRow> = jobs
        .par_iter()
        .map(|&(rho, core)| {
            let (diff, diff_l2) =
                admittance_difference(rho, consts, core, cfg, &free, &weights)?;
            Ok(RhoSweepRow { rho, core, diff, diff_l2 })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    for &core in &cores {
        let pts: Vec<&RhoSweepRow> = rows.iter().filter(|r| r.core == core).collect();
        let xs: Vec<f64> = pts.iter().map(|r| r.rho).collect();
        let ys: Vec<f64> = pts.iter().map(|r| r.diff).collect();
        // A contrast-free configuration produces zero differences; skip the
        // fit and report a flat summary.
        if ys.iter().all(|&y| y < 1e-14) {
            summaries.push(CoreSummary {
                core,
                fit: SlopeFit { slope: f64::NAN, intercept: 0.0, r_squared: 1.0, residuals: vec![] },
                c_hat: 0.0,
            });
            continue;
        }
        let fit = fit_loglog(&xs, &ys)?;
        let c_hat = pts
            .iter()
            .map(|r| r.diff / r.rho.powi(3))
            .fold(0.0f64, f64::max);
        summaries.push(CoreSummary { core, fit, c_hat });
    }
    Ok(RhoSweepResult { rows, cores: summaries, eigenvalue_margin: chk.min_det })
}

// ---------------------------------------------------------------------------
// Resonant-core scan (the layer-removed stress test)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BustingScan {
    /// Near-resonant permittivity found by the scan.
    pub eps_star: f64,
    /// rho value at which the resonance was located.
    pub rho_star: f64,
    /// Worst-core summary with the conducting layer removed.
    pub unshielded: CoreSummary,
    /// The same core with the conducting layer in place.
    pub shielded: CoreSummary,
    /// Baseline uniformity constant of the standard grid with the layer on.
    pub baseline_c_hat: f64,
    /// Worst (largest) c_hat over the extended grid with the layer on.
    pub shielded_worst_c_hat: f64,
    /// Smallest slope over the extended grid with the layer on.
    pub shielded_worst_slope: f64,
}

fn core_summary_for(
    cfg: &Config,
    consts: LayerConstants,
    core: CoreMaterial,
    free: &AdmittanceMatrix,
    weights: &WeightedNorm,
) -> Result<CoreSummary> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &rho in &cfg.sweep.rho {
        let (diff, _) = admittance_difference(rho, consts, core, cfg, free, weights)?;
        xs.push(rho);
        ys.push(diff.max(1e-300));
    }
    let fit = fit_loglog(&xs, &ys)?;
    let c_hat = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y / x.powi(3))
        .fold(0.0f64, f64::max);
    Ok(CoreSummary { core, fit, c_hat })
}

/// Locate a cloak-busting core: with the conducting layer removed, scan the
/// lossless permittivity axis for an interior resonance of the small
/// inclusion and refine it; then compare against the same core with the
/// layer in place and against the baseline grid.
pub fn busting_scan(cfg: &Config) -> Result<BustingScan> {
    let free = free_space_admittance(cfg.geometry.r_omega, cfg.omega, cfg.n_max)?;
    let weights = WeightedNorm::new(cfg.n_max);
    let no_layer = LayerConstants { gamma0: 0.0, ..cfg.layer_constants() };
    let with_layer = cfg.layer_constants();

    // Scan at one representative rho (resonances are rho-specific); the
    // middle of the sweep keeps the resonance inside the fitted range. The
    // scan itself probes low degrees only, which is where the busting
    // resonances live; candidates are then re-evaluated at full truncation.
    let rho_star = cfg.sweep.rho[cfg.sweep.rho.len() / 2];
    let mut scan_cfg = cfg.clone();
    scan_cfg.n_max = 2;
    let scan_free = free_space_admittance(cfg.geometry.r_omega, cfg.omega, scan_cfg.n_max)?;
    let scan_weights = WeightedNorm::new(scan_cfg.n_max);
    let diff_at = |eps: f64, consts: LayerConstants| -> f64 {
        let core = CoreMaterial { eps, mu: 1.0, sigma: 0.0 };
        admittance_difference(rho_star, consts, core, &scan_cfg, &scan_free, &scan_weights)
            .map(|d| d.0)
            .unwrap_or(f64::INFINITY)
    };

    // Coarse log scan for the strongest peak.
    let npts = 6000;
    let (lo_exp, hi_exp) = (1.0, 4.4);
    let mut best = (0.0f64, 0.0f64);
    let mut prev2 = 0.0;
    let mut prev1 = 0.0;
    let mut prev_eps = 0.0;
    for i in 0..npts {
        let eps = 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (npts - 1) as f64);
        let d = diff_at(eps, no_layer);
        if prev1 > prev2 && prev1 >= d && prev1 > best.1 && prev1.is_finite() {
            best = (prev_eps, prev1);
        }
        prev2 = prev1;
        prev1 = d;
        prev_eps = eps;
    }
    if best.1 == 0.0 {
        return Err(Error::Numeric("resonance scan found no peak".into()));
    }
    // Golden-section refinement of the peak.
    let (mut lo, mut hi) = (best.0 * 0.995, best.0 * 1.005);
    for _ in 0..60 {
        let m1 = lo + 0.381_966 * (hi - lo);
        let m2 = lo + 0.618_034 * (hi - lo);
        if diff_at(m1, no_layer) < diff_at(m2, no_layer) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    // The refinement can land on the resonance itself, where the modal
    // system is singular; nudge to a nearby value that still solves at the
    // full truncation. Near-resonant is what the stress test needs.
    let mut eps_star = 0.5 * (lo + hi);
    let mut unshielded = None;
    for k in 0..24 {
        let eps_try = eps_star * (1.0 + 3e-8 * (k * k) as f64);
        let core_try = CoreMaterial { eps: eps_try, mu: 1.0, sigma: 0.0 };
        if let Ok(summary) = core_summary_for(cfg, no_layer, core_try, &free, &weights) {
            eps_star = eps_try;
            unshielded = Some(summary);
            break;
        }
    }
    let unshielded = unshielded.ok_or_else(|| {
        Error::Resonance("could not settle near the busting resonance".into())
    })?;
    let core_star = CoreMaterial { eps: eps_star, mu: 1.0, sigma: 0.0 };
    let shielded = core_summary_for(cfg, with_layer, core_star, &free, &weights)?;

    // Baseline and worst-case over the extended grid with the layer on.
    let mut grid = cfg.core_grid();
    grid.push(core_star);
    let mut baseline_c_hat = 0.0f64;
    let mut shielded_worst_c_hat = 0.0f64;
    let mut shielded_worst_slope = f64::INFINITY;
    for &core in &grid {
        let s = core_summary_for(cfg, with_layer, core, &free, &weights)?;
        shielded_worst_c_hat = shielded_worst_c_hat.max(s.c_hat);
        if s.fit.slope.is_finite() {
            shielded_worst_slope = shielded_worst_slope.min(s.fit.slope);
        }
        if core != core_star {
            baseline_c_hat = baseline_c_hat.max(s.c_hat);
        }
    }
    Ok(BustingScan {
        eps_star,
        rho_star,
        unshielded,
        shielded,
        baseline_c_hat,
        shielded_worst_c_hat,
        shielded_worst_slope,
    })
}

// ---------------------------------------------------------------------------
// Exterior-estimate sweeps over tau
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PropsRow {
    pub tau: f64,
    /// Weighted trace norm of nu x (H - H_0) on the outer boundary.
    pub norm: f64,
    pub exterior_residual: f64,
    pub annulus_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PropsSweep {
    pub rows: Vec<PropsRow>,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone)]
pub struct PropsResult {
    /// Sweep driven by outer boundary data (cubic decay expected).
    pub psi_driven: PropsSweep,
    /// Sweep driven by obstacle data of unit scaled norm (quadratic decay).
    pub phi_driven: PropsSweep,
}

/// Run both tau sweeps of the composed exterior/annulus solver.
///
/// The obstacle-data profile is a gradient-type dipole harmonic: its induced
/// density has a nonvanishing mean, which is what exhibits the worst-case
/// quadratic rate (rotationally symmetric profiles cancel the dipole moment
/// and decay cubically instead).
pub fn sweep_props(cfg: &Config, near: &NearQuadrature) -> Result<PropsResult> {
    let rule = cfg.tri_rule()?;
    let outer = make_sphere_mesh_with_rule(cfg.geometry.r_omega, cfg.geometry.refinement, rule)?;
    let inner = make_sphere_mesh_with_rule(cfg.geometry.r_d, cfg.geometry.refinement, rule)?;
    let n_max = cfg.n_max.min(8);
    let weights = WeightedNorm::new(n_max);

    let mut psi = VshExpansion::zero(n_max, cfg.geometry.r_omega);
    psi.grad[mode_index(1, 0)] = Complex64::ONE;
    psi.rot[mode_index(1, 1)] = Complex64::new(0.4, -0.2);

    let mut psi_rows = Vec::new();
    for &tau in &cfg.sweep.tau {
        let out = solve_lemma_crucial(&outer, &inner, cfg.omega, tau, None, &psi, near)?;
        let exp = vsh_analyze(&out.trace, &outer, n_max)?;
        psi_rows.push(PropsRow {
            tau,
            norm: thdiv_norm(&exp, &weights)?,
            exterior_residual: out.exterior_residual,
            annulus_residual: out.annulus_residual,
        });
    }
    let psi_fit = fit_loglog(
        &psi_rows.iter().map(|r| r.tau).collect::<Vec<_>>(),
        &psi_rows.iter().map(|r| r.norm).collect::<Vec<_>>(),
    )?;

    let psi0 = VshExpansion::zero(n_max, cfg.geometry.r_omega);
    let profile = VshExpansion::single_grad(2, cfg.geometry.r_d, 1, 0);
    let mut phi_rows = Vec::new();
    for &tau in &cfg.sweep.tau {
        let mesh_tau = crate::geometry::scale_mesh(&inner, tau)?;
        let phi = TangentialTrace::from_fn(&mesh_tau, |x| {
            // Fixed reference-coordinate profile phi(tau x') of unit scale.
            profile.eval(x / tau)
        });
        let out = solve_lemma_crucial(&outer, &inner, cfg.omega, tau, Some(&phi), &psi0, near)?;
        let exp = vsh_analyze(&out.trace, &outer, n_max)?;
        phi_rows.push(PropsRow {
            tau,
            norm: thdiv_norm(&exp, &weights)?,
            exterior_residual: out.exterior_residual,
            annulus_residual: out.annulus_residual,
        });
    }
    let phi_fit = fit_loglog(
        &phi_rows.iter().map(|r| r.tau).collect::<Vec<_>>(),
        &phi_rows.iter().map(|r| r.norm).collect::<Vec<_>>(),
    )?;

    Ok(PropsResult {
        psi_driven: PropsSweep { rows: psi_rows, fit: psi_fit },
        phi_driven: PropsSweep { rows: phi_rows, fit: phi_fit },
    })
}

// ---------------------------------------------------------------------------
// Dissipation inequality and trace-control report
// ---------------------------------------------------------------------------

/// Measured constants of the layer energy inequality
/// int_layer |E|^2 <= C rho^2 ||psi|| ||nu x (H - H_0)||.
#[derive(Debug, Clone)]
pub struct DissipationMeasurement {
    pub rho: f64,
    /// int |E|^2 over the conducting layer (unweighted).
    pub lhs: f64,
    pub psi_norm: f64,
    pub diff_norm: f64,
    pub constant: f64,
}

/// Evaluate the layer energy inequality on oracle solutions.
pub fn measure_dissipation_constant(
    cfg: &Config,
    rho: f64,
    psi: &VshExpansion,
) -> Result<DissipationMeasurement> {
    let consts = cfg.layer_constants();
    let spec = virtual_medium_spec(
        rho,
        consts,
        CoreMaterial::vacuum(),
        cfg.geometry.r_d,
        cfg.geometry.r_omega,
        cfg.omega,
        cfg.medium.literal_mu_scaling,
    )?;
    let sol = solve_layered_sphere(&spec, psi)?;
    let seam = rho * cfg.geometry.r_d;
    let lhs = crate::admittance::volume_integral_e2(
        &sol,
        0.5 * seam,
        seam,
        EnergyQuadrature::default(),
    )?;
    let weights = WeightedNorm::new(psi.n_max);
    let psi_norm = thdiv_norm(psi, &weights)?;
    let free_spec = crate::mie::LayeredSphereSpec::vacuum(cfg.geometry.r_omega, cfg.omega)?;
    let free = solve_layered_sphere(&free_spec, psi)?;
    let diff = sol.nu_cross_h_boundary()?.sub(&free.nu_cross_h_boundary()?)?;
    let diff_norm = thdiv_norm(&diff, &weights)?;
    let constant = lhs / (rho * rho * psi_norm * diff_norm).max(1e-300);
    Ok(DissipationMeasurement { rho, lhs, psi_norm, diff_norm, constant })
}

/// Side-by-side report of the obstacle-boundary trace bound: the measured
/// scaled trace norm against the transmission prefactor
/// rho^{-1} |1 + omega^2 rho^2 (1 + i rho^{-2}/omega)|^2 ||psi|| ||diff||.
#[derive(Debug, Clone)]
pub struct TraceControlReport {
    pub rho: f64,
    pub lhs_sq: f64,
    pub bound: f64,
    pub ratio: f64,
}

pub fn trace_control_report(cfg: &Config, rho: f64, psi: &VshExpansion) -> Result<TraceControlReport> {
    let spec = virtual_medium_spec(
        rho,
        cfg.layer_constants(),
        CoreMaterial::vacuum(),
        cfg.geometry.r_d,
        cfg.geometry.r_omega,
        cfg.omega,
        cfg.medium.literal_mu_scaling,
    )?;
    let sol = solve_layered_sphere(&spec, psi)?;
    // Scaled inner trace on the reference surface: coefficients at the
    // obstacle boundary divided by rho (the reference basis carries 1/R_D
    // instead of 1/(rho R_D)).
    let seam = rho * cfg.geometry.r_d;
    let mut lhs_sq = 0.0;
    for n in 1..=psi.n_max {
        let (a_e_unit, b_e_unit, _, _) = sol.mode_trace_coeffs(n, 1, seam * (1.0 - 1e-12))?;
        for m in -(n as i64)..=(n as i64) {
            let k = mode_index(n, m);
            let p_drive = sol.psi.grad[k];
            let a_drive = -sol.psi.rot[k];
            let a_e = a_drive * a_e_unit / Complex64::from(rho);
            let b_e = p_drive * b_e_unit / Complex64::from(rho);
            // Plain tangential Sobolev weight of order -1/2 applied to the
            // L2-normalized coefficients.
            let w = ((n * (n + 1)) as f64) / (1.0 + (n * (n + 1)) as f64).sqrt();
            lhs_sq += w * (a_e.norm_sqr() + b_e.norm_sqr());
        }
    }
    let weights = WeightedNorm::new(psi.n_max);
    let psi_norm = thdiv_norm(psi, &weights)?;
    let free_spec = crate::mie::LayeredSphereSpec::vacuum(cfg.geometry.r_omega, cfg.omega)?;
    let free = solve_layered_sphere(&free_spec, psi)?;
    let diff = sol.nu_cross_h_boundary()?.sub(&free.nu_cross_h_boundary()?)?;
    let diff_norm = thdiv_norm(&diff, &weights)?;
    // |1 + omega^2 rho^2 (1 + i rho^{-2} / omega)|^2.
    let f = Complex64::ONE
        + Complex64::new(1.0, rho.powi(-2) / cfg.omega) * (cfg.omega * cfg.omega * rho * rho);
    let bound = rho.recip() * f.norm_sqr() * psi_norm * diff_norm;
    Ok(TraceControlReport { rho, lhs_sq, bound, ratio: lhs_sq / bound.max(1e-300) })
}

// ---------------------------------------------------------------------------
// Invariant check suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckItem {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub note: String,
}

fn item(name: &str, measured: f64, threshold: f64, note: &str) -> CheckItem {
    CheckItem {
        name: name.into(),
        measured,
        threshold,
        pass: measured <= threshold,
        note: note.into(),
    }
}

fn random_expansion(rng: &mut ChaCha8Rng, n_max: usize, radius: f64) -> VshExpansion {
    let mut e = VshExpansion::zero(n_max, radius);
    for k in 0..n_modes(n_max) {
        e.grad[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        e.rot[k] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    e
}

/// Run the full invariant suite at quick desk settings. Failures are entries,
/// not errors.
pub fn check_suite(cfg: &Config) -> Result<Vec<CheckItem>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.geometry.r_omega;
    let n_chk = 6;
    let grid = GaussSphereGrid::for_degree(r, n_chk);

    // Pairing skewness on random band-limited traces.
    let tj = random_expansion(&mut rng, n_chk, r).synthesize(&grid);
    let tm = random_expansion(&mut rng, n_chk, r).synthesize(&grid);
    let bjm = duality_pairing(&tj, &tm, &grid)?;
    let bmj = duality_pairing(&tm, &tj, &grid)?;
    out.push(item(
        "pairing-skewness",
        (bjm + bmj).norm() / bjm.norm().max(1e-300),
        1e-12,
        "B(j,m) + B(m,j) relative to |B(j,m)|",
    ));

    // Self-pairing vanishes.
    let bjj = duality_pairing(&tj, &tj, &grid)?;
    out.push(item(
        "pairing-self",
        bjj.norm() / tj.l2_norm(&grid).powi(2).max(1e-300),
        1e-12,
        "B(j,j) relative to ||j||^2",
    ));

    // Norm axioms: homogeneity and triangle inequality on random expansions.
    let weights = WeightedNorm::new(n_chk);
    let ea = random_expansion(&mut rng, n_chk, r);
    let eb = random_expansion(&mut rng, n_chk, r);
    let lam = Complex64::new(-1.3, 0.7);
    let homog = (thdiv_norm(&ea.scaled(lam), &weights)? - lam.norm() * thdiv_norm(&ea, &weights)?)
        .abs()
        / thdiv_norm(&ea, &weights)?;
    out.push(item("norm-homogeneity", homog, 1e-12, "|n(l e) - |l| n(e)| / n(e)"));
    let mut sum = ea.clone();
    for k in 0..sum.grad.len() {
        sum.grad[k] += eb.grad[k];
        sum.rot[k] += eb.rot[k];
    }
    let tri = thdiv_norm(&sum, &weights)?
        - thdiv_norm(&ea, &weights)?
        - thdiv_norm(&eb, &weights)?;
    out.push(item("norm-triangle", tri.max(0.0), 1e-12, "n(a+b) - n(a) - n(b), clipped"));

    // Reciprocity of the free-space admittance through the pairing.
    let adm = free_space_admittance(r, cfg.omega, n_chk)?;
    let recj = random_expansion(&mut rng, n_chk, r);
    let recm = random_expansion(&mut rng, n_chk, r);
    let rec = (spectral_pairing(&adm.apply(&recj)?, &recm)?
        + spectral_pairing(&recj, &adm.apply(&recm)?)?)
    .norm();
    let scale = spectral_pairing(&adm.apply(&recj)?, &recm)?.norm().max(1e-300);
    out.push(item("admittance-reciprocity", rec / scale, 1e-8, "B(Lj,m) + B(j,Lm)"));

    // Lossless energy balance.
    let spec = crate::mie::LayeredSphereSpec::new(
        vec![0.3 * r, r],
        vec![
            crate::mie::LayerMedium { eps: 4.0, mu: 1.0, sigma: 0.0 },
            crate::mie::LayerMedium::vacuum(),
        ],
        cfg.omega,
    )?;
    let psi = random_expansion(&mut rng, 3, r);
    let sol = solve_layered_sphere(&spec, &psi)?;
    let bal = energy_identity_residual(&sol, EnergyQuadrature::default())?;
    let pscale: f64 = psi.coeff_norm();
    out.push(item(
        "energy-balance-lossless",
        bal.rhs.abs() / (pscale * pscale),
        1e-8,
        "boundary flux of a lossless solve",
    ));

    // Dissipative energy identity.
    let rho0 = cfg.sweep.rho[cfg.sweep.rho.len() / 2];
    let spec = virtual_medium_spec(
        rho0,
        cfg.layer_constants(),
        CoreMaterial { eps: 10.0, mu: 1.0, sigma: 1.0 },
        cfg.geometry.r_d,
        r,
        cfg.omega,
        cfg.medium.literal_mu_scaling,
    )?;
    let sol = solve_layered_sphere(&spec, &VshExpansion::single_grad(2, r, 1, 0))?;
    let bal = energy_identity_residual(&sol, EnergyQuadrature::default())?;
    out.push(item("energy-identity", bal.residual, 1e-6, "dissipation balance residual"));

    // Mesh refinement convergence of the surface area.
    let mut errs = Vec::new();
    for refinement in 1..=3 {
        let mesh = make_sphere_mesh_with_rule(1.0, refinement, crate::geometry::TriRule::Gauss3)?;
        errs.push((mesh.area() - 4.0 * std::f64::consts::PI).abs());
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    out.push(CheckItem {
        name: "mesh-convergence".into(),
        measured: errs[2],
        threshold: errs[0],
        pass: monotone,
        note: "area defect decreasing over refinements 1..3".into(),
    });

    // Kernel splitting reconstruction and remainder bound.
    let xp = Vec3::new(0.8, 0.1, -0.5);
    let yp = Vec3::new(-0.4, 0.6, 0.2);
    let mut worst = 0.0f64;
    for &tau in &[0.1, 0.05, 0.025] {
        let split = kernel_split(xp, yp, tau, cfg.omega)?;
        let direct = crate::bie::helmholtz_kernel(xp * tau, yp * tau, cfg.omega)?.value
            * Complex64::from(tau);
        worst = worst.max((split.total() - direct).norm() / direct.norm());
    }
    out.push(item("kernel-split-reconstruction", worst, 1e-13, "splitting sums to the kernel"));

    // Trace consistency and radiation decay of a small exterior solve.
    let mesh = make_sphere_mesh_with_rule(1.0, 1, crate::geometry::TriRule::Gauss3)?;
    let near = NearQuadrature::default();
    let omega = cfg.omega;
    let p = Vec3::new(0.3, -1.0, 0.5);
    let dipole = |x: Vec3| {
        let g = crate::bie::helmholtz_kernel(x, Vec3::zeros(), omega).unwrap().grad_x;
        crate::ccross(&g, &crate::cvec3_from_real(p))
    };
    let phi = TangentialTrace::from_fn(&mesh, |x| crate::rcross(&(x / x.norm()), &dipole(x)));
    let ext = crate::scattering::solve_exterior(&mesh, omega, &phi, &near)?;
    out.push(item(
        "trace-consistency",
        ext.residual,
        1e-10,
        "linear residual of the trace equation",
    ));
    let far = Vec3::new(0.4, 0.7, -0.3).normalize() * 3.0;
    let rel = (ext.eval_e(far)? - dipole(far)).norm() / dipole(far).norm();
    out.push(item("exterior-uniqueness", rel, 2e-2, "field error vs analytic source"));
    let mut defects = Vec::new();
    for &rr in &[10.0, 20.0, 40.0] {
        defects.push(radiation_defect(&ext.mesh, &ext.density, Vec3::new(1.0, 0.4, 0.2).normalize() * rr, omega)?);
    }
    let decaying = defects.windows(2).all(|w| w[1] < w[0]);
    out.push(CheckItem {
        name: "radiation-decay".into(),
        measured: defects[2],
        threshold: defects[0],
        pass: decaying,
        note: "scaled radiation defect decreasing over |x| = 10, 20, 40".into(),
    });

    // Eigenvalue guard at the configured frequency.
    let chk = is_em_eigenvalue(cfg.omega, r, cfg.n_max, 1e-6)?;
    out.push(CheckItem {
        name: "eigenvalue-guard".into(),
        measured: chk.min_det,
        threshold: 1e-6,
        pass: !chk.is_eigenvalue,
        note: format!("modal margin at n = {}", chk.worst_n),
    });

    // Determinism: two identical small sweeps render identical CSV.
    let mut small = cfg.clone();
    small.n_max = 6;
    small.sweep.rho = vec![0.2, 0.1];
    small.cores = crate::config::CoreGridConfig { eps: vec![1.0, 10.0], mu: vec![1.0], sigma: vec![0.0] };
    let csv1 = render_rho_csv(&sweep_rho(&small)?);
    let csv2 = render_rho_csv(&sweep_rho(&small)?);
    out.push(CheckItem {
        name: "determinism".into(),
        measured: if csv1 == csv2 { 0.0 } else { 1.0 },
        threshold: 0.0,
        pass: csv1 == csv2,
        note: "identical config renders identical CSV".into(),
    });

    // Trace-control report (non-asserting; recorded for inspection).
    let psi1 = VshExpansion::single_grad(cfg.n_max.min(6), r, 1, 0);
    let tc = trace_control_report(cfg, rho0, &psi1)?;
    out.push(CheckItem {
        name: "obstacle-trace-control".into(),
        measured: tc.ratio,
        threshold: f64::INFINITY,
        pass: true,
        note: format!(
            "scaled trace vs transmission prefactor at rho = {} (lhs^2 {:.3e}, bound {:.3e})",
            tc.rho, tc.lhs_sq, tc.bound
        ),
    });

    Ok(out)
}

/// Negative control: corrupt a quadrature weight and verify that the
/// pairing-skewness check trips.
pub fn corrupted_weight_control(cfg: &Config) -> Result<CheckItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.geometry.r_omega;
    let grid = GaussSphereGrid::for_degree(r, 4);
    let tj = random_expansion(&mut rng, 4, r).synthesize(&grid);
    let tm = random_expansion(&mut rng, 4, r).synthesize(&grid);
    // Corrupt one node of j only in the first slot of the pairing; the
    // identity j.(m x nu) = -m.(j x nu) then fails pointwise.
    let mut tj_bad = tj.clone();
    tj_bad.values[0] *= Complex64::from(1.5);
    let bjm = duality_pairing(&tj_bad, &tm, &grid)?;
    let bmj = duality_pairing(&tm, &tj, &grid)?;
    let defect = (bjm + bmj).norm() / bjm.norm().max(1e-300);
    Ok(CheckItem {
        name: "negative-control".into(),
        measured: defect,
        threshold: 1e-12,
        pass: defect > 1e-12,
        note: "corrupted trace must break skewness".into(),
    })
}

// ---------------------------------------------------------------------------
// CSV rendering (versioned, deterministic)
// ---------------------------------------------------------------------------

pub const CSV_VERSION: &str = "emcloak-csv v1";

pub fn render_rho_csv(result: &RhoSweepResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {CSV_VERSION} rho-sweep");
    let _ = writeln!(s, "rho,core_eps,core_mu,core_sigma,diff_weighted,diff_l2");
    for row in &result.rows {
        let _ = writeln!(
            s,
            "{:.6e},{:.6e},{:.6e},{:.6e},{:.17e},{:.17e}",
            row.rho, row.core.eps, row.core.mu, row.core.sigma, row.diff, row.diff_l2
        );
    }
    let _ = writeln!(s, "# core_eps,core_mu,core_sigma,slope,r_squared,c_hat");
    for c in &result.cores {
        let _ = writeln!(
            s,
            "# {:.6e},{:.6e},{:.6e},{:.6},{:.6},{:.9e}",
            c.core.eps, c.core.mu, c.core.sigma, c.fit.slope, c.fit.r_squared, c.c_hat
        );
    }
    s
}

pub fn render_props_csv(result: &PropsResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {CSV_VERSION} props-sweep");
    let _ = writeln!(s, "drive,tau,norm,exterior_residual,annulus_residual");
    for (tag, sweep) in [("psi", &result.psi_driven), ("phi", &result.phi_driven)] {
        for row in &sweep.rows {
            let _ = writeln!(
                s,
                "{tag},{:.6e},{:.17e},{:.3e},{:.3e}",
                row.tau, row.norm, row.exterior_residual, row.annulus_residual
            );
        }
        let _ = writeln!(
            s,
            "# {tag}: slope {:.6} r_squared {:.6}",
            sweep.fit.slope, sweep.fit.r_squared
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_power_law() {
        let xs = [0.4, 0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 5.0 * x.powi(3)).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept.exp() - 5.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_nonpositive_values() {
        assert!(fit_loglog(&[0.1, 0.2], &[1.0, 0.0]).is_err());
        assert!(fit_loglog(&[0.1], &[1.0]).is_err());
    }

    #[test]
    fn vacuum_cores_give_zero_rows() {
        // gamma0 = 0 and vacuum core: no contrast at all, slope fit skipped.
        let mut cfg = Config::default();
        cfg.n_max = 4;
        cfg.medium.gamma0 = 0.0;
        cfg.cores = crate::config::CoreGridConfig {
            eps: vec![1.0],
            mu: vec![1.0],
            sigma: vec![0.0],
        };
        cfg.sweep.rho = vec![0.2, 0.1];
        let res = sweep_rho(&cfg).unwrap();
        for row in &res.rows {
            assert!(row.diff < 1e-13, "diff {}", row.diff);
        }
        assert!(res.cores[0].fit.slope.is_nan());
        assert_eq!(res.cores[0].c_hat, 0.0);
    }

    #[test]
    fn default_sweep_has_cubic_slopes() {
        let mut cfg = Config::default();
        cfg.n_max = 8;
        cfg.cores = crate::config::CoreGridConfig {
            eps: vec![1.0, 100.0],
            mu: vec![1.0],
            sigma: vec![0.0],
        };
        let res = sweep_rho(&cfg).unwrap();
        for c in &res.cores {
            assert!(
                c.fit.slope > 2.7 && c.fit.slope < 3.3,
                "slope {} for {:?}",
                c.fit.slope,
                c.core
            );
            assert!(c.fit.r_squared > 0.98);
        }
    }

    #[test]
    fn sweep_aborts_near_resonance() {
        let mut cfg = Config::default();
        cfg.n_max = 4;
        // TE dipole resonance of the vacuum ball radius 2.
        cfg.omega = 4.4934094579090641 / 2.0;
        assert!(matches!(sweep_rho(&cfg), Err(Error::Resonance(_))));
    }

    #[test]
    fn check_suite_passes_on_defaults() {
        let mut cfg = Config::default();
        cfg.n_max = 8;
        let items = check_suite(&cfg).unwrap();
        for item in &items {
            assert!(item.pass, "{}: measured {:.3e} vs {:.3e} ({})",
                item.name, item.measured, item.threshold, item.note);
        }
    }

    #[test]
    fn negative_control_detects_corruption() {
        let cfg = Config::default();
        let item = corrupted_weight_control(&cfg).unwrap();
        assert!(item.pass, "corruption must be detected: defect {}", item.measured);
    }

    #[test]
    fn dissipation_constant_is_stable() {
        let mut cfg = Config::default();
        cfg.n_max = 6;
        let psi = VshExpansion::single_grad(6, 2.0, 1, 0);
        let mut consts = Vec::new();
        for &rho in &[0.2, 0.1, 0.05] {
            let m = measure_dissipation_constant(&cfg, rho, &psi).unwrap();
            assert!(m.lhs > 0.0);
            consts.push(m.constant);
        }
        let max = consts.iter().cloned().fold(0.0f64, f64::max);
        let min = consts.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "constants {consts:?}");
    }
}
