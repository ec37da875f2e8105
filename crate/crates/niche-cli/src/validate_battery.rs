//! The default identity-audit battery behind the `validate` subcommand.

use niche_core::geometry::Point;
use niche_core::kernels::Kernels;
use niche_core::pde::{self, CoeffSpec, InitialField, SolveConfig};
use niche_core::validate::{
    check_c_o, check_c_star, check_jump_normalization, check_neumann_local,
    check_neumann_local_refinement, check_neumann_nonlocal, check_pi_normalization,
    check_walk_normalization, probe_points, ResidualEntry, ResidualReport,
};

use crate::config::ValidateConfig;

pub fn run_battery(cfg: &ValidateConfig, seed: u64, quiet: bool) -> anyhow::Result<ResidualReport> {
    let mut report = ResidualReport::default();
    let skip = |name: &str| cfg.skip.iter().any(|s| s == name);
    let domain_1d = crate::default_domain_1d();
    let domain_2d = crate::default_domain_2d();

    if !skip("kernel_normalization_1d") {
        let k = Kernels::new(cfg.process_1d, domain_1d.clone())?;
        let probes = probe_points(&domain_1d, &cfg.process_1d, cfg.probes);
        report.extend(check_walk_normalization(&k, &probes, 1e-6)?);
        report.extend(check_jump_normalization(&k, &probes, 1e-6)?);
    }
    if !skip("kernel_normalization_2d") {
        let k = Kernels::new(cfg.process_2d, domain_2d.clone())?;
        let probes = probe_points(&domain_2d, &cfg.process_2d, cfg.probes);
        report.extend(check_walk_normalization(&k, &probes, 1e-4)?);
        report.extend(check_jump_normalization(&k, &probes, 1e-4)?);
    }
    if !skip("kernel_symmetry") {
        report.push(symmetry_entry(&cfg.process_1d, &domain_1d, 100, seed)?);
        report.push(symmetry_entry(&cfg.process_2d, &domain_2d, 100, seed ^ 0xabcdef)?);
    }
    if !skip("pi_measures") {
        let probes_1d: Vec<Point> = (0..cfg.probes)
            .map(|k| Point::x1(-2.0 + 0.41 * k as f64))
            .collect();
        report.extend(check_pi_normalization(&cfg.process_1d, &probes_1d, 1e-8));
        let probes_2d: Vec<Point> = (0..cfg.probes)
            .map(|k| Point::x2(-1.0 + 0.37 * k as f64, 0.5 - 0.23 * k as f64))
            .collect();
        report.extend(check_pi_normalization(&cfg.process_2d, &probes_2d, 1e-8));
    }
    if !skip("constants") {
        for n in 1..=3 {
            report.push(check_c_o(n, 1e-10));
        }
        let (entries, _) = check_c_star(cfg.mc_samples, seed);
        report.extend(entries);
    }
    if !skip("neumann") {
        let solve = |cells: usize| -> anyhow::Result<_> {
            let cfg = SolveConfig {
                domain: crate::default_domain_1d(),
                cells,
                coeffs: CoeffSpec::FromProcess { s: 0.5, p: 0.5, h: 0.01 },
                initial: InitialField::Cosine { mode: 1, amplitude: 1.0, offset: 1.0 },
                t_final: 0.05,
                snapshot_times: vec![0.05],
                band_factor: 3.0,
                quad_tol: 1e-8,
            };
            Ok(pde::solve(&cfg)?.pop().expect("one snapshot").field)
        };
        let coarse = solve(64)?;
        let fine = solve(128)?;
        report.push(check_neumann_local(&fine, 0.5));
        report.push(check_neumann_local_refinement(&coarse, &fine));
        let probes: Vec<Point> = (0..cfg.probes)
            .map(|k| {
                let d = 0.02 + 1.5 * (k as f64 / cfg.probes.max(1) as f64).powi(2);
                if k % 2 == 0 {
                    Point::x1(1.0 + d)
                } else {
                    Point::x1(-d)
                }
            })
            .collect();
        report.extend(check_neumann_nonlocal(&fine, &probes, 1e-8)?);
    }

    if !quiet {
        for e in &report.entries {
            println!(
                "[{}] {} computed={:.10e} reference={:.10e} tol={:.1e}",
                if e.pass { "pass" } else { "FAIL" },
                e.id,
                e.computed,
                e.reference,
                e.tolerance
            );
        }
    }
    Ok(report)
}

/// Max relative asymmetry of the walk and jump densities over random pairs.
fn symmetry_entry(
    params: &niche_core::ProcessParams,
    domain: &niche_core::Domain,
    pairs: usize,
    seed: u64,
) -> anyhow::Result<ResidualEntry> {
    use rand::{Rng, SeedableRng};
    let k = Kernels::new(*params, domain.clone())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bounding_box();
    let dim = domain.dim();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < pairs {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut c = [0.0f64; 2];
            for (kk, cc) in c.iter_mut().enumerate().take(dim) {
                *cc = lo.coord(kk) + (hi.coord(kk) - lo.coord(kk)) * rng.random::<f64>();
            }
            Point::new(&c[..dim])
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        if !domain.contains(&x) || !domain.contains(&y) {
            continue;
        }
        let wf = k.walk_density(&x, &y)?;
        let wb = k.walk_density(&y, &x)?;
        worst = worst.max((wf - wb).abs() / wf.abs().max(1.0));
        let jf = k.jump_density(&x, &y)?;
        let jb = k.jump_density(&y, &x)?;
        worst = worst.max((jf - jb).abs() / jf.abs().max(1.0));
        done += 1;
    }
    Ok(
        ResidualEntry::new(
            format!("kernel_symmetry/n={dim}"),
            worst,
            0.0,
            1e-10,
            format!("max relative asymmetry over {pairs} uniform pairs"),
        )
        .with_seed(seed),
    )
}
