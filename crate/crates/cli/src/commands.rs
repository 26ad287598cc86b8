//! Subcommand bodies. Each one computes value objects through `seplab`, then
//! renders them into the run's CSV files.

use anyhow::{bail, Context, Result};
use rand::Rng;
use seplab::doublestate::{
    cj_transport_rules_dense, double_state_entanglement_spectrum, naive_map_counterexample, spectral_gap, Weighting,
};
use seplab::fock::FockSpace;
use seplab::gaussian::{
    cda_state_covariance, cda_thouless_state, fit_decay, modular_commutator, occupation_pattern, pair_amplitude_profile,
    tripartition, vacuum_cda_from_pairing, BdgModel, Boundary, GibbsKernel, J0,
};
use seplab::gibbs::{decohere_ground_state, dense_channel_oracle, dense_thermal_state, CommutingProjectorModel};
use seplab::linalg::{c, max_abs, CMatrix, I};
use seplab::models::{all_sector_probabilities, sector_observable_dense, LatticeModel, ModelKind};
use seplab::pauli::PauliOperator;
use seplab::rng::task_rng;
use seplab::statmech::{
    ising_beta_scan, rbim_critical_scan, rbim_point, rpgm_scan, rpgm_wilson_loops, Ensemble, McParams, ScanResult,
    WilsonResult,
};

use crate::config::ConfigError;
use crate::output::{num, Table};
use crate::{
    BoundaryArg, ClusterArgs, Ctx, DoubleCmd, Failed, GibbsCmd, Occupation, PwaveCmd, RbimCmd, RpgmCmd, WeightingArg,
};

/// Agreement threshold for dense comparisons.
pub const DENSE_TOL: f64 = 1e-10;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// `start:stop:count` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("bad grid '{s}': expected start:stop:count or a comma-separated list"));
    let grid: Vec<f64> = if let [a, b, n] = s.split(':').collect::<Vec<_>>()[..] {
        let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        let n: usize = n.parse().map_err(|_| bad())?;
        match n {
            0 => return Err(bad()),
            1 => vec![a],
            _ => (0..n)
                .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                .collect(),
        }
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

/// `cluster1d_4`, `cluster2d_2`, `cluster3d_2`, `kitaev_4`, `levingu_3`.
pub fn named_model(name: &str) -> Option<Result<LatticeModel>> {
    let (kind, size) = name.rsplit_once('_')?;
    let kind = match kind {
        "cluster1d" => ModelKind::Cluster1d,
        "cluster2d" => ModelKind::Cluster2d,
        "cluster3d" => ModelKind::Cluster3d,
        "kitaev" => ModelKind::KitaevChain,
        "levingu" => ModelKind::LevinGu,
        _ => return None,
    };
    let size: usize = size.parse().ok()?;
    Some(LatticeModel::build(kind, &[size]).map_err(Into::into))
}

fn mc_params(ctx: &Ctx, samples: Option<usize>, sweeps: Option<usize>) -> Result<McParams> {
    let mut p = ctx.config.mc.params(ctx.seed);
    if let Some(s) = samples {
        p.samples = s;
    }
    if let Some(s) = sweeps {
        p.sweeps = s;
    }
    if p.samples == 0 || p.sweeps == 0 {
        return Err(usage("--samples and --sweeps must be positive"));
    }
    Ok(p)
}

fn mc_meta(t: &mut Table, p: &McParams) {
    t.meta("samples", p.samples)
        .meta("sweeps", p.sweeps)
        .meta("burn_in", p.burn_in)
        .meta("blocks", p.blocks)
        .meta("seed", p.seed);
}

/// Reports flagged chains; under `--strict` they abort the run.
fn flagged(ctx: &Ctx, what: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let msg = format!("{what}: {n} sample(s) with too few sweeps for their autocorrelation time");
    if ctx.strict {
        bail!(Failed(msg));
    }
    eprintln!("warning: {msg}");
    Ok(())
}

pub fn gibbs(ctx: &mut Ctx, cmd: GibbsCmd) -> Result<()> {
    match cmd {
        GibbsCmd::Verify { model, p, pb } => gibbs_verify(ctx, &model, p, pb),
        GibbsCmd::Export { model } => {
            let lm = named_model(&model).ok_or_else(|| usage(format!("unknown model '{model}'")))??;
            let text = format!("# {model}\n{}", lm.model().to_text());
            ctx.run.write_text(&format!("{model}.model"), &text)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn gibbs_verify(ctx: &mut Ctx, name: &str, p: f64, pb: Option<f64>) -> Result<()> {
    let (model, rates) = match named_model(name) {
        Some(lm) => {
            let lm = lm?;
            let rates = lm.rates(p, pb.unwrap_or(p));
            (lm.model().clone(), rates)
        }
        None => {
            if pb.is_some() {
                return Err(usage("--pb needs a built-in model"));
            }
            let text = std::fs::read_to_string(name)
                .map_err(|e| usage(format!("'{name}' is neither a built-in model nor a readable file: {e}")))?;
            let model = CommutingProjectorModel::from_text(&text).with_context(|| format!("parsing {name}"))?;
            let report = model.validate()?;
            if !report.is_valid() {
                bail!(Failed(format!("{name} is not a commuting-projector model: {report:?}")));
            }
            let n = model.n_terms();
            (model, vec![p; n])
        }
    };
    let gibbs = decohere_ground_state(&model, &rates)?;
    let channel = dense_channel_oracle(&model, &rates)?;
    let mut dev = max_abs(&(&channel - gibbs.to_dense(&model)?));
    if gibbs.betas.iter().all(|b| b.is_finite()) {
        dev = dev.max(max_abs(&(&channel - dense_thermal_state(&model, &gibbs.betas)?)));
    }
    let mut t = Table::new(&["term", "pauli", "rate", "beta"]);
    t.meta("model", name).meta("maxdev", format!("{dev:.3e}")).meta("tolerance", DENSE_TOL);
    for (j, (term, &r)) in model.terms().iter().zip(&rates).enumerate() {
        t.row(vec![j.to_string(), term.pauli().to_string(), num(r), num(gibbs.betas[j])]);
    }
    ctx.run.write("gibbs_verify.csv", &t)?;
    let ok = dev < DENSE_TOL;
    println!("{} maxdev {dev:.1e}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        bail!(Failed(format!("channel output deviates from the Gibbs state by {dev:.3e}")));
    }
    Ok(())
}

/// Closed string operators commuting with every generator.
fn cluster_observables(lm: &LatticeModel) -> Result<Vec<(String, PauliOperator)>> {
    if lm.kind() == ModelKind::Cluster1d {
        let len = (lm.sizes()[0] / 2).max(1);
        return Ok(vec![
            (format!("string_a_{len}"), lm.string_a(0, len)?),
            (format!("string_b_{len}"), lm.string_b(0, len)?),
        ]);
    }
    let sub0: Vec<usize> = (0..lm.sublattice().len()).filter(|&j| lm.sublattice()[j] == 0).collect();
    let mut out = vec![("membrane_1".to_string(), lm.product_of_terms(&sub0[..1])?)];
    if sub0.len() >= 2 {
        out.push(("membrane_2".into(), lm.product_of_terms(&sub0[..2])?));
    }
    Ok(out)
}

pub fn cluster(ctx: &mut Ctx, a: ClusterArgs) -> Result<()> {
    let kind = [ModelKind::Cluster1d, ModelKind::Cluster2d, ModelKind::Cluster3d][a.dim as usize - 1];
    let lm = LatticeModel::build(kind, &[a.sizes])?;
    let rates = lm.rates(a.pa, a.pb);
    let obs = cluster_observables(&lm)?;
    let probs = all_sector_probabilities(&lm, &rates)?;
    let mut header = vec!["sector".to_string(), "probability".into()];
    header.extend(obs.iter().map(|o| o.0.clone()));
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    t.meta("dim", a.dim).meta("size", a.sizes).meta("pa", a.pa).meta("pb", a.pb);
    for (g, gen) in lm.generators().iter().enumerate() {
        t.meta(&format!("generator {g}"), &gen.label);
    }
    for (q, p) in probs {
        let mut row = vec![q.to_string(), num(p)];
        for (_, o) in &obs {
            // empty sectors have no conditional state
            row.push(if p > 1e-14 { num(sector_observable_dense(&lm, &rates, &q, o)?) } else { "nan".into() });
        }
        t.row(row);
    }
    ctx.run.write("cluster.csv", &t)?;
    if a.export {
        let text = format!("# cluster {}d, size {}\n{}", a.dim, a.sizes, lm.model().to_text());
        ctx.run.write_text("cluster.model", &text)?;
    }
    Ok(())
}

pub fn rbim(ctx: &mut Ctx, cmd: RbimCmd) -> Result<()> {
    match cmd {
        RbimCmd::Corr { p, l, r, samples, sweeps } => {
            let params = mc_params(ctx, samples, sweeps)?;
            let pt = rbim_point(Ensemble::Nishimori { p }, l, &r, &params, 0)?;
            ctx.run.seed(format!("rbim corr p={p} L={l}"), 0);
            let mut t = Table::new(&["p", "L", "r", "mean", "stderr", "n_disorder", "tau_int", "seed"]);
            mc_meta(&mut t, &params);
            t.meta("units", "beta and energies in units of the bond coupling")
                .meta("beta", pt.beta)
                .meta("energy_per_bond", format!("{} +- {}", pt.energy_per_bond.mean, pt.energy_per_bond.stderr))
                .meta("flagged_samples", pt.flagged_samples);
            for (k, &d) in r.iter().enumerate() {
                let e = pt.correlator(k);
                t.row(vec![num(p), l.to_string(), d.to_string(), num(e.mean), num(e.stderr), e.n.to_string(), num(pt.max_tau_int), params.seed.to_string()]);
            }
            ctx.run.write("rbim_corr.csv", &t)?;
            flagged(ctx, "rbim corr", pt.flagged_samples)
        }
        RbimCmd::Scan { grid, l, clean, samples, sweeps } => {
            let grid = parse_grid(&grid)?;
            let params = mc_params(ctx, samples, sweeps)?;
            let scan = if clean { ising_beta_scan(&grid, &l, &params)? } else { rbim_critical_scan(&grid, &l, &params)? };
            for i in 0..grid.len() {
                for (k, &size) in l.iter().enumerate() {
                    ctx.run.seed(format!("rbim scan x={} L={size}", grid[i]), (i * l.len() + k) as u64 + 1);
                }
            }
            write_scan(ctx, &scan, &params, if clean { "beta" } else { "p" })
        }
    }
}

fn write_scan(ctx: &mut Ctx, scan: &ScanResult, params: &McParams, axis: &str) -> Result<()> {
    let mut t = Table::new(&[axis, "L", "r", "mean", "stderr", "n_disorder", "tau_int", "seed"]);
    mc_meta(&mut t, params);
    let mut ratios = Table::new(&[axis, "L", "ratio", "stderr"]);
    mc_meta(&mut ratios, params);
    let mut flagged_total = 0;
    for (i, &x) in scan.grid.iter().enumerate() {
        for (k, &l) in scan.sizes.iter().enumerate() {
            let pt = &scan.points[i][k];
            flagged_total += pt.flagged_samples;
            for (d, &r) in pt.distances.iter().enumerate() {
                let e = pt.correlator(d);
                t.row(vec![num(x), l.to_string(), r.to_string(), num(e.mean), num(e.stderr), e.n.to_string(), num(pt.max_tau_int), params.seed.to_string()]);
            }
            let r = scan.ratio(i, k);
            ratios.row(vec![num(x), l.to_string(), num(r.mean), num(r.stderr)]);
        }
    }
    let mut cross = Table::new(&["L_small", "L_large", "crossing"]);
    match &scan.crossing {
        Some(cr) => {
            cross.meta("estimate", cr.estimate).meta("ci95_low", cr.ci.0).meta("ci95_high", cr.ci.1).meta("bootstrap_failures", cr.bootstrap_failures);
            for &(a, b, x) in &cr.pairwise {
                cross.row(vec![a.to_string(), b.to_string(), num(x)]);
            }
            println!("crossing {axis} = {:.4} (95% CI {:.4}..{:.4})", cr.estimate, cr.ci.0, cr.ci.1);
        }
        None => {
            cross.meta("estimate", "none");
            println!("no crossing inside the grid");
        }
    }
    ctx.run.write("rbim_scan.csv", &t)?;
    ctx.run.write("rbim_scan_ratio.csv", &ratios)?;
    ctx.run.write("rbim_scan_crossing.csv", &cross)?;
    flagged(ctx, "rbim scan", flagged_total)?;
    if ctx.strict {
        scan.require_crossing()?;
    }
    Ok(())
}

fn wilson_rows(t: &mut Table, w: &WilsonResult, seed: u64) {
    for (s, e) in w.shapes.iter().zip(&w.squared) {
        t.row(vec![
            num(w.p),
            w.l.to_string(),
            format!("{}x{}", s.r1, s.r2),
            num(s.area()),
            num(s.perimeter()),
            num(e.mean),
            num(e.stderr),
            e.n.to_string(),
            num(w.max_tau_int),
            seed.to_string(),
        ]);
    }
}

const WILSON_HEADER: [&str; 10] = ["p", "L", "R", "area", "perimeter", "mean", "stderr", "n_disorder", "tau_int", "seed"];

fn law_name(w: &WilsonResult) -> String {
    w.fit.as_ref().map_or("undetermined".into(), |f| format!("{:?}", f.preferred).to_lowercase())
}

pub fn rpgm(ctx: &mut Ctx, cmd: RpgmCmd) -> Result<()> {
    match cmd {
        RpgmCmd::Wilson { p, l, rmax, samples, sweeps } => {
            let params = mc_params(ctx, samples, sweeps)?;
            let w = rpgm_wilson_loops(p, l, rmax, &params, 0)?;
            ctx.run.seed(format!("rpgm wilson p={p} L={l}"), 0);
            let mut t = Table::new(&WILSON_HEADER);
            mc_meta(&mut t, &params);
            t.meta("beta", w.beta).meta("law", law_name(&w)).meta("flagged_samples", w.flagged_samples);
            wilson_rows(&mut t, &w, params.seed);
            ctx.run.write("rpgm_wilson.csv", &t)?;
            println!("p = {p}: {}", law_name(&w));
            flagged(ctx, "rpgm wilson", w.flagged_samples)
        }
        RpgmCmd::Scan { grid, l, rmax, samples, sweeps } => {
            let grid = parse_grid(&grid)?;
            let params = mc_params(ctx, samples, sweeps)?;
            let scan = rpgm_scan(&grid, l, rmax, &params)?;
            let mut t = Table::new(&WILSON_HEADER);
            mc_meta(&mut t, &params);
            let mut laws = Table::new(&["p", "law", "shapes_used", "flagged_samples"]);
            match scan.transition {
                Some((a, b)) => laws.meta("transition", format!("{a}..{b}")),
                None => laws.meta("transition", "none"),
            };
            let mut flagged_total = 0;
            for (i, w) in scan.points.iter().enumerate() {
                ctx.run.seed(format!("rpgm scan p={}", w.p), i as u64 + 1);
                wilson_rows(&mut t, w, params.seed);
                let used = w.fit.as_ref().map_or(0, |f| f.shapes_used);
                laws.row(vec![num(w.p), law_name(w), used.to_string(), w.flagged_samples.to_string()]);
                flagged_total += w.flagged_samples;
                println!("p = {}: {}", w.p, law_name(w));
            }
            ctx.run.write("rpgm_scan.csv", &t)?;
            ctx.run.write("rpgm_scan_law.csv", &laws)?;
            flagged(ctx, "rpgm scan", flagged_total)?;
            if ctx.strict && scan.transition.is_none() {
                bail!(Failed("no perimeter-to-area transition inside the grid".into()));
            }
            Ok(())
        }
    }
}

fn torus_ground_state(l: usize) -> Result<seplab::gaussian::MajoranaCovariance> {
    Ok(BdgModel::p_ip(l, l).strip_ground_state()?.dense())
}

pub fn pwave(ctx: &mut Ctx, cmd: PwaveCmd) -> Result<()> {
    match cmd {
        PwaveCmd::Modcomm { l, p, m } => {
            let mut t = Table::new(&["L", "p", "m", "J", "J_over_J0", "clipped", "regularized"]);
            t.meta("J0", J0).meta("seed", ctx.seed);
            if m.contains(&Occupation::Random) {
                ctx.run.seed("random occupation", 0);
            }
            for &size in &l {
                let m0 = torus_ground_state(size)?;
                let (a, b, cc) = tripartition(size)?;
                for &kind in &m {
                    let (state, reg) = if p == 0.0 {
                        (m0.clone(), false)
                    } else {
                        let occ = occupation_pattern(kind.name(), size * size, ctx.seed)?;
                        cda_state_covariance(&GibbsKernel::decohered(&m0, p)?, &occ)?
                    };
                    let j = modular_commutator(&state, &a, &b, &cc)?;
                    t.row(vec![size.to_string(), num(p), kind.name().into(), num(j.value), num(j.value / J0), j.clipped.to_string(), reg.to_string()]);
                    println!("L = {size}, p = {p}, m = {}: J/J0 = {:.5}", kind.name(), j.value / J0);
                }
            }
            ctx.run.write("pwave_modcomm.csv", &t)?;
            Ok(())
        }
        PwaveCmd::Espec { lx, ly, p, region, bc_x } => {
            let rows = parse_region(region.as_deref(), ly)?;
            let bx = match bc_x {
                BoundaryArg::Periodic => Boundary::Periodic,
                BoundaryArg::Antiperiodic => Boundary::Antiperiodic,
            };
            let model = BdgModel::p_ip(lx, ly).with_bc(bx, Boundary::Antiperiodic);
            let mut t = Table::new(&["p", "k_x", "index", "nu"]);
            t.meta("Lx", lx).meta("Ly", ly).meta("rows", format!("{}-{}", rows[0], rows[rows.len() - 1]));
            for &pi in &p {
                let m = if pi == 0.0 { model.strip_ground_state()? } else { vacuum_cda_from_pairing(&model, pi)? };
                let spec = m.rows_spectrum(&rows);
                let gap = spectral_gap(&spec);
                t.meta(&format!("gap p={pi}"), gap);
                println!("p = {pi}: min |nu| = {gap:.4e}");
                spectrum_rows(&mut t, pi, &spec);
            }
            ctx.run.write("pwave_espec.csv", &t)?;
            Ok(())
        }
        PwaveCmd::Pairing { l, p } => {
            let model = BdgModel::p_ip(l, l);
            let mut prof = Table::new(&["p", "r", "abs_g"]);
            prof.meta("L", l);
            let mut fits = Table::new(&["p", "law", "xi", "alpha", "aic_exponential", "aic_power", "delta_aic", "points"]);
            fits.meta("L", l);
            for &pi in &p {
                let g = pair_amplitude_profile(&model, pi)?;
                for &(r, v) in &g {
                    prof.row(vec![num(pi), num(r), num(v)]);
                }
                let top = g.iter().map(|x| x.1).fold(0.0, f64::max);
                let f = fit_decay(&g, 1e-13 * top)?;
                let law = format!("{:?}", f.preferred).to_lowercase();
                println!("p = {pi}: {law} (delta AIC {:.1})", f.margin);
                fits.row(vec![num(pi), law, num(1.0 / f.exponential.1), num(f.power.1), num(f.exponential.2), num(f.power.2), num(f.margin), f.points.to_string()]);
            }
            ctx.run.write("pwave_pairing_profile.csv", &prof)?;
            ctx.run.write("pwave_pairing_fit.csv", &fits)?;
            Ok(())
        }
        PwaveCmd::Cda { l, p, m } => {
            let model = BdgModel::p_ip(l, l);
            let m0 = model.strip_ground_state()?.dense();
            let occ = occupation_pattern(m.name(), l * l, ctx.seed)?;
            if m == Occupation::Random {
                ctx.run.seed("random occupation", 0);
            }
            let kernel = GibbsKernel::decohered(&m0, p)?;
            let (cov, reg) = cda_state_covariance(&kernel, &occ)?;
            let th = cda_thouless_state(&kernel, &occ)?;
            let sites = (l * l) as f64;
            let mut t = Table::new(&["L", "p", "m", "energy_per_site", "ground_energy_per_site", "purity_defect", "log_norm", "regularized"]);
            t.meta("seed", ctx.seed).meta("units", "energies in units of the hopping t");
            t.row(vec![
                l.to_string(),
                num(p),
                m.name().into(),
                num(model.energy(&cov)? / sites),
                num(model.energy(&m0)? / sites),
                num(cov.purity_defect()),
                num(th.log_norm),
                reg.to_string(),
            ]);
            ctx.run.write("pwave_cda.csv", &t)?;
            Ok(())
        }
    }
}

/// `strip:<first>-<last>` rows, inclusive; the lower half by default.
pub fn parse_region(region: Option<&str>, ly: usize) -> Result<Vec<usize>> {
    let Some(r) = region else {
        return Ok((0..ly / 2).collect());
    };
    let bad = || usage(format!("bad region '{r}': expected strip:<first>-<last>"));
    let (a, b) = r.strip_prefix("strip:").and_then(|s| s.split_once('-')).ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
    if a > b || b >= ly {
        return Err(usage(format!("region rows {a}-{b} outside 0..{ly}")));
    }
    Ok((a..=b).collect())
}

fn spectrum_rows(t: &mut Table, p: f64, spec: &[(f64, Vec<f64>)]) {
    for (k, nus) in spec {
        for (i, nu) in nus.iter().enumerate() {
            t.row(vec![num(p), num(*k), i.to_string(), num(*nu)]);
        }
    }
}

fn random_even_density(n: usize, rng: &mut impl Rng) -> Result<CMatrix> {
    let d = 1 << n;
    let g = CMatrix::from_fn(d, d, |_, _| c(rng.gen::<f64>() - 0.5) + I * (rng.gen::<f64>() - 0.5));
    let par = FockSpace::new(n)?.parity();
    let rho = &g * g.adjoint();
    let rho = (&rho + &par * &rho * &par) * c(0.5);
    let tr = rho.trace();
    Ok(rho / tr)
}

pub fn double(ctx: &mut Ctx, cmd: DoubleCmd) -> Result<()> {
    match cmd {
        DoubleCmd::Espec { lx, ly, p, weighting } => {
            let w = match weighting {
                WeightingArg::Linear => Weighting::Linear,
                WeightingArg::Sqrt => Weighting::Sqrt,
            };
            let model = BdgModel::p_ip(lx, ly).with_bc(Boundary::Antiperiodic, Boundary::Open);
            let mut t = Table::new(&["p", "k_x", "index", "nu"]);
            t.meta("Lx", lx).meta("Ly", ly).meta("weighting", format!("{w:?}").to_lowercase());
            for &pi in &p {
                let spec = double_state_entanglement_spectrum(&model, pi, w)?;
                let gap = spectral_gap(&spec);
                t.meta(&format!("gap p={pi}"), gap);
                println!("p = {pi}: min |nu| = {gap:.4e}");
                spectrum_rows(&mut t, pi, &spec);
            }
            ctx.run.write("double_espec.csv", &t)?;
            Ok(())
        }
        DoubleCmd::CjCheck => {
            let mut rng = task_rng(ctx.seed, 0);
            ctx.run.seed("random even states", 0);
            let mut t = Table::new(&["modes", "trial", "annihilator", "creator", "left"]);
            t.meta("seed", ctx.seed);
            let mut states = Vec::new();
            let mut worst: f64 = 0.0;
            for n in 1..=3 {
                for trial in 0..3 {
                    let rho = random_even_density(n, &mut rng)?;
                    let r = cj_transport_rules_dense(&rho)?;
                    worst = worst.max(r.max());
                    t.row(vec![n.to_string(), trial.to_string(), num(r.annihilator), num(r.creator), num(r.left)]);
                    states.push(rho);
                }
            }
            let rep = naive_map_counterexample(&states)?;
            let mut naive = Table::new(&["quantity", "value"]);
            naive.meta("p", 0.5);
            for (k, v) in [
                ("naive_idempotence_defect", rep.naive_defect),
                ("transported_idempotence_defect", rep.corrected_defect),
                ("channel_idempotence_defect", rep.channel_defect),
                ("transported_vs_channel", rep.corrected_vs_channel),
            ] {
                naive.row(vec![k.into(), num(v)]);
            }
            ctx.run.write("double_cj_transport.csv", &t)?;
            ctx.run.write("double_cj_naive.csv", &naive)?;
            let ok = worst < DENSE_TOL && rep.channel_defect < DENSE_TOL && rep.corrected_vs_channel < DENSE_TOL;
            println!(
                "{} transport dev {worst:.1e}; naive map defect {:.3}, channel defect {:.1e}",
                if ok { "PASS" } else { "FAIL" },
                rep.naive_defect,
                rep.channel_defect
            );
            if !ok {
                bail!(Failed("transport rules violated".into()));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("0.08:0.14:7").unwrap();
        assert_eq!((g.len(), g[0], g[6]), (7, 0.08, 0.14));
        assert!((g[3] - 0.11).abs() < 1e-15);
        assert_eq!(parse_grid("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("0.1:0.2").unwrap_err().is::<ConfigError>());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn regions() {
        assert_eq!(parse_region(None, 6).unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_region(Some("strip:2-4"), 6).unwrap(), vec![2, 3, 4]);
        assert!(parse_region(Some("strip:4-6"), 6).is_err());
        assert!(parse_region(Some("rows:1-2"), 6).is_err());
    }

    #[test]
    fn model_names() {
        assert_eq!(named_model("cluster1d_3").unwrap().unwrap().model().n_qubits(), 6);
        assert!(named_model("cluster1d_x").is_none());
        assert!(named_model("foo_3").is_none());
        assert!(named_model("model.txt").is_none());
    }
}
