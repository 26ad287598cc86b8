//! Dense-oracle agreement checks at minimal sizes, plus a few invariants.
//! The whole suite runs in a few seconds.

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use seplab::doublestate::{cj_transport_rules_dense, naive_map_counterexample};
use seplab::fock::{projector, FockSpace};
use seplab::gaussian::{
    apply_majorana_channel, cda_state_covariance, modular_commutator_scaled, random_mixed_covariance,
    random_pure_covariance, GibbsKernel,
};
use seplab::gibbs::{beta_of_rate, dense_channel_oracle, dense_thermal_state};
use seplab::linalg::{max_abs, max_abs_real};
use seplab::models::{all_sector_probabilities, sector_observable_dense, string_order_1d_ring, LatticeModel, SectorLabel};
use seplab::rng::task_rng;
use seplab::statmech::{rbim_point, Ensemble, McParams};

use crate::commands::DENSE_TOL;
use crate::output::Table;
use crate::{Ctx, Failed, SelftestArgs};

struct Check {
    module: &'static str,
    op: &'static str,
    inputs: String,
    deviation: f64,
    tolerance: f64,
}

type Outcome = Result<Vec<Check>>;

fn check(module: &'static str, op: &'static str, inputs: impl Into<String>, deviation: f64, tolerance: f64) -> Check {
    Check { module, op, inputs: inputs.into(), deviation, tolerance }
}

fn gibbs_checks(_: &SelftestArgs) -> Outcome {
    let mut out = Vec::new();
    for (name, lm) in [
        ("cluster1d_3", LatticeModel::cluster_1d(3)?),
        ("kitaev_3", LatticeModel::kitaev_chain(3)?),
        ("levingu_3", LatticeModel::levin_gu(3)?),
    ] {
        for (pa, pb) in [(0.3, 0.3), (0.1, 0.45)] {
            let rates = lm.rates(pa, pb);
            let betas: Vec<f64> = rates.iter().map(|&p| beta_of_rate(p)).collect::<Result<_, _>>()?;
            let dev = max_abs(&(dense_channel_oracle(lm.model(), &rates)? - dense_thermal_state(lm.model(), &betas)?));
            out.push(check("gibbs", "channel vs Gibbs state", format!("{name} pa={pa} pb={pb}"), dev, DENSE_TOL));
        }
    }
    Ok(out)
}

fn models_checks(_: &SelftestArgs) -> Outcome {
    let lm = LatticeModel::cluster_1d(3)?;
    let mut out = Vec::new();
    for p in [0.1, 0.35] {
        let total: f64 = all_sector_probabilities(&lm, &lm.rates(p, 0.2))?.iter().map(|x| x.1).sum();
        out.push(check("models", "sector probabilities sum", format!("cluster1d_3 p={p}"), (total - 1.0).abs(), DENSE_TOL));
        let mut dev: f64 = 0.0;
        for len in 1..3 {
            for q in 0..2u8 {
                let got = sector_observable_dense(&lm, &lm.rates(p, 0.2), &SectorLabel(vec![q, 0]), &lm.string_a(0, len)?)?;
                let want = string_order_1d_ring(p, len, 3, q)?.unwrap_or(f64::NAN);
                dev = dev.max((got - want).abs());
            }
        }
        out.push(check("models", "string order vs ring form", format!("cluster1d_3 p={p}"), dev, DENSE_TOL));
    }
    Ok(out)
}

fn gaussian_checks(args: &SelftestArgs) -> Outcome {
    let mut rng = task_rng(0x5e1f, 0);
    let mut out = Vec::new();
    let f = FockSpace::new(3)?;
    let mut dev: f64 = 0.0;
    for i in 0..4 {
        let m = if i % 2 == 0 { random_pure_covariance(3, &mut rng) } else { random_mixed_covariance(3, 0.9, &mut rng) };
        let p = rng.gen_range(0.0..0.5);
        let dense = f.covariance(&f.majorana_channel(&f.gaussian_density(&m)?, p));
        dev = dev.max(max_abs_real(&(dense - apply_majorana_channel(&m, p)?.matrix())));
    }
    out.push(check("gaussian", "channel law vs dense", "3 modes, 4 states", dev, DENSE_TOL));

    let mut dev: f64 = 0.0;
    for n in 2..=4 {
        let fs = FockSpace::new(n)?;
        let kernel = GibbsKernel::decohered(&random_pure_covariance(n, &mut rng), rng.gen_range(0.02..0.45))?;
        let occ: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let (cov, _) = cda_state_covariance(&kernel, &occ)?;
        let dense = fs.covariance(&projector(&fs.evolved_state(&kernel, &occ)?));
        dev = dev.max(max_abs_real(&(dense - cov.matrix())));
    }
    out.push(check("gaussian", "CDA state vs dense", "2-4 modes", dev, 1e-8));

    let prefactor = args.mutate_modcomm.unwrap_or(1.0);
    let f = FockSpace::new(4)?;
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        let m = if i == 0 { random_pure_covariance(4, &mut rng) } else { random_mixed_covariance(4, 0.95, &mut rng) };
        let mut modes: Vec<usize> = (0..4).collect();
        modes.shuffle(&mut rng);
        let (a, b, cc) = (&modes[0..1], &modes[1..2], &modes[2..4]);
        let dense = f.modular_commutator(&f.gaussian_density(&m)?, a, b, cc, 1e-300);
        dev = dev.max((dense - modular_commutator_scaled(&m, a, b, cc, prefactor)?.value).abs());
    }
    out.push(check("gaussian", "modular commutator vs dense", "4 modes, 3 states", dev, 1e-6));
    Ok(out)
}

fn doublestate_checks(_: &SelftestArgs) -> Outcome {
    let mut rng = task_rng(0x5e1f, 1);
    let mut states = Vec::new();
    let mut dev: f64 = 0.0;
    for n in 1..=2 {
        let m = random_mixed_covariance(n, 0.9, &mut rng);
        let rho = FockSpace::new(n)?.gaussian_density(&m)?;
        dev = dev.max(cj_transport_rules_dense(&rho)?.max());
        states.push(rho);
    }
    let rep = naive_map_counterexample(&states)?;
    Ok(vec![
        check("doublestate", "transport rules", "1-2 modes", dev, DENSE_TOL),
        check("doublestate", "transported map vs channel", "1 mode, p=0.5", rep.corrected_vs_channel, DENSE_TOL),
        check("doublestate", "channel idempotence", "1 mode, p=0.5", rep.channel_defect, DENSE_TOL),
    ])
}

fn statmech_checks(_: &SelftestArgs) -> Outcome {
    let params = McParams { samples: 40, sweeps: 200, blocks: 20, seed: 3, ..Default::default() };
    let p = 0.1;
    let pt = rbim_point(Ensemble::Nishimori { p }, 4, &[1, 2], &params, 0)?;
    // energy on the Nishimori line is exact; report the deviation in σ
    let sigmas = pt.energy_per_bond.sigmas_from(-(1.0 - 2.0 * p));
    Ok(vec![check("statmech", "Nishimori energy (σ)", "L=4 p=0.1, 40 samples", sigmas, 4.0)])
}

pub fn run(ctx: &mut Ctx, args: SelftestArgs) -> Result<()> {
    let suites: [(&str, fn(&SelftestArgs) -> Outcome); 5] = [
        ("gibbs", gibbs_checks),
        ("models", models_checks),
        ("gaussian", gaussian_checks),
        ("doublestate", doublestate_checks),
        ("statmech", statmech_checks),
    ];
    let mut t = Table::new(&["module", "op", "inputs", "deviation", "tolerance", "status"]);
    if let Some(f) = args.mutate_modcomm {
        t.meta("mutation", format!("modular-commutator prefactor x{f}"));
    }
    let mut failures = Vec::new();
    for (name, suite) in suites {
        let checks = match suite(&args) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{name}: error: {e:#}"));
                println!("FAIL {name}: error: {e:#}");
                continue;
            }
        };
        for c in checks {
            let ok = c.deviation <= c.tolerance;
            let status = if ok { "PASS" } else { "FAIL" };
            println!("{status} {} / {} [{}]: deviation {:.2e} (tolerance {:.0e})", c.module, c.op, c.inputs, c.deviation, c.tolerance);
            if !ok {
                failures.push(format!("{} / {} [{}]: deviation {:.3e}", c.module, c.op, c.inputs, c.deviation));
            }
            t.row(vec![c.module.into(), c.op.into(), c.inputs, format!("{:.3e}", c.deviation), format!("{:.0e}", c.tolerance), status.into()]);
        }
    }
    ctx.run.write("selftest.csv", &t)?;
    if !failures.is_empty() {
        bail!(Failed(format!("{} check(s) failed: {}", failures.len(), failures.join("; "))));
    }
    Ok(())
}
